#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace emitterforge::cli {

enum ExitCode : int { kOk = 0, kConfig = 2, kIo = 3, kFormat = 4, kFit = 5 };

int run(int argc, char** argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace emitterforge::cli
