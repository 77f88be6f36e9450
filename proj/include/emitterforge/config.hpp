#pragma once

// INI-style run configuration. Quantities accept unit suffixes ("110 uW",
// "10 ns", "13000 cps") and are stored in SI; a bare number is taken as SI.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>

#include "emitterforge/defectstats.hpp"
#include "emitterforge/implantation.hpp"
#include "emitterforge/photonsim.hpp"

namespace emitterforge::config {

enum class Dimension { None, Length, Time, Power, Rate, Current, RatePerPower };

/// Parses "<number>[ ]<unit>" into SI. Throws ConfigError naming `key`.
double parse_quantity(const std::string& text, Dimension dim, const std::string& key);

struct RunConfig {
  implantation::PatternSpec pattern;
  implantation::BeamConfig beam;
  defectstats::CreationModel creation;
  photonsim::EmitterModel emitter;
  photonsim::BackgroundModel background;
  photonsim::DetectorModel detector_a;
  photonsim::DetectorModel detector_b;
  double split_ratio = 0.5;
  double power = 110e-6;    // W
  double duration = 1.0;    // s per site
  double bin_width = 1e-9;  // s
  double window = 250e-9;   // s
  double resolution = 1e-12;
  std::optional<std::uint64_t> seed;
  int jobs = 1;

  /// Canonical "section.key=value" listing of every consumed setting.
  std::string canonical;
  std::uint64_t hash() const;
};

/// Unknown sections or keys are rejected.
RunConfig parse_run_config(std::istream& in);
RunConfig load_run_config(const std::filesystem::path& path);

/// Only the [pattern] section (other sections are ignored).
implantation::PatternSpec parse_pattern_spec(std::istream& in);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& text);

}  // namespace emitterforge::config
