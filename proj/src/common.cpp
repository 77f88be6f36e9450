#include "emitterforge/common.hpp"

#include <cmath>

namespace emitterforge {

void require_finite(double value, const char* what) {
  if (!std::isfinite(value)) throw DomainError(std::string(what) + " must be finite");
}

void require_nonnegative(double value, const char* what) {
  require_finite(value, what);
  if (value < 0.0) throw DomainError(std::string(what) + " must be >= 0");
}

void require_positive(double value, const char* what) {
  require_finite(value, what);
  if (value <= 0.0) throw DomainError(std::string(what) + " must be > 0");
}

}  // namespace emitterforge
