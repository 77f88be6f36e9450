#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace emitterforge {

inline constexpr double kElementaryCharge = 1.602176634e-19;  // C
inline constexpr double kFwhmToSigma = 2.3548200450309493;    // 2 sqrt(2 ln 2)

/// Invalid numeric input to a pure function (negative rate, NaN, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Bad or missing configuration; carries the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed data file; offset is the byte (or line) position of the problem.
class FormatError : public std::runtime_error {
 public:
  /// `offset` is a byte offset for binary data and a line number for text.
  FormatError(std::uint64_t offset, const std::string& what, const char* unit = "offset")
      : std::runtime_error(what + " at " + unit + " " + std::to_string(offset)), offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent sub-seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return mix_seed(mix_seed(seed) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

void require_finite(double value, const char* what);
void require_nonnegative(double value, const char* what);
void require_positive(double value, const char* what);

}  // namespace emitterforge
