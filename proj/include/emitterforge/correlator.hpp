#pragma once

// Two-channel g2(tau) estimation by full (multi-stop) correlation, the
// antibunching model fit, and background correction.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "emitterforge/timetag.hpp"

namespace emitterforge::correlator {

struct G2Bin {
  double tau = 0.0;    // s, bin centre
  double g2 = 0.0;
  double sigma = 0.0;
  std::int64_t raw = 0;
};

struct G2Histogram {
  double bin_width = 1e-9;
  double window = 250e-9;
  std::vector<G2Bin> bins;  // 2 half_bins + 1, centred on tau = 0
  double rate_a = 0.0;
  double rate_b = 0.0;
  double total_time = 0.0;
  bool window_exceeds_duration = false;
  bool below_zero = false;  // set by background_correct

  std::size_t centre_index() const { return bins.size() / 2; }
};

/// Binning of integer tick delays. Bin k holds delays d with
/// sign(d) * floor(|d| / w + 1/2) == k, so bins are mirror-symmetric.
struct Binning {
  std::int64_t width_ticks = 1;
  std::int64_t half_bins = 0;

  static Binning make(double bin_width, double window, double resolution);
  std::size_t size() const { return static_cast<std::size_t>(2 * half_bins + 1); }
  /// Largest |delay| (ticks) that lands in a bin.
  std::int64_t max_delay() const;
  /// Bin offset k for a delay, or nullopt outside the window.
  std::optional<std::int64_t> bin_of(std::int64_t delay) const;
};

/// Raw coincidence counts; merging partial results is associative.
struct RawCorrelation {
  Binning binning;
  std::vector<std::int64_t> counts;

  explicit RawCorrelation(Binning b) : binning(b), counts(b.size(), 0) {}
  RawCorrelation& operator+=(const RawCorrelation& other);
};

/// Accumulates all B delays relative to every A tag (both sorted).
void accumulate(std::span<const std::int64_t> a, std::span<const std::int64_t> b, RawCorrelation& into);

/// Splits A into `chunks` equal time slices; each slice sees the B tags of its
/// slice padded by the window on both sides. Slices run on up to `threads`
/// threads; the result is identical to a single-chunk evaluation.
RawCorrelation correlate_raw(std::span<const std::int64_t> a, std::span<const std::int64_t> b,
                             const Binning& binning, std::int64_t tick_limit, int chunks = 1,
                             int threads = 1);

/// Normalized g2 from raw counts: raw / (N_a N_b w / T).
G2Histogram normalize(const RawCorrelation& raw, std::size_t count_a, std::size_t count_b,
                      double resolution, double total_time);

G2Histogram correlate(std::span<const std::int64_t> a, std::span<const std::int64_t> b,
                      double resolution, double total_time, double bin_width = 1e-9,
                      double window = 250e-9, int chunks = 1, int threads = 1);

/// Channels 0 (A) and 1 (B) of a stream; total time is the stream duration.
G2Histogram correlate(const TimeTagStream& stream, double bin_width = 1e-9, double window = 250e-9,
                      int chunks = 1, int threads = 1);

struct G2Params {
  double n_emitters = 1.0;
  double a = 0.0;
  double tau1 = 10e-9;
  double tau2 = 100e-9;
};

/// g2(tau) = (N-1)/N + (1/N) [1 - (1+a) exp(-|tau|/tau1) + a exp(-|tau|/tau2)]
double g2_model(double tau, const G2Params& p);

/// Mean of g2_model over the bin [tau - width/2, tau + width/2].
double g2_model_binned(double tau, double width, const G2Params& p);

struct G2Fit {
  double n_emitters = 0.0;
  double a = 0.0;
  double tau1 = 0.0;
  double tau2 = 0.0;
  double g2_zero = 0.0;
  double g2_zero_sigma = 0.0;
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Zero();  // over (N, a, tau1, tau2), SI units
  double reduced_chi2 = 0.0;
  bool converged = false;
  bool no_dip = false;
  int iterations = 0;

  double sigma(int i) const { return std::sqrt(std::max(0.0, covariance(i, i))); }
  G2Params params() const { return {n_emitters, a, tau1, tau2}; }
};

/// Weighted fit of g2_model with N >= 1, a >= 0, tau1, tau2 > 0. A histogram
/// without coincidences gives converged = false and no_dip = true.
G2Fit fit_g2(const G2Histogram& hist, std::optional<G2Params> init = std::nullopt);

struct Correction {
  double value = 0.0;
  double sigma = 0.0;
  bool below_zero = false;
  bool unreliable = false;  // rho under the floor
};

/// g_corr = (g - (1 - rho^2)) / rho^2, sigma / rho^2. No clamping.
Correction background_correct(double g2, double sigma, double rho, double rho_floor = 0.1);
G2Histogram background_correct(const G2Histogram& hist, double rho, double rho_floor = 0.1,
                               bool* unreliable = nullptr);

struct RhoEstimate {
  double rho = 0.0;
  bool degenerate = false;  // background exceeds spot rate
};

/// rho = (I - B) / I.
RhoEstimate rho_from_rates(double spot_rate, double background_rate);

struct EmitterBound {
  int max_emitters = 0;
  bool unbounded = false;
};

/// Largest N with (N-1)/N <= g2(0).
EmitterBound max_emitters_from_g2(double g2_zero);

/// tau_ns,g2,sigma,raw
void write_histogram_csv(std::ostream& out, const G2Histogram& hist);
G2Histogram read_histogram_csv(std::istream& in);

/// param value sigma lines.
void write_fit_report(std::ostream& out, const G2Fit& fit, std::optional<Correction> corrected = {});

}  // namespace emitterforge::correlator
