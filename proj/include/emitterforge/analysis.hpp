#pragma once

// Emitter counting from calibrated count rates, and the curve fits used to
// characterize spots: saturation, PL decay, confocal line scans, spectra.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "emitterforge/photonsim.hpp"

namespace emitterforge::analysis {

struct SpotMeasurement {
  std::string label;
  double rate = 0.0;        // cps, I_i
  double background = 0.0;  // cps, B
  std::optional<int> n_emitters_g2;
  std::optional<int> n_estimated;
};

struct Calibration {
  double i_single = 0.0;
  bool zero_signal = false;
};

/// sum(I_i - B) / sum(N_i) over spots with n_emitters_g2 set.
Calibration calibrate_single_rate(std::span<const SpotMeasurement> spots, double background);

/// round-half-away-from-zero((rate - background) / i_single), floored at 0.
int count_emitters(double rate, double background, double i_single);

struct SaturationPoint {
  double power = 0.0;  // W
  double rate = 0.0;   // cps
  double sigma = 0.0;  // cps; 0 = Poisson sqrt(rate t) / t
};

struct SaturationFitResult {
  double sat_rate = 0.0;
  double sat_power = 0.0;
  double bg_slope = 0.0;      // cps / W
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();  // (sat_rate, sat_power, bg_slope), SI
  double reduced_chi2 = 0.0;
  bool converged = false;
  bool unidentifiable = false;  // no saturating component in the data

  double sigma(int i) const { return std::sqrt(std::max(0.0, covariance(i, i))); }
};

/// I(P) = sat_rate / (1 + sat_power / P) + bg_slope P
double saturation_model(double power, double sat_rate, double sat_power, double bg_slope);

SaturationFitResult fit_saturation(std::span<const SaturationPoint> points, double integration_time = 1.0);

struct DecayFit {
  double amp_fast = 0.0;
  double tau_fast = 0.0;
  double amp_slow = 0.0;
  double tau_slow = 0.0;
  double baseline = 0.0;
  double reduced_chi2 = 0.0;
  bool single_exponential = false;
  bool no_fit = false;
  bool converged = false;
};

/// Bi-exponential plus constant on the bins after the histogram maximum.
DecayFit fit_decay(const photonsim::DecayHistogram& histogram);

struct GaussianPeak {
  double center = 0.0;  // m
  double amplitude = 0.0;
  double fwhm = 0.0;    // m
};

struct LineScanFit {
  std::vector<GaussianPeak> peaks;  // sorted by center
  double baseline = 0.0;
  double noise_sigma = 0.0;
  bool converged = false;
};

struct ProfilePoint {
  double position = 0.0;  // m
  double rate = 0.0;
};

LineScanFit fit_line_scan(std::span<const ProfilePoint> profile);

struct Spectrum {
  struct Sample {
    double wavelength = 0.0;  // m
    double intensity = 0.0;
  };
  std::vector<Sample> samples;
  double zpl_wavelength = 1278e-9;

  void validate() const;
};

struct DebyeWallerResult {
  double dw = 0.0;
  double zpl_area = 0.0;  // in units of normalized intensity x nm
  double psb_area = 0.0;
  bool zpl_in_noise = false;
  bool converged = false;
};

/// ZPL + psb_components Gaussians over a linear baseline; DW is the ZPL share
/// of the fitted component areas.
DebyeWallerResult debye_waller(const Spectrum& spectrum, double zpl_halfwidth, int psb_components = 3);

/// Baseline-subtracted integration: ZPL window share of the total.
double debye_waller_window(const Spectrum& spectrum, double zpl_halfwidth);

// label,rate_cps,background_cps,n_g2,n_estimated (empty cell = unset)
void write_spot_table(std::ostream& out, std::span<const SpotMeasurement> spots);
std::vector<SpotMeasurement> read_spot_table(std::istream& in);

// wavelength_nm,intensity
void write_spectrum_csv(std::ostream& out, const Spectrum& spectrum);
Spectrum read_spectrum_csv(std::istream& in, double zpl_wavelength);

// power_uW,rate_cps[,sigma_cps]
std::vector<SaturationPoint> read_saturation_csv(std::istream& in);
void write_saturation_csv(std::ostream& out, std::span<const SaturationPoint> points);

// t_ns,counts
void write_decay_csv(std::ostream& out, const photonsim::DecayHistogram& histogram);
photonsim::DecayHistogram read_decay_csv(std::istream& in);

}  // namespace emitterforge::analysis
