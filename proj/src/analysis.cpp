#include "emitterforge/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>

#include "emitterforge/common.hpp"
#include "emitterforge/csv.hpp"
#include "emitterforge/fitkit.hpp"

namespace emitterforge::analysis {

using fitkit::Vector;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const double kSqrt2Pi = std::sqrt(2.0 * std::numbers::pi);

double gaussian(double x, double center, double amplitude, double sigma) {
  const double u = (x - center) / sigma;
  return amplitude * std::exp(-0.5 * u * u);
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

/// Robust noise scale from first differences (insensitive to smooth peaks).
double difference_noise(std::span<const double> y) {
  if (y.size() < 3) return 0.0;
  std::vector<double> d(y.size() - 1);
  for (std::size_t i = 0; i + 1 < y.size(); ++i) d[i] = std::abs(y[i + 1] - y[i]);
  return 1.4826 * median(d) / std::sqrt(2.0);
}

}  // namespace

Calibration calibrate_single_rate(std::span<const SpotMeasurement> spots, double background) {
  require_nonnegative(background, "background");
  double signal = 0.0;
  long long emitters = 0;
  for (const auto& s : spots) {
    if (!s.n_emitters_g2) continue;
    if (*s.n_emitters_g2 < 0) throw DomainError("n_emitters_g2 must be >= 0");
    signal += s.rate - background;
    emitters += *s.n_emitters_g2;
  }
  if (emitters == 0) throw DomainError("calibrate_single_rate: no emitters counted by g2");
  Calibration c;
  c.i_single = signal / static_cast<double>(emitters);
  c.zero_signal = c.i_single <= 0.0;
  return c;
}

int count_emitters(double rate, double background, double i_single) {
  require_positive(i_single, "i_single");
  require_finite(rate, "rate");
  require_finite(background, "background");
  const double n = std::round((rate - background) / i_single);  // half away from zero
  return n <= 0.0 ? 0 : static_cast<int>(n);
}

double saturation_model(double power, double sat_rate, double sat_power, double bg_slope) {
  if (power <= 0.0) return 0.0;
  return sat_rate / (1.0 + sat_power / power) + bg_slope * power;
}

SaturationFitResult fit_saturation(std::span<const SaturationPoint> points, double integration_time) {
  if (points.size() < 4) throw DomainError("fit_saturation needs >= 4 points");
  require_positive(integration_time, "integration_time");
  std::vector<SaturationPoint> pts(points.begin(), points.end());
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.power < b.power; });
  for (const auto& p : pts) {
    require_positive(p.power, "power");
    require_nonnegative(p.rate, "rate");
  }
  if (pts.back().power < 10.0 * pts.front().power)
    throw DomainError("fit_saturation needs powers spanning a factor of 10");

  // Work in uW and kcps.
  constexpr double uW = 1e-6, kcps = 1e3;
  std::vector<double> x, y, s;
  for (const auto& p : pts) {
    x.push_back(p.power / uW);
    y.push_back(p.rate / kcps);
    const double sigma = p.sigma > 0.0 ? p.sigma
                                       : std::sqrt(std::max(p.rate * integration_time, 1.0)) / integration_time;
    s.push_back(sigma / kcps);
  }
  const std::size_t n = x.size();
  const double slope0 = std::max(0.0, (y[n - 1] - y[n - 2]) / (x[n - 1] - x[n - 2]));
  double plateau = 0.0;
  for (std::size_t i = 0; i < n; ++i) plateau = std::max(plateau, y[i] - slope0 * x[i]);
  plateau = std::max(plateau, 1e-6);
  double half_power = x[n / 2];
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] - slope0 * x[i] >= 0.5 * plateau) {
      if (i == 0) {
        half_power = x[0];
      } else {
        const double y0 = y[i - 1] - slope0 * x[i - 1], y1 = y[i] - slope0 * x[i];
        const double f = (0.5 * plateau - y0) / std::max(y1 - y0, 1e-300);
        half_power = x[i - 1] + f * (x[i] - x[i - 1]);
      }
      break;
    }
  }

  fitkit::FitProblem problem;
  problem.initial = Vector(3);
  problem.initial << plateau, std::max(half_power, 1e-6), slope0;
  problem.lower = Vector(3);
  problem.lower << 0.0, 1e-9, 0.0;
  problem.upper = Vector::Constant(3, kInf);
  problem.residual = [&](const Vector& q) {
    Vector r(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
      r[static_cast<Eigen::Index>(i)] = (saturation_model(x[i], q[0], q[1], q[2]) - y[i]) / s[i];
    return r;
  };
  const auto out = fitkit::least_squares(problem);

  SaturationFitResult fit;
  fit.sat_rate = out.params[0] * kcps;
  fit.sat_power = out.params[1] * uW;
  fit.bg_slope = out.params[2] * kcps / uW;
  const Eigen::Vector3d scale(kcps, uW, kcps / uW);
  fit.covariance = scale.asDiagonal() * out.covariance * scale.asDiagonal();
  fit.reduced_chi2 = out.reduced_chi2;
  fit.converged = out.converged;
  const double max_rate = *std::max_element(y.begin(), y.end()) * kcps;
  fit.unidentifiable = fit.sat_rate <= 1e-6 * std::max(max_rate, 1.0) ||
                       (fit.sigma(0) > 0.0 && fit.sat_rate < 2.0 * fit.sigma(0)) ||
                       fit.sat_power > 1e3 * pts.back().power;
  return fit;
}

DecayFit fit_decay(const photonsim::DecayHistogram& histogram) {
  DecayFit fit;
  const auto& c = histogram.counts;
  if (c.empty() || histogram.total() == 0) {
    fit.no_fit = true;
    return fit;
  }
  const auto peak = static_cast<std::size_t>(std::max_element(c.begin(), c.end()) - c.begin());
  if (c.size() - peak < 21) {
    fit.no_fit = true;
    return fit;
  }
  constexpr double ns = 1e-9;
  const double w = histogram.bin_width / ns;
  std::vector<double> t, y, s;
  for (std::size_t i = peak; i < c.size(); ++i) {
    t.push_back(static_cast<double>(i - peak) * w);
    y.push_back(static_cast<double>(c[i]));
    s.push_back(std::sqrt(std::max<double>(static_cast<double>(c[i]), 1.0)));
  }
  const std::size_t n = t.size();
  std::vector<double> tail(y.end() - static_cast<std::ptrdiff_t>(std::max<std::size_t>(n / 10, 1)), y.end());
  const double base0 = median(tail);
  const double height = std::max(y[0] - base0, 1.0);
  double tau0 = w;
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] - base0 < height / std::numbers::e) {
      tau0 = std::max(t[i], w);
      break;
    }
  }
  const double span = t.back() + w;

  auto single_fit = [&]() {
    fitkit::FitProblem p;
    p.initial = Vector(3);
    p.initial << height, tau0, base0;
    p.lower = Vector(3);
    p.lower << 0.0, 0.1 * w, 0.0;
    p.upper = Vector(3);
    p.upper << kInf, 10.0 * span, kInf;
    p.residual = [&](const Vector& q) {
      Vector r(static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i)
        r[static_cast<Eigen::Index>(i)] = (q[0] * std::exp(-t[i] / q[1]) + q[2] - y[i]) / s[i];
      return r;
    };
    return fitkit::least_squares(p);
  };

  fitkit::FitProblem problem;
  problem.initial = Vector(5);
  problem.initial << 0.7 * height, tau0, 0.3 * height, 5.0 * tau0, base0;
  problem.lower = Vector(5);
  problem.lower << 0.0, 0.1 * w, 0.0, 0.1 * w, 0.0;
  problem.upper = Vector(5);
  problem.upper << kInf, 10.0 * span, kInf, 10.0 * span, kInf;
  problem.residual = [&](const Vector& q) {
    Vector r(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
      r[static_cast<Eigen::Index>(i)] =
          (q[0] * std::exp(-t[i] / q[1]) + q[2] * std::exp(-t[i] / q[3]) + q[4] - y[i]) / s[i];
    return r;
  };
  auto out = fitkit::least_squares(problem);
  Vector q = out.params;
  Vector sig = out.sigmas();
  if (q[1] > q[3]) {
    std::swap(q[0], q[2]);
    std::swap(q[1], q[3]);
    std::swap(sig[0], sig[2]);
  }
  const double amp_total = q[0] + q[2];
  const bool degenerate = q[3] / q[1] < 1.5 || q[0] < 1e-3 * amp_total || q[2] < 1e-3 * amp_total ||
                          (sig[0] > 0.0 && q[0] < 2.0 * sig[0]) || (sig[2] > 0.0 && q[2] < 2.0 * sig[2]);
  if (degenerate) {
    const auto single = single_fit();
    fit.single_exponential = true;
    fit.amp_fast = single.params[0];
    fit.tau_fast = single.params[1] * ns;
    fit.baseline = single.params[2];
    fit.reduced_chi2 = single.reduced_chi2;
    fit.converged = single.converged;
    return fit;
  }
  fit.amp_fast = q[0];
  fit.tau_fast = q[1] * ns;
  fit.amp_slow = q[2];
  fit.tau_slow = q[3] * ns;
  fit.baseline = q[4];
  fit.reduced_chi2 = out.reduced_chi2;
  fit.converged = out.converged;
  return fit;
}

LineScanFit fit_line_scan(std::span<const ProfilePoint> profile) {
  LineScanFit fit;
  if (profile.size() < 5) throw DomainError("fit_line_scan needs at least 5 samples");
  constexpr double um = 1e-6;
  std::vector<double> x, y;
  for (const auto& p : profile) {
    x.push_back(p.position / um);
    y.push_back(p.rate);
  }
  for (std::size_t i = 1; i < x.size(); ++i)
    if (!(x[i] > x[i - 1])) throw DomainError("line-scan positions must be strictly increasing");

  const std::size_t n = x.size();
  const double baseline0 = median(y);
  const double noise = difference_noise(y);
  const double range = *std::max_element(y.begin(), y.end()) - *std::min_element(y.begin(), y.end());
  const double threshold = baseline0 + 3.0 * noise + 1e-9 * range;
  fit.baseline = baseline0;
  fit.noise_sigma = noise;

  struct Seed {
    std::size_t index;
    double height;
    double half_width;
  };
  std::vector<Seed> seeds;
  constexpr std::size_t reach = 2;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(y[i] > threshold)) continue;
    bool is_max = true;
    for (std::size_t j = i > reach ? i - reach : 0; j <= std::min(i + reach, n - 1) && is_max; ++j)
      if (j != i && (y[j] > y[i] || (y[j] == y[i] && j < i))) is_max = false;
    if (!is_max) continue;
    const double half = baseline0 + 0.5 * (y[i] - baseline0);
    std::size_t l = i, r = i;
    while (l > 0 && y[l - 1] > half) --l;
    while (r + 1 < n && y[r + 1] > half) ++r;
    const double dx = x[std::min(i + 1, n - 1)] - x[i > 0 ? i - 1 : 0];
    seeds.push_back({i, y[i] - baseline0, std::max(0.5 * (x[r] - x[l]), 0.25 * dx)});
  }
  // A taller seed absorbs any seed lying within its half-maximum region.
  std::sort(seeds.begin(), seeds.end(), [](const Seed& a, const Seed& b) { return a.height > b.height; });
  std::vector<Seed> kept;
  for (const auto& s : seeds) {
    const bool shadowed = std::any_of(kept.begin(), kept.end(), [&](const Seed& k) {
      return std::abs(x[s.index] - x[k.index]) <= k.half_width;
    });
    if (!shadowed) kept.push_back(s);
  }
  if (kept.empty()) {
    fit.converged = true;
    return fit;
  }
  std::sort(kept.begin(), kept.end(), [](const Seed& a, const Seed& b) { return a.index < b.index; });

  const auto m = static_cast<Eigen::Index>(kept.size());
  const double dx_min = (x.back() - x.front()) / static_cast<double>(n - 1);
  fitkit::FitProblem problem;
  problem.initial = Vector(1 + 3 * m);
  problem.lower = Vector(1 + 3 * m);
  problem.upper = Vector(1 + 3 * m);
  problem.initial[0] = baseline0;
  problem.lower[0] = -kInf;
  problem.upper[0] = kInf;
  for (Eigen::Index k = 0; k < m; ++k) {
    const auto& s = kept[static_cast<std::size_t>(k)];
    const double sigma0 = s.half_width * 2.0 / kFwhmToSigma;
    problem.initial.segment(1 + 3 * k, 3) << x[s.index], s.height, std::max(sigma0, 0.5 * dx_min);
    problem.lower.segment(1 + 3 * k, 3) << x.front(), 0.0, 0.25 * dx_min;
    problem.upper.segment(1 + 3 * k, 3) << x.back(), kInf, x.back() - x.front();
  }
  const double weight = 1.0 / std::max(noise, 1e-12 * std::max(range, 1.0));
  problem.residual = [&](const Vector& q) {
    Vector r(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      double model = q[0];
      for (Eigen::Index k = 0; k < m; ++k) model += gaussian(x[i], q[1 + 3 * k], q[2 + 3 * k], q[3 + 3 * k]);
      r[static_cast<Eigen::Index>(i)] = (model - y[i]) * weight;
    }
    return r;
  };
  const auto out = fitkit::least_squares(problem);
  fit.converged = out.converged;
  fit.baseline = out.params[0];
  for (Eigen::Index k = 0; k < m; ++k) {
    fit.peaks.push_back({out.params[1 + 3 * k] * um, out.params[2 + 3 * k], out.params[3 + 3 * k] * kFwhmToSigma * um});
  }
  std::sort(fit.peaks.begin(), fit.peaks.end(), [](const auto& a, const auto& b) { return a.center < b.center; });
  return fit;
}

void Spectrum::validate() const {
  if (samples.size() < 2) throw DomainError("spectrum needs at least two samples");
  for (std::size_t i = 1; i < samples.size(); ++i)
    if (!(samples[i].wavelength > samples[i - 1].wavelength))
      throw DomainError("spectrum wavelengths must be strictly increasing");
  require_positive(zpl_wavelength, "zpl_wavelength");
}

DebyeWallerResult debye_waller(const Spectrum& spectrum, double zpl_halfwidth, int psb_components) {
  spectrum.validate();
  require_positive(zpl_halfwidth, "zpl_halfwidth");
  if (psb_components < 0) throw DomainError("psb_components must be >= 0");
  constexpr double nm = 1e-9;
  const double zpl = spectrum.zpl_wavelength / nm;
  const double hw = zpl_halfwidth / nm;
  std::vector<double> x, y;
  double peak = 0.0;
  for (const auto& s : spectrum.samples) peak = std::max(peak, std::abs(s.intensity));
  if (peak == 0.0) peak = 1.0;
  for (const auto& s : spectrum.samples) {
    x.push_back(s.wavelength / nm);
    y.push_back(s.intensity / peak);
  }
  if (zpl < x.front() || zpl > x.back()) throw DomainError("ZPL wavelength outside the spectrum");
  const std::size_t n = x.size();
  const double dx = (x.back() - x.front()) / static_cast<double>(n - 1);

  // Seeds: baseline from the blue edge, ZPL from the window maximum, PSB
  // components spread evenly over the red side.
  const double base0 = std::min(y.front(), y.back());
  double zpl_amp0 = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (std::abs(x[i] - zpl) <= hw) zpl_amp0 = std::max(zpl_amp0, y[i] - base0);
  const double red_lo = std::min(zpl + hw, x.back());
  const double red_span = std::max(x.back() - red_lo, dx);
  double red_mean = 0.0;
  int red_n = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] > red_lo) {
      red_mean += y[i] - base0;
      ++red_n;
    }
  red_mean = red_n > 0 ? std::max(red_mean / red_n, 0.0) : 0.0;

  const Eigen::Index np = 2 + 3 * (1 + psb_components);
  fitkit::FitProblem problem;
  problem.initial = Vector(np);
  problem.lower = Vector(np);
  problem.upper = Vector(np);
  problem.initial.head(2) << base0, 0.0;
  problem.lower.head(2) << -kInf, -kInf;
  problem.upper.head(2) << kInf, kInf;
  problem.initial.segment(2, 3) << zpl, std::max(zpl_amp0, 1e-6), std::max(hw / 2.0, dx);
  problem.lower.segment(2, 3) << zpl - hw, 0.0, 0.25 * dx;
  problem.upper.segment(2, 3) << zpl + hw, kInf, std::max(hw, 0.5 * dx);
  for (int k = 0; k < psb_components; ++k) {
    const double centre = red_lo + red_span * (k + 0.5) / psb_components;
    const Eigen::Index o = 5 + 3 * k;
    problem.initial.segment(o, 3) << centre, std::max(red_mean, 1e-6), red_span / (2.0 * psb_components);
    problem.lower.segment(o, 3) << red_lo, 0.0, std::max(hw / 2.0, 0.5 * dx);
    problem.upper.segment(o, 3) << x.back(), kInf, x.back() - x.front();
  }
  problem.initial = problem.initial.cwiseMax(problem.lower).cwiseMin(problem.upper);
  problem.residual = [&](const Vector& q) {
    Vector r(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      double model = q[0] + q[1] * (x[i] - zpl);
      for (Eigen::Index c = 0; c <= psb_components; ++c)
        model += gaussian(x[i], q[2 + 3 * c], q[3 + 3 * c], q[4 + 3 * c]);
      r[static_cast<Eigen::Index>(i)] = model - y[i];
    }
    return r;
  };
  problem.max_iterations = 500;
  const auto out = fitkit::least_squares(problem);

  DebyeWallerResult res;
  res.converged = out.converged;
  const auto& q = out.params;
  res.zpl_area = q[3] * q[4] * kSqrt2Pi;
  for (int k = 0; k < psb_components; ++k) res.psb_area += q[6 + 3 * k] * q[7 + 3 * k] * kSqrt2Pi;
  const double total = res.zpl_area + res.psb_area;
  res.dw = total > 0.0 ? res.zpl_area / total : 0.0;
  const double rms = std::sqrt(out.cost / static_cast<double>(n));
  const auto sig = out.sigmas();
  res.zpl_in_noise = q[3] < 3.0 * rms || (sig[3] > 0.0 && q[3] < 3.0 * sig[3]);
  return res;
}

double debye_waller_window(const Spectrum& spectrum, double zpl_halfwidth) {
  spectrum.validate();
  require_positive(zpl_halfwidth, "zpl_halfwidth");
  const auto& s = spectrum.samples;
  const double x0 = s.front().wavelength, x1 = s.back().wavelength;
  const double y0 = s.front().intensity, y1 = s.back().intensity;
  auto net = [&](std::size_t i) {
    return s[i].intensity - (y0 + (y1 - y0) * (s[i].wavelength - x0) / (x1 - x0));
  };
  double zpl = 0.0, total = 0.0;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    const double area = 0.5 * (net(i) + net(i + 1)) * (s[i + 1].wavelength - s[i].wavelength);
    total += area;
    const double mid = 0.5 * (s[i].wavelength + s[i + 1].wavelength);
    if (std::abs(mid - spectrum.zpl_wavelength) <= zpl_halfwidth) zpl += area;
  }
  return total > 0.0 ? zpl / total : 0.0;
}

void write_spot_table(std::ostream& out, std::span<const SpotMeasurement> spots) {
  out << "label,rate_cps,background_cps,n_g2,n_estimated\n";
  for (const auto& s : spots) {
    out << s.label << ',' << csv::format_double(s.rate) << ',' << csv::format_double(s.background) << ',';
    if (s.n_emitters_g2) out << *s.n_emitters_g2;
    out << ',';
    if (s.n_estimated) out << *s.n_estimated;
    out << '\n';
  }
}

std::vector<SpotMeasurement> read_spot_table(std::istream& in) {
  csv::Reader reader(in, {"label", "rate_cps", "background_cps", "n_g2", "n_estimated"});
  std::vector<SpotMeasurement> spots;
  std::vector<std::string> f;
  while (reader.next(f)) {
    const auto line = reader.line_number();
    SpotMeasurement s;
    s.label = f[0];
    s.rate = csv::parse_double(f[1], line);
    s.background = csv::parse_double(f[2], line);
    if (!f[3].empty()) s.n_emitters_g2 = static_cast<int>(csv::parse_int(f[3], line));
    if (!f[4].empty()) s.n_estimated = static_cast<int>(csv::parse_int(f[4], line));
    spots.push_back(std::move(s));
  }
  return spots;
}

void write_spectrum_csv(std::ostream& out, const Spectrum& spectrum) {
  out << "wavelength_nm,intensity\n";
  for (const auto& s : spectrum.samples)
    out << csv::format_double(s.wavelength * 1e9) << ',' << csv::format_double(s.intensity) << '\n';
}

Spectrum read_spectrum_csv(std::istream& in, double zpl_wavelength) {
  csv::Reader reader(in, {"wavelength_nm", "intensity"});
  Spectrum sp;
  sp.zpl_wavelength = zpl_wavelength;
  std::vector<std::string> f;
  while (reader.next(f)) {
    const auto line = reader.line_number();
    sp.samples.push_back({csv::parse_double(f[0], line) * 1e-9, csv::parse_double(f[1], line)});
  }
  return sp;
}

std::vector<SaturationPoint> read_saturation_csv(std::istream& in) {
  csv::Reader reader(in, {"power_uW", "rate_cps", "sigma_cps"}, 2);
  std::vector<SaturationPoint> pts;
  std::vector<std::string> f;
  while (reader.next(f)) {
    const auto line = reader.line_number();
    SaturationPoint p{csv::parse_double(f[0], line) * 1e-6, csv::parse_double(f[1], line), 0.0};
    if (f.size() > 2 && !f[2].empty()) p.sigma = csv::parse_double(f[2], line);
    pts.push_back(p);
  }
  return pts;
}

void write_saturation_csv(std::ostream& out, std::span<const SaturationPoint> points) {
  out << "power_uW,rate_cps,sigma_cps\n";
  for (const auto& p : points)
    out << csv::format_double(p.power * 1e6) << ',' << csv::format_double(p.rate) << ','
        << csv::format_double(p.sigma) << '\n';
}

void write_decay_csv(std::ostream& out, const photonsim::DecayHistogram& histogram) {
  out << "# bin_width_s=" << csv::format_double(histogram.bin_width) << '\n';
  out << "t_ns,counts\n";
  for (std::size_t i = 0; i < histogram.counts.size(); ++i)
    out << csv::format_double(static_cast<double>(i) * histogram.bin_width * 1e9) << ',' << histogram.counts[i]
        << '\n';
}

photonsim::DecayHistogram read_decay_csv(std::istream& in) {
  csv::Reader reader(in, {"t_ns", "counts"});
  photonsim::DecayHistogram h;
  std::vector<double> t;
  std::vector<std::string> f;
  while (reader.next(f)) {
    const auto line = reader.line_number();
    t.push_back(csv::parse_double(f[0], line) * 1e-9);
    h.counts.push_back(csv::parse_int(f[1], line));
  }
  bool have_width = false;
  for (const auto& c : reader.comments()) {
    const auto pos = c.find("bin_width_s=");
    if (pos != std::string::npos) {
      h.bin_width = csv::parse_double(c.substr(pos + 12), 1);
      have_width = true;
    }
  }
  if (!have_width && t.size() >= 2) h.bin_width = t[1] - t[0];
  return h;
}

}  // namespace emitterforge::analysis
