#include "emitterforge/correlator.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <thread>

#include "emitterforge/common.hpp"
#include "emitterforge/csv.hpp"
#include "emitterforge/fitkit.hpp"

namespace emitterforge::correlator {

Binning Binning::make(double bin_width, double window, double resolution) {
  require_positive(bin_width, "bin_width");
  require_positive(resolution, "resolution");
  require_finite(window, "window");
  if (window < bin_width) throw DomainError("window must be >= bin_width");
  Binning b;
  b.width_ticks = std::max<std::int64_t>(1, std::llround(bin_width / resolution));
  b.half_bins = std::llround(window / bin_width);
  return b;
}

std::int64_t Binning::max_delay() const { return ((2 * half_bins + 1) * width_ticks - 1) / 2; }

std::optional<std::int64_t> Binning::bin_of(std::int64_t delay) const {
  const std::int64_t mag = delay < 0 ? -delay : delay;
  const std::int64_t k = (2 * mag + width_ticks) / (2 * width_ticks);
  if (k > half_bins) return std::nullopt;
  return delay < 0 ? -k : k;
}

RawCorrelation& RawCorrelation::operator+=(const RawCorrelation& other) {
  if (other.binning.width_ticks != binning.width_ticks || other.binning.half_bins != binning.half_bins)
    throw DomainError("cannot merge correlations with different binning");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  return *this;
}

void accumulate(std::span<const std::int64_t> a, std::span<const std::int64_t> b, RawCorrelation& into) {
  const std::int64_t reach = into.binning.max_delay();
  const std::int64_t offset = into.binning.half_bins;
  std::size_t lo = 0;
  for (const auto ta : a) {
    while (lo < b.size() && b[lo] < ta - reach) ++lo;
    for (std::size_t j = lo; j < b.size() && b[j] <= ta + reach; ++j) {
      if (const auto k = into.binning.bin_of(b[j] - ta)) ++into.counts[static_cast<std::size_t>(*k + offset)];
    }
  }
}

RawCorrelation correlate_raw(std::span<const std::int64_t> a, std::span<const std::int64_t> b,
                             const Binning& binning, std::int64_t tick_limit, int chunks, int threads) {
  chunks = std::max(chunks, 1);
  threads = std::clamp(threads, 1, chunks);
  const std::int64_t span_end = std::max<std::int64_t>(tick_limit, a.empty() ? 0 : a.back() + 1);
  const std::int64_t slice = (span_end + chunks - 1) / chunks;
  const std::int64_t reach = binning.max_delay();

  auto run_chunk = [&](int c, RawCorrelation& into) {
    const std::int64_t start = static_cast<std::int64_t>(c) * slice;
    const std::int64_t end = c + 1 == chunks ? INT64_MAX : start + slice;
    const auto a0 = c == 0 ? a.begin() : std::lower_bound(a.begin(), a.end(), start);
    const auto a1 = std::lower_bound(a0, a.end(), end);
    if (a0 == a1) return;
    const auto b0 = std::lower_bound(b.begin(), b.end(), *a0 - reach);
    const auto b1 = std::upper_bound(b0, b.end(), *(a1 - 1) + reach);
    accumulate({a0, a1}, {b0, b1}, into);
  };

  std::vector<RawCorrelation> partial(static_cast<std::size_t>(threads), RawCorrelation(binning));
  if (threads == 1) {
    for (int c = 0; c < chunks; ++c) run_chunk(c, partial[0]);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (int c = t; c < chunks; c += threads) run_chunk(c, partial[static_cast<std::size_t>(t)]);
      });
    }
    for (auto& th : pool) th.join();
  }
  RawCorrelation total(binning);
  for (const auto& p : partial) total += p;
  return total;
}

G2Histogram normalize(const RawCorrelation& raw, std::size_t count_a, std::size_t count_b,
                      double resolution, double total_time) {
  require_positive(total_time, "total_time");
  G2Histogram h;
  const double width = static_cast<double>(raw.binning.width_ticks) * resolution;
  h.bin_width = width;
  h.window = static_cast<double>(raw.binning.half_bins) * width;
  h.total_time = total_time;
  h.rate_a = static_cast<double>(count_a) / total_time;
  h.rate_b = static_cast<double>(count_b) / total_time;
  const double norm = h.rate_a * h.rate_b * width * total_time;
  h.bins.reserve(raw.counts.size());
  for (std::size_t i = 0; i < raw.counts.size(); ++i) {
    const auto k = static_cast<std::int64_t>(i) - raw.binning.half_bins;
    const auto c = raw.counts[i];
    h.bins.push_back({static_cast<double>(k) * width, static_cast<double>(c) / norm,
                      std::sqrt(static_cast<double>(std::max<std::int64_t>(c, 1))) / norm, c});
  }
  return h;
}

G2Histogram correlate(std::span<const std::int64_t> a, std::span<const std::int64_t> b,
                      double resolution, double total_time, double bin_width, double window,
                      int chunks, int threads) {
  if (a.empty() || b.empty()) throw DomainError("correlate needs two nonempty channels");
  require_positive(total_time, "total_time");
  const auto binning = Binning::make(bin_width, window, resolution);
  const auto limit = static_cast<std::int64_t>(std::ceil(total_time / resolution));
  auto h = normalize(correlate_raw(a, b, binning, limit, chunks, threads), a.size(), b.size(), resolution,
                     total_time);
  h.window_exceeds_duration = window > total_time;
  return h;
}

G2Histogram correlate(const TimeTagStream& stream, double bin_width, double window, int chunks, int threads) {
  const auto a = stream.channel(0);
  const auto b = stream.channel(1);
  return correlate(a, b, stream.resolution, stream.duration, bin_width, window, chunks, threads);
}

double g2_model(double tau, const G2Params& p) {
  const double t = std::abs(tau);
  return (p.n_emitters - 1.0) / p.n_emitters +
         (1.0 - (1.0 + p.a) * std::exp(-t / p.tau1) + p.a * std::exp(-t / p.tau2)) / p.n_emitters;
}

namespace {

// Mean of exp(-|t| / decay) over [centre - width/2, centre + width/2].
double exp_bin_mean(double centre, double width, double decay) {
  if (width <= 0.0) return std::exp(-std::abs(centre) / decay);
  const double lo = centre - 0.5 * width, hi = centre + 0.5 * width;
  double integral;
  if (lo >= 0.0) {
    integral = -decay * std::exp(-lo / decay) * std::expm1(-width / decay);
  } else if (hi <= 0.0) {
    integral = -decay * std::exp(hi / decay) * std::expm1(-width / decay);
  } else {
    integral = -decay * (std::expm1(lo / decay) + std::expm1(-hi / decay));
  }
  return integral / width;
}

}  // namespace

double g2_model_binned(double tau, double width, const G2Params& p) {
  return (p.n_emitters - 1.0) / p.n_emitters +
         (1.0 - (1.0 + p.a) * exp_bin_mean(tau, width, p.tau1) + p.a * exp_bin_mean(tau, width, p.tau2)) /
             p.n_emitters;
}

namespace {

std::vector<double> smoothed(const G2Histogram& h) {
  std::vector<double> s(h.bins.size());
  for (std::size_t i = 0; i < h.bins.size(); ++i) {
    double sum = 0.0;
    int n = 0;
    for (std::size_t j = i == 0 ? 0 : i - 1; j <= std::min(i + 1, h.bins.size() - 1); ++j, ++n) sum += h.bins[j].g2;
    s[i] = sum / n;
  }
  return s;
}

G2Params default_init(const G2Histogram& h) {
  const auto s = smoothed(h);
  const std::size_t c = h.centre_index();
  // Dip depth from the centre region, baseline from the outer quarter.
  double floor_value = s[c];
  for (std::size_t i = c > 2 ? c - 2 : 0; i <= std::min(c + 2, s.size() - 1); ++i)
    floor_value = std::min(floor_value, s[i]);
  const double peak = *std::max_element(s.begin(), s.end());
  std::vector<double> outer;
  const std::size_t quarter = std::max<std::size_t>(1, s.size() / 8);
  for (std::size_t i = 0; i < quarter; ++i) {
    outer.push_back(s[i]);
    outer.push_back(s[s.size() - 1 - i]);
  }
  std::nth_element(outer.begin(), outer.begin() + outer.size() / 2, outer.end());
  const double baseline = outer[outer.size() / 2];

  G2Params p;
  p.n_emitters = floor_value < 1.0 ? std::clamp(1.0 / (1.0 - floor_value), 1.0, 1e3) : 1e3;
  p.a = std::max(0.0, peak - 1.0);
  const double half_level = 0.5 * (floor_value + std::max(baseline, peak));
  std::size_t width_bins = 1;
  while (c + width_bins < s.size() && s[c + width_bins] < half_level) ++width_bins;
  const double spacing = s.size() > 1 ? std::abs(h.bins[1].tau - h.bins[0].tau) : h.bin_width;
  p.tau1 = std::max(static_cast<double>(width_bins) * spacing / std::log(2.0), 0.5 * spacing);
  p.tau2 = 10.0 * p.tau1;
  return p;
}

}  // namespace

G2Fit fit_g2(const G2Histogram& hist, std::optional<G2Params> init) {
  std::vector<std::size_t> used;
  for (std::size_t i = 0; i < hist.bins.size(); ++i)
    if (std::isfinite(hist.bins[i].sigma) && hist.bins[i].sigma > 0.0 && std::isfinite(hist.bins[i].g2))
      used.push_back(i);
  if (used.size() < 8) throw DomainError("fit_g2 needs at least 8 bins with finite sigma");
  if (std::none_of(used.begin(), used.end(), [&](std::size_t i) { return hist.bins[i].g2 > 0.0; })) {
    // No coincidences in the window: nothing to fit.
    G2Fit empty;
    empty.no_dip = true;
    return empty;
  }

  const G2Params start = init.value_or(default_init(hist));
  // Delays in ns keep the parameters of comparable magnitude.
  constexpr double ns = 1e-9;
  const double bin_ns = hist.bin_width / ns;
  const double window_ns = std::max(hist.window, hist.bin_width) / ns;

  fitkit::FitProblem problem;
  problem.initial = fitkit::Vector(4);
  problem.initial << start.n_emitters, start.a, start.tau1 / ns, start.tau2 / ns;
  problem.lower = fitkit::Vector(4);
  problem.lower << 1.0, 0.0, 1e-3 * bin_ns, 1e-3 * bin_ns;
  problem.upper = fitkit::Vector(4);
  problem.upper << 1e6, 1e3, 1e3 * window_ns, 1e3 * window_ns;
  problem.initial = problem.initial.cwiseMax(problem.lower).cwiseMin(problem.upper);
  problem.residual = [&](const fitkit::Vector& q) {
    const G2Params p{q[0], q[1], q[2], q[3]};
    fitkit::Vector r(static_cast<Eigen::Index>(used.size()));
    for (std::size_t j = 0; j < used.size(); ++j) {
      const auto& b = hist.bins[used[j]];
      r[static_cast<Eigen::Index>(j)] = (g2_model_binned(b.tau / ns, bin_ns, p) - b.g2) / b.sigma;
    }
    return r;
  };
  auto outcome = fitkit::least_squares(problem);
  if (!init) {
    // Without bunching, (a, tau2) can trade against N; also try a start
    // with no bunching and keep the better optimum.
    auto flat = problem;
    flat.initial[1] = 0.0;
    flat.initial[3] = 10.0 * flat.initial[2];
    const auto alt = fitkit::least_squares(flat);
    if (alt.cost < outcome.cost || (!outcome.converged && alt.converged)) outcome = alt;
  }

  G2Fit fit;
  fit.n_emitters = outcome.params[0];
  fit.a = outcome.params[1];
  fit.tau1 = outcome.params[2] * ns;
  fit.tau2 = outcome.params[3] * ns;
  const Eigen::Vector4d scale(1.0, 1.0, ns, ns);
  fit.covariance = scale.asDiagonal() * outcome.covariance * scale.asDiagonal();
  fit.reduced_chi2 = outcome.reduced_chi2;
  fit.converged = outcome.converged;
  fit.iterations = outcome.iterations;
  fit.g2_zero = (fit.n_emitters - 1.0) / fit.n_emitters;
  fit.g2_zero_sigma = fit.sigma(0) / (fit.n_emitters * fit.n_emitters);
  fit.no_dip = fit.n_emitters >= 100.0 || (1.0 - fit.g2_zero) < 2.0 * fit.g2_zero_sigma;
  return fit;
}

Correction background_correct(double g2, double sigma, double rho, double rho_floor) {
  require_finite(rho, "rho");
  if (rho <= 0.0 || rho > 1.0) throw DomainError("rho must be in (0, 1]");
  const double r2 = rho * rho;
  Correction c;
  c.value = (g2 - (1.0 - r2)) / r2;
  c.sigma = sigma / r2;
  c.below_zero = c.value < 0.0;
  c.unreliable = rho < rho_floor;
  return c;
}

G2Histogram background_correct(const G2Histogram& hist, double rho, double rho_floor, bool* unreliable) {
  G2Histogram out = hist;
  out.below_zero = false;
  for (auto& b : out.bins) {
    const auto c = background_correct(b.g2, b.sigma, rho, rho_floor);
    b.g2 = c.value;
    b.sigma = c.sigma;
    out.below_zero = out.below_zero || c.below_zero;
  }
  if (unreliable) *unreliable = rho < rho_floor;
  return out;
}

RhoEstimate rho_from_rates(double spot_rate, double background_rate) {
  require_positive(spot_rate, "spot_rate");
  require_nonnegative(background_rate, "background_rate");
  if (background_rate > spot_rate) return {0.0, true};
  return {(spot_rate - background_rate) / spot_rate, false};
}

EmitterBound max_emitters_from_g2(double g2_zero) {
  require_finite(g2_zero, "g2_zero");
  if (g2_zero >= 1.0) return {0, true};
  if (g2_zero < 0.0) throw DomainError("g2_zero must be >= 0");
  // (N - 1) / N <= g  <=>  N <= 1 / (1 - g)
  const double bound = 1.0 / (1.0 - g2_zero);
  const double nearest = std::round(bound);
  if (std::abs(bound - nearest) <= 1e-9 * nearest) return {static_cast<int>(nearest), false};
  return {static_cast<int>(std::floor(bound)), false};
}

void write_histogram_csv(std::ostream& out, const G2Histogram& hist) {
  out << "# bin_width_s=" << csv::format_double(hist.bin_width) << " window_s=" << csv::format_double(hist.window)
      << " rate_a=" << csv::format_double(hist.rate_a) << " rate_b=" << csv::format_double(hist.rate_b)
      << " total_time_s=" << csv::format_double(hist.total_time) << '\n';
  out << "tau_ns,g2,sigma,raw\n";
  for (const auto& b : hist.bins) {
    out << csv::format_double(b.tau * 1e9) << ',' << csv::format_double(b.g2) << ','
        << csv::format_double(b.sigma) << ',' << b.raw << '\n';
  }
}

G2Histogram read_histogram_csv(std::istream& in) {
  csv::Reader reader(in, {"tau_ns", "g2", "sigma", "raw"});
  G2Histogram h;
  std::vector<std::string> f;
  while (reader.next(f)) {
    const auto line = reader.line_number();
    h.bins.push_back({csv::parse_double(f[0], line) * 1e-9, csv::parse_double(f[1], line),
                      csv::parse_double(f[2], line), csv::parse_int(f[3], line)});
  }
  for (const auto& c : reader.comments()) {
    for (const auto& tok : csv::split(c.substr(1), ' ')) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) continue;
      const auto key = tok.substr(0, eq);
      const double v = csv::parse_double(tok.substr(eq + 1), 1);
      if (key == "bin_width_s") h.bin_width = v;
      else if (key == "window_s") h.window = v;
      else if (key == "rate_a") h.rate_a = v;
      else if (key == "rate_b") h.rate_b = v;
      else if (key == "total_time_s") h.total_time = v;
    }
  }
  if (h.bins.size() >= 2 && reader.comments().empty()) {
    h.bin_width = h.bins[1].tau - h.bins[0].tau;
    h.window = h.bins.back().tau;
  }
  return h;
}

void write_fit_report(std::ostream& out, const G2Fit& fit, std::optional<Correction> corrected) {
  auto line = [&](const char* name, double v, double s) {
    out << name << ' ' << csv::format_double(v) << ' ' << csv::format_double(s) << '\n';
  };
  line("n_emitters", fit.n_emitters, fit.sigma(0));
  line("a", fit.a, fit.sigma(1));
  line("tau1_ns", fit.tau1 * 1e9, fit.sigma(2) * 1e9);
  line("tau2_ns", fit.tau2 * 1e9, fit.sigma(3) * 1e9);
  line("g2_zero", fit.g2_zero, fit.g2_zero_sigma);
  line("reduced_chi2", fit.reduced_chi2, 0.0);
  line("converged", fit.converged ? 1.0 : 0.0, 0.0);
  line("no_dip", fit.no_dip ? 1.0 : 0.0, 0.0);
  line("max_emitters", static_cast<double>(max_emitters_from_g2(std::clamp(fit.g2_zero, 0.0, 1.0)).max_emitters), 0.0);
  if (corrected) {
    line("g2_zero_corrected", corrected->value, corrected->sigma);
    line("below_zero", corrected->below_zero ? 1.0 : 0.0, 0.0);
    line("unreliable_correction", corrected->unreliable ? 1.0 : 0.0, 0.0);
  }
}

}  // namespace emitterforge::correlator
