#include "emitterforge/defectstats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "emitterforge/common.hpp"
#include "emitterforge/csv.hpp"

namespace emitterforge::defectstats {

void CreationModel::validate() const {
  require_nonnegative(mu, "mu");
  if (k < 1) throw DomainError("k must be >= 1");
  require_finite(p_success, "p_success");
  if (p_success < 0.0 || p_success > 1.0) throw DomainError("p_success must be in [0, 1]");
}

double DefectDistribution::total() const {
  double s = 0.0;
  for (const auto& [n, p] : pmf) s += p;
  return s;
}

double DefectDistribution::probability(int n) const {
  const auto it = pmf.find(n);
  return it == pmf.end() ? 0.0 : it->second;
}

double poisson_pmf(double mu, std::int64_t m) {
  require_nonnegative(mu, "mu");
  if (m < 0) throw DomainError("m must be >= 0");
  if (mu == 0.0) return m == 0 ? 1.0 : 0.0;
  if (m <= 20) {
    double term = std::exp(-mu);
    for (std::int64_t i = 1; i <= m; ++i) term *= mu / static_cast<double>(i);
    return term;
  }
  const double md = static_cast<double>(m);
  return std::exp(md * std::log(mu) - mu - std::lgamma(md + 1.0));
}

double composite_defect_pmf(const CreationModel& model, std::int64_t n) {
  model.validate();
  if (n < 0) throw DomainError("N must be >= 0");
  double p = 0.0;
  for (std::int64_t m = n * model.k; m < (n + 1) * model.k; ++m) p += poisson_pmf(model.mu, m);
  return p;
}

DefectDistribution composite_distribution(const CreationModel& model, int n_max) {
  DefectDistribution d;
  d.source = DistributionSource::Analytic;
  for (int n = 0; n <= n_max; ++n) d.pmf[n] = composite_defect_pmf(model, n);
  return d;
}

std::int64_t sample_defect_count(std::int64_t n_ions, const CreationModel& model, std::uint64_t seed) {
  return sample_defect_counts(n_ions, model, 1, seed).front();
}

std::vector<std::int64_t> sample_defect_counts(std::int64_t n_ions, const CreationModel& model,
                                               std::size_t n_samples, std::uint64_t seed) {
  model.validate();
  if (n_ions < 0) throw DomainError("n_ions must be >= 0");
  std::vector<std::int64_t> out(n_samples, 0);
  if (n_ions == 0) return out;
  Rng rng(seed);
  std::binomial_distribution<std::int64_t> successes(n_ions, model.p_success);
  for (auto& v : out) v = successes(rng) / model.k;
  return out;
}

std::int64_t sample_site_defect_count(double mean_ions, const CreationModel& model, std::uint64_t seed) {
  return sample_site_defect_counts(mean_ions, model, 1, seed).front();
}

std::vector<std::int64_t> sample_site_defect_counts(double mean_ions, const CreationModel& model,
                                                    std::size_t n_sites, std::uint64_t seed) {
  model.validate();
  require_nonnegative(mean_ions, "mean_ions");
  std::vector<std::int64_t> out(n_sites, 0);
  if (mean_ions == 0.0) return out;
  Rng rng(seed);
  std::poisson_distribution<std::int64_t> ions(mean_ions);
  for (auto& v : out) {
    const auto n = ions(rng);
    v = n == 0 ? 0 : std::binomial_distribution<std::int64_t>(n, model.p_success)(rng) / model.k;
  }
  return out;
}

BinInterval wilson_interval(std::int64_t successes, std::int64_t trials, double z) {
  if (trials <= 0) throw DomainError("trials must be > 0");
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double centre = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

DefectDistribution occurrence_histogram(std::span<const std::int64_t> samples) {
  if (samples.empty()) throw DomainError("occurrence_histogram needs at least one sample");
  DefectDistribution d;
  d.source = DistributionSource::Empirical;
  d.sample_count = static_cast<std::int64_t>(samples.size());
  for (auto s : samples) {
    if (s < 0) throw DomainError("defect counts must be >= 0");
    ++d.counts[static_cast<int>(s)];
  }
  const double n = static_cast<double>(samples.size());
  for (const auto& [bin, c] : d.counts) {
    d.pmf[bin] = static_cast<double>(c) / n;
    d.interval68[bin] = wilson_interval(c, d.sample_count);
  }
  return d;
}

namespace {

double log_likelihood(const DefectDistribution& observed, double mu, int k) {
  const CreationModel model{mu, k, 0.0};
  double ll = 0.0;
  for (const auto& [n, c] : observed.counts) {
    const double p = composite_defect_pmf(model, n);
    if (p <= 0.0) return -std::numeric_limits<double>::infinity();
    ll += static_cast<double>(c) * std::log(p);
  }
  return ll;
}

}  // namespace

MuFit fit_mu(const DefectDistribution& observed, int k) {
  if (observed.source != DistributionSource::Empirical || observed.sample_count <= 0)
    throw DomainError("fit_mu needs an empirical distribution with samples");
  if (k < 1) throw DomainError("k must be >= 1");

  MuFit fit;
  const bool all_zero = std::all_of(observed.counts.begin(), observed.counts.end(),
                                    [](const auto& kv) { return kv.first == 0 || kv.second == 0; });
  if (all_zero) {
    fit.mu = 1e-6;
    fit.log_likelihood = log_likelihood(observed, fit.mu, k);
    fit.degenerate = true;
    return fit;
  }

  // Golden-section maximization of the log-likelihood on [1e-6, 100].
  constexpr double kInvPhi = 0.6180339887498949;
  double lo = 1e-6, hi = 100.0;
  double x1 = hi - kInvPhi * (hi - lo);
  double x2 = lo + kInvPhi * (hi - lo);
  double f1 = log_likelihood(observed, x1, k);
  double f2 = log_likelihood(observed, x2, k);
  while (hi - lo > 1e-4) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + kInvPhi * (hi - lo);
      f2 = log_likelihood(observed, x2, k);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - kInvPhi * (hi - lo);
      f1 = log_likelihood(observed, x1, k);
    }
  }
  fit.mu = 0.5 * (lo + hi);
  fit.log_likelihood = log_likelihood(observed, fit.mu, k);
  return fit;
}

double total_variation(const DefectDistribution& a, const DefectDistribution& b) {
  std::map<int, double> diff;
  for (const auto& [n, p] : a.pmf) diff[n] += p;
  for (const auto& [n, p] : b.pmf) diff[n] -= p;
  double s = 0.0;
  for (const auto& [n, d] : diff) s += std::abs(d);
  return 0.5 * s;
}

void write_distribution_csv(std::ostream& out, const DefectDistribution& dist) {
  out << "N,probability,lo68,hi68\n";
  for (const auto& [n, p] : dist.pmf) {
    const auto it = dist.interval68.find(n);
    const BinInterval iv = it == dist.interval68.end() ? BinInterval{p, p} : it->second;
    out << n << ',' << csv::format_double(p) << ',' << csv::format_double(iv.lo) << ','
        << csv::format_double(iv.hi) << '\n';
  }
}

DefectDistribution read_distribution_csv(std::istream& in) {
  csv::Reader reader(in, {"N", "probability", "lo68", "hi68"});
  DefectDistribution d;
  std::vector<std::string> f;
  bool has_intervals = false;
  while (reader.next(f)) {
    const auto line = reader.line_number();
    const int n = static_cast<int>(csv::parse_int(f[0], line));
    const double p = csv::parse_double(f[1], line);
    const BinInterval iv{csv::parse_double(f[2], line), csv::parse_double(f[3], line)};
    d.pmf[n] = p;
    if (iv.lo != p || iv.hi != p) has_intervals = true;
    d.interval68[n] = iv;
  }
  if (has_intervals) {
    d.source = DistributionSource::Empirical;
  } else {
    d.interval68.clear();
  }
  return d;
}

}  // namespace emitterforge::defectstats
