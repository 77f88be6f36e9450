#pragma once

// Poisson and composite-defect (sub-Poisson) statistics of color-center
// creation per implantation site.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

namespace emitterforge::defectstats {

/// A defect is formed from every k successful implantations; mu is the mean
/// number of successful implantations per site.
struct CreationModel {
  double mu = 4.0;
  int k = 3;
  double p_success = 0.16;

  void validate() const;
};

enum class DistributionSource { Analytic, Empirical };

struct BinInterval {
  double lo = 0.0;
  double hi = 0.0;
};

struct DefectDistribution {
  std::map<int, double> pmf;
  DistributionSource source = DistributionSource::Analytic;
  std::int64_t sample_count = 0;
  std::map<int, std::int64_t> counts;      // Empirical only
  std::map<int, BinInterval> interval68;   // Empirical only, Wilson score

  double total() const;
  double probability(int n) const;
};

double poisson_pmf(double mu, std::int64_t m);

/// P(N) = sum of poisson_pmf(mu, m) for m in [N k, N k + k - 1].
double composite_defect_pmf(const CreationModel& model, std::int64_t n);

/// Analytic distribution over N = 0..n_max.
DefectDistribution composite_distribution(const CreationModel& model, int n_max);

/// floor(Binomial(n_ions, p_success) / k); deterministic per seed.
std::int64_t sample_defect_count(std::int64_t n_ions, const CreationModel& model, std::uint64_t seed);

/// Site with a Poisson-distributed ion count of the given mean, then
/// sample_defect_count. The successes are Poisson(mean_ions p_success).
std::int64_t sample_site_defect_count(double mean_ions, const CreationModel& model, std::uint64_t seed);
std::vector<std::int64_t> sample_site_defect_counts(double mean_ions, const CreationModel& model,
                                                    std::size_t n_sites, std::uint64_t seed);

/// Batch version driving one generator; element i is not equal to
/// sample_defect_count(..., seed_i) for any particular seed_i.
std::vector<std::int64_t> sample_defect_counts(std::int64_t n_ions, const CreationModel& model,
                                               std::size_t n_samples, std::uint64_t seed);

/// Two-sided Wilson score interval for `successes` out of `trials` at z.
BinInterval wilson_interval(std::int64_t successes, std::int64_t trials, double z = 1.0);

DefectDistribution occurrence_histogram(std::span<const std::int64_t> samples);

struct MuFit {
  double mu = 0.0;
  double log_likelihood = 0.0;
  bool degenerate = false;  // all mass at N = 0
};

MuFit fit_mu(const DefectDistribution& observed, int k);

double total_variation(const DefectDistribution& a, const DefectDistribution& b);

/// N,probability,lo68,hi68 (interval columns equal probability for analytic input).
void write_distribution_csv(std::ostream& out, const DefectDistribution& dist);
DefectDistribution read_distribution_csv(std::istream& in);

}  // namespace emitterforge::defectstats
