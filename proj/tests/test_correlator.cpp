#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "emitterforge/common.hpp"
#include "emitterforge/correlator.hpp"
#include "emitterforge/photonsim.hpp"

using namespace emitterforge;
using namespace emitterforge::correlator;

namespace {

std::vector<std::int64_t> poisson_ticks(double rate, double duration, std::uint64_t seed) {
  return photonsim::simulate_background_tags(rate, duration, seed).channel(0);
}

G2Histogram synthetic(const G2Params& p, double noise, std::uint64_t seed) {
  G2Histogram h;
  h.bin_width = 1e-9;
  h.window = 250e-9;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int k = -250; k <= 250; ++k) {
    const double tau = k * 1e-9;
    const double g = g2_model(tau, p);
    h.bins.push_back({tau, g + noise * gauss(rng), noise, 0});
  }
  return h;
}

}  // namespace

TEST_CASE("binning is mirror-symmetric") {
  const auto b = Binning::make(1e-9, 250e-9, 1e-12);
  CHECK(b.width_ticks == 1000);
  CHECK(b.half_bins == 250);
  CHECK(b.size() == 501);
  CHECK(b.bin_of(0) == 0);
  CHECK(b.bin_of(499) == 0);
  CHECK(b.bin_of(-499) == 0);
  CHECK(b.bin_of(500) == 1);
  CHECK(b.bin_of(-500) == -1);
  CHECK(b.bin_of(b.max_delay()) == 250);
  CHECK_FALSE(b.bin_of(b.max_delay() + 1).has_value());
  CHECK_FALSE(b.bin_of(-b.max_delay() - 1).has_value());
  CHECK_THROWS_AS(Binning::make(1e-9, 0.5e-9, 1e-12), DomainError);
}

TEST_CASE("independent Poisson streams normalize to one") {
  const auto a = poisson_ticks(1e4, 100.0, 1);
  const auto b = poisson_ticks(1e4, 100.0, 2);
  const auto h = correlate(a, b, 1e-12, 100.0, 1e-9, 250e-9, 8, 4);
  int within3 = 0;
  const double norm = h.rate_a * h.rate_b * h.bin_width * h.total_time;
  double mean = 0.0, mean_sigma = 0.0;
  for (const auto& bin : h.bins) {
    mean += bin.g2;
    mean_sigma += bin.sigma;
    CHECK(bin.sigma == doctest::Approx(std::sqrt(static_cast<double>(std::max<std::int64_t>(bin.raw, 1))) / norm).epsilon(1e-12));
    if (std::abs(bin.g2 - 1.0) <= 3.0 * bin.sigma) ++within3;
    CHECK(std::abs(bin.g2 - 1.0) < 5.0 * bin.sigma);
  }
  mean /= static_cast<double>(h.bins.size());
  mean_sigma /= static_cast<double>(h.bins.size());
  CHECK(std::abs(mean - 1.0) < 0.02);
  // About 10 coincidences per 1 ns bin.
  CHECK(mean_sigma == doctest::Approx(std::sqrt(0.1)).epsilon(0.05));
  CHECK(within3 >= static_cast<int>(0.98 * h.bins.size()));
}

TEST_CASE("shifted copy gives a single spike") {
  const auto a = poisson_ticks(1e4, 1.0, 3);
  std::vector<std::int64_t> b;
  for (auto t : a) b.push_back(t + 5000);
  const auto h = correlate(a, b, 1e-12, 1.0, 1e-9, 250e-9);
  const auto c = h.centre_index();
  std::int64_t off_peak = 0;
  for (std::size_t i = 0; i < h.bins.size(); ++i)
    if (i != c + 5) off_peak += h.bins[i].raw;
  CHECK(h.bins[c + 5].raw == static_cast<std::int64_t>(a.size()));
  CHECK(h.bins[c + 5].tau == doctest::Approx(5e-9));
  // Accidental coincidences only: about Na^2 * 500 ns / 1 s = 50 in total.
  CHECK(off_peak < 150);
}

TEST_CASE("estimator symmetry and chunked evaluation") {
  const auto a = poisson_ticks(2e5, 0.5, 4);
  const auto b = poisson_ticks(2e5, 0.5, 5);
  const auto ab = correlate(a, b, 1e-12, 0.5);
  const auto ba = correlate(b, a, 1e-12, 0.5);
  REQUIRE(ab.bins.size() == ba.bins.size());
  const std::size_t n = ab.bins.size();
  for (std::size_t i = 0; i < n; ++i) CHECK(ab.bins[i].raw == ba.bins[n - 1 - i].raw);

  const auto binning = Binning::make(1e-9, 250e-9, 1e-12);
  const std::int64_t limit = 500'000'000'000LL;
  const auto mono = correlate_raw(a, b, binning, limit, 1, 1);
  for (int chunks : {2, 7, 64, 1000}) {
    for (int threads : {1, 3}) {
      CHECK(correlate_raw(a, b, binning, limit, chunks, threads).counts == mono.counts);
    }
  }

  // Merging partial accumulations is order-independent.
  RawCorrelation first(binning), second(binning);
  const std::size_t half = a.size() / 2;
  accumulate(std::span(a).first(half), b, first);
  accumulate(std::span(a).subspan(half), b, second);
  RawCorrelation x = first, y = second;
  x += second;
  y += first;
  CHECK(x.counts == mono.counts);
  CHECK(y.counts == mono.counts);
}

TEST_CASE("correlate errors and flags") {
  const std::vector<std::int64_t> empty;
  const auto a = poisson_ticks(1e4, 0.1, 6);
  CHECK_THROWS_AS(correlate(empty, a, 1e-12, 0.1), DomainError);
  CHECK_THROWS_AS(correlate(a, empty, 1e-12, 0.1), DomainError);
  const auto h = correlate(a, a, 1e-12, 100e-9 * 1.0, 1e-9, 250e-9);
  CHECK(h.window_exceeds_duration);
}

TEST_CASE("model identities") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const G2Params p{1 + 5 * u(rng), 3 * u(rng), (1 + 20 * u(rng)) * 1e-9, (50 + 500 * u(rng)) * 1e-9};
    CHECK(g2_model(0.0, p) == doctest::Approx((p.n_emitters - 1) / p.n_emitters).epsilon(1e-14));
    CHECK(g2_model(1e-3, p) == doctest::Approx(1.0).epsilon(1e-12));
    const double t = 40e-9 * u(rng);
    CHECK(g2_model(t, p) == g2_model(-t, p));
    CHECK(g2_model_binned(t, 1e-15, p) == doctest::Approx(g2_model(t, p)).epsilon(1e-9));
  }
  // Bin average over the centre bin of a single-emitter dip.
  const G2Params one{1.0, 0.0, 5e-9, 50e-9};
  const double expect = 1.0 - 2.0 * 5e-9 * (1.0 - std::exp(-0.1)) / 1e-9;
  CHECK(g2_model_binned(0.0, 1e-9, one) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("fit_g2 on a histogram without coincidences") {
  auto h = synthetic({1.0, 0.0, 10e-9, 100e-9}, 0.0, 1);
  for (auto& b : h.bins) {
    b.g2 = 0.0;
    b.sigma = 0.1;
  }
  const auto fit = fit_g2(h);
  CHECK_FALSE(fit.converged);
  CHECK(fit.no_dip);
}

TEST_CASE("fit_g2 synthetic round trip") {
  const G2Params truth{1.0, 0.2, 10e-9, 100e-9};
  // Synthetic data are point samples; a narrow bin keeps the bin average equal
  // to the point value to well below the noise.
  auto h = synthetic(truth, 0.01, 9);
  h.bin_width = 1e-12;
  const auto fit = fit_g2(h);
  CHECK(fit.converged);
  CHECK(std::abs(fit.n_emitters - truth.n_emitters) < 3 * fit.sigma(0) + 1e-9);
  CHECK(std::abs(fit.a - truth.a) < 3 * fit.sigma(1));
  CHECK(std::abs(fit.tau1 - truth.tau1) < 3 * fit.sigma(2));
  CHECK(std::abs(fit.tau2 - truth.tau2) < 3 * fit.sigma(3));
  CHECK(fit.g2_zero < 0.05);
  CHECK_FALSE(fit.no_dip);

  auto h2 = synthetic({2.0, 0.0, 8e-9, 80e-9}, 0.01, 10);
  h2.bin_width = 1e-12;
  const auto f2 = fit_g2(h2);
  CHECK(f2.converged);
  CHECK(std::abs(f2.g2_zero - 0.5) < 3 * f2.g2_zero_sigma + 0.01);
}

TEST_CASE("fit_g2 on a flat histogram reports no dip") {
  G2Histogram h;
  for (int k = -100; k <= 100; ++k) h.bins.push_back({k * 1e-9, 1.0, 0.01, 10000});
  const auto fit = fit_g2(h);
  CHECK(fit.no_dip);
  CHECK(fit.g2_zero > 0.95);
  G2Histogram tiny;
  for (int k = -3; k <= 3; ++k) tiny.bins.push_back({k * 1e-9, 1.0, 0.01, 10000});
  CHECK_THROWS_AS(fit_g2(tiny), DomainError);
}

TEST_CASE("background correction") {
  const auto id = background_correct(0.42, 0.05, 1.0);
  CHECK(id.value == 0.42);
  CHECK(id.sigma == 0.05);
  const auto c = background_correct(0.36, 0.06, 0.8);
  CHECK(std::abs(c.value) < 1e-12);
  CHECK(c.sigma == doctest::Approx(0.06 / 0.64));
  CHECK(background_correct(0.3, 0.06, 0.8).below_zero);
  CHECK(background_correct(0.9, 0.06, 0.05).unreliable);
  CHECK_THROWS_AS(background_correct(0.5, 0.1, 0.0), DomainError);
  CHECK_THROWS_AS(background_correct(0.5, 0.1, 1.2), DomainError);

  auto h = synthetic({1.0, 0.0, 10e-9, 100e-9}, 0.01, 3);
  const auto same = background_correct(h, 1.0);
  for (std::size_t i = 0; i < h.bins.size(); ++i) CHECK(same.bins[i].g2 == h.bins[i].g2);

  // Forward mixing at fraction 1 - rho^2 then correction is the identity.
  const double rho = 0.7;
  G2Histogram mixed = h;
  for (auto& b : mixed.bins) {
    b.g2 = rho * rho * b.g2 + (1 - rho * rho);
    b.sigma *= rho * rho;
  }
  const auto back = background_correct(mixed, rho);
  for (std::size_t i = 0; i < h.bins.size(); ++i) {
    CHECK(back.bins[i].g2 == doctest::Approx(h.bins[i].g2).epsilon(1e-12));
    CHECK(back.bins[i].sigma == doctest::Approx(h.bins[i].sigma).epsilon(1e-12));
  }
}

TEST_CASE("supplement two-emitter value bounds N at two") {
  CHECK(max_emitters_from_g2(0.52).max_emitters == 2);
}

TEST_CASE("rho_from_rates") {
  CHECK(rho_from_rates(100, 0).rho == 1.0);
  CHECK(rho_from_rates(100, 36).rho == doctest::Approx(0.64));
  const auto d = rho_from_rates(100, 150);
  CHECK(d.rho == 0.0);
  CHECK(d.degenerate);
  CHECK_THROWS_AS(rho_from_rates(0, 0), DomainError);

  // Simulated spot with known background share.
  const double emitter = 20000.0, bg = 5000.0;
  const auto m = photonsim::EmitterModel::from_saturation(2 * emitter, 110e-6, 10e-9);
  const std::vector<photonsim::EmitterModel> one{m};
  const auto spot = merge_streams({photonsim::simulate_emitter_tags(one, 110e-6, 5.0, 1),
                                   photonsim::simulate_background_tags(bg, 5.0, 2)});
  const double rate = static_cast<double>(spot.tags.size()) / 5.0;
  const double injected = emitter / (emitter + bg);
  CHECK(std::abs(rho_from_rates(rate, bg).rho / injected - 1.0) < 0.03);
}

TEST_CASE("max_emitters_from_g2") {
  CHECK(max_emitters_from_g2(0.36).max_emitters == 1);
  CHECK(max_emitters_from_g2(0.0).max_emitters == 1);
  CHECK(max_emitters_from_g2(0.5).max_emitters == 2);
  CHECK(max_emitters_from_g2(2.0 / 3.0).max_emitters == 3);
  CHECK(max_emitters_from_g2(0.7).max_emitters == 3);
  CHECK(max_emitters_from_g2(1.0).unbounded);
  CHECK_THROWS_AS(max_emitters_from_g2(-0.1), DomainError);
}

TEST_CASE("histogram CSV round trip") {
  const auto a = poisson_ticks(5e4, 1.0, 11);
  const auto b = poisson_ticks(5e4, 1.0, 12);
  const auto h = correlate(a, b, 1e-12, 1.0);
  std::stringstream ss;
  write_histogram_csv(ss, h);
  const auto back = read_histogram_csv(ss);
  REQUIRE(back.bins.size() == h.bins.size());
  CHECK(back.bin_width == h.bin_width);
  CHECK(back.window == h.window);
  CHECK(back.rate_a == h.rate_a);
  CHECK(back.total_time == h.total_time);
  for (std::size_t i = 0; i < h.bins.size(); ++i) {
    CHECK(back.bins[i].g2 == h.bins[i].g2);
    CHECK(back.bins[i].sigma == h.bins[i].sigma);
    CHECK(back.bins[i].raw == h.bins[i].raw);
    CHECK(back.bins[i].tau == doctest::Approx(h.bins[i].tau).epsilon(1e-15));
  }
}
