#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "emitterforge/analysis.hpp"
#include "emitterforge/common.hpp"
#include "emitterforge/correlator.hpp"
#include "emitterforge/photonsim.hpp"

using namespace emitterforge;
using namespace emitterforge::photonsim;

namespace {

double detected_rate(const TimeTagStream& s) { return static_cast<double>(s.tags.size()) / s.duration; }

TimeTagStream hbt(const std::vector<EmitterModel>& models, double power, double duration,
                  std::uint64_t seed, double bg_rate = 0.0) {
  auto em = simulate_emitter_tags(models, power, duration, derive_seed(seed, 1));
  if (bg_rate > 0.0) em = merge_streams({em, simulate_background_tags(bg_rate, duration, derive_seed(seed, 2))});
  em = relabel(em, 0);
  auto [a, b] = run_detection(em, 0.5, {}, {}, derive_seed(seed, 3));
  return merge_streams({a, b});
}

}  // namespace

TEST_CASE("steady_state_rate examples") {
  EmitterModel g;
  CHECK(steady_state_rate(g, 110e-6) == doctest::Approx(6500.0).epsilon(1e-12));
  CHECK(steady_state_rate(g, 1e6) == doctest::Approx(13000.0).epsilon(1e-6));
  CHECK(steady_state_rate(g, 0.0) == 0.0);
  EmitterModel w;
  w.sat_rate = 3600.0;
  w.sat_power = 810e-6;
  CHECK(steady_state_rate(w, 810e-6) == doctest::Approx(1800.0).epsilon(1e-12));
  CHECK_THROWS_AS(steady_state_rate(g, -1.0), DomainError);
}

TEST_CASE("kinetic rate equals the saturation law without shelving") {
  const auto m = EmitterModel::from_saturation(13000.0, 110e-6, 10e-9);
  for (double p : {1e-6, 50e-6, 110e-6, 1e-3}) {
    CHECK(kinetic_detected_rate(m, p) == doctest::Approx(steady_state_rate(m, p)).epsilon(1e-12));
  }
  const auto shelved = EmitterModel::from_saturation(13000.0, 110e-6, 10e-9, 2e7, 1e7);
  CHECK(kinetic_detected_rate(shelved, 1.0) == doctest::Approx(13000.0).epsilon(1e-3));
  CHECK(antibunching_time(m, 110e-6) == doctest::Approx(5e-9));
}

TEST_CASE("empty inputs give empty streams") {
  CHECK(simulate_emitter_tags(std::vector<EmitterModel>{}, 110e-6, 1.0, 1).tags.empty());
  CHECK(simulate_background_tags(0.0, 1.0, 1).tags.empty());
}

TEST_CASE("background counting statistics") {
  const auto s = simulate_background_tags(1e4, 10.0, 3);
  CHECK(std::abs(static_cast<double>(s.tags.size()) - 1e5) < 3.0 * std::sqrt(1e5));
  CHECK(s.is_valid());
}

TEST_CASE("single emitter mean rate matches the saturation law") {
  const std::vector<EmitterModel> one{EmitterModel::from_saturation(13000.0, 110e-6, 10e-9)};
  const auto s = simulate_emitter_tags(one, 110e-6, 20.0, 5);
  CHECK(std::abs(detected_rate(s) / 6500.0 - 1.0) < 0.03);
  CHECK(s.is_valid());
}

TEST_CASE("shelving emitter rate matches the three-level kinetics") {
  const std::vector<EmitterModel> one{EmitterModel::from_saturation(1e5, 110e-6, 10e-9, 5e6, 1e7)};
  const auto s = simulate_emitter_tags(one, 200e-6, 5.0, 6);
  CHECK(std::abs(detected_rate(s) / kinetic_detected_rate(one[0], 200e-6) - 1.0) < 0.02);
}

TEST_CASE("emitter plus background rate follows the saturation law with linear term") {
  const auto m = EmitterModel::from_saturation(13000.0, 110e-6, 10e-9);
  const BackgroundModel bg{2e7, 70e-9};  // 2200 cps at 110 uW
  const double p = 110e-6;
  const std::vector<EmitterModel> one{m};
  const double duration = 10.0;
  const auto s = merge_streams({simulate_emitter_tags(one, p, duration, 1),
                                simulate_background_tags(bg.rate(p), duration, 2)});
  const double expected = analysis::saturation_model(p, 13000.0, 110e-6, bg.slope) * duration;
  CHECK(std::abs(static_cast<double>(s.tags.size()) - expected) < 4.0 * std::sqrt(expected));
}

TEST_CASE("simulation determinism and validity on random configurations") {
  Rng rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 12; ++trial) {
    std::vector<EmitterModel> models(1 + trial % 3,
                                     EmitterModel::from_saturation(1e4 + 1e5 * u(rng), 110e-6,
                                                                   (2 + 20 * u(rng)) * 1e-9, 1e6 * u(rng),
                                                                   1e6 + 1e7 * u(rng)));
    const double duration = 0.05 + 0.2 * u(rng);
    const auto seed = static_cast<std::uint64_t>(trial) * 31 + 1;
    const auto s1 = simulate_emitter_tags(models, 1e-3 * u(rng) + 1e-6, duration, seed);
    CHECK(s1.is_valid());
    DetectorModel det;
    det.efficiency = 0.5 + 0.5 * u(rng);
    det.jitter_sigma = 1e-9 * u(rng);
    det.dead_time = 50e-9 * u(rng);
    det.dark_rate = 500.0 * u(rng);
    const auto [a1, b1] = run_detection(s1, u(rng), det, det, seed + 1);
    CHECK(a1.is_valid());
    CHECK(b1.is_valid());
    CHECK(merge_streams({a1, b1}).is_valid());
    const auto [a2, b2] = run_detection(s1, 0.5, det, det, seed + 1);
    const auto [a3, b3] = run_detection(s1, 0.5, det, det, seed + 1);
    CHECK(a2.tags == a3.tags);
    CHECK(b2.tags == b3.tags);
  }
  const std::vector<EmitterModel> one{EmitterModel{}};
  CHECK(simulate_emitter_tags(one, 110e-6, 0.5, 9).tags == simulate_emitter_tags(one, 110e-6, 0.5, 9).tags);
  CHECK(simulate_emitter_tags(one, 110e-6, 0.5, 9).tags != simulate_emitter_tags(one, 110e-6, 0.5, 10).tags);
}

TEST_CASE("run_detection lossless split and routing") {
  const auto s = simulate_background_tags(1e5, 1.0, 4);
  const auto [a, b] = run_detection(s, 0.5, {}, {}, 5);
  CHECK(a.tags.size() + b.tags.size() == s.tags.size());
  CHECK(a.count(0) == a.tags.size());
  CHECK(b.count(1) == b.tags.size());

  DetectorModel dark;
  dark.dark_rate = 100.0;
  const auto [a1, b1] = run_detection(s, 1.0, {}, dark, 6);
  CHECK(a1.tags.size() == s.tags.size());
  CHECK(std::abs(static_cast<double>(b1.tags.size()) - 100.0) < 50.0);

  const auto [a0, b0] = run_detection(s, 1.0, {}, {}, 6);
  CHECK(b0.tags.empty());
}

TEST_CASE("non-paralyzable dead time") {
  const double r = 1e7, tau_d = 100e-9;
  const auto s = simulate_background_tags(r, 0.1, 8);
  DetectorModel det;
  det.dead_time = tau_d;
  const auto [a, b] = run_detection(s, 1.0, det, {}, 9);
  const double out_rate = static_cast<double>(a.tags.size()) / 0.1;
  CHECK(std::abs(out_rate / (r / (1.0 + r * tau_d)) - 1.0) < 0.02);

  const std::vector<std::int64_t> ticks{0, 5, 10, 11, 25};
  CHECK(apply_dead_time(ticks, 10) == std::vector<std::int64_t>{0, 10, 25});
}

TEST_CASE("two identical emitters give g2(0) = 1/2") {
  const auto m = EmitterModel::from_saturation(2e6, 110e-6, 10e-9);
  const auto s = hbt({m, m}, 110e-6, 4.0, 21);
  const auto fit = correlator::fit_g2(correlator::correlate(s, 1e-9, 250e-9, 4, 4));
  CHECK(fit.converged);
  CHECK(std::abs(fit.g2_zero - 0.5) < 0.05);
}

TEST_CASE("single emitter antibunching time shortens with pump") {
  const auto m = EmitterModel::from_saturation(2e6, 110e-6, 10e-9);
  for (double p : {110e-6, 330e-6}) {
    const auto s = hbt({m}, p, 3.0, 22);
    const auto fit = correlator::fit_g2(correlator::correlate(s, 1e-9, 250e-9, 4, 4));
    CHECK(fit.converged);
    CHECK(fit.n_emitters == doctest::Approx(1.0).epsilon(0.05));
    CHECK(fit.a < 0.05);
    CHECK(std::abs(fit.tau1 / antibunching_time(m, p) - 1.0) < 0.10);
  }
}

TEST_CASE("pure background correlates to unity") {
  const auto s = hbt({}, 110e-6, 20.0, 23, 2e5);
  const auto h = correlator::correlate(s, 1e-9, 250e-9, 4, 4);
  double mean = 0.0;
  for (const auto& bin : h.bins) mean += bin.g2;
  mean /= static_cast<double>(h.bins.size());
  CHECK(std::abs(mean - 1.0) < 0.02);
  int outliers = 0;
  for (const auto& bin : h.bins)
    if (std::abs(bin.g2 - 1.0) > 4.0 * bin.sigma) ++outliers;
  CHECK(outliers == 0);
}

TEST_CASE("pulsed decay histograms") {
  const std::vector<EmitterModel> g{EmitterModel{}};
  const BackgroundModel bg;
  CHECK(simulate_pulsed_decay(g, bg, 0.0, 400e-9, 5e-9, 0, 1).total() == 0);
  CHECK_THROWS_AS(simulate_pulsed_decay(g, bg, 0.0, 5e-9, 10e-9, 10, 1), DomainError);

  const auto single = simulate_pulsed_decay(g, bg, 0.0, 400e-9, 1e-9, 200000, 2);
  CHECK(single.total() == 200000);
  const auto f1 = analysis::fit_decay(single);
  CHECK_FALSE(f1.no_fit);
  CHECK(std::abs(f1.tau_fast / 10e-9 - 1.0) < 0.05);

  const auto mix = simulate_pulsed_decay(g, bg, 0.5, 1e-6, 1e-9, 400000, 3);
  const auto f2 = analysis::fit_decay(mix);
  CHECK_FALSE(f2.single_exponential);
  CHECK(std::abs(f2.tau_fast / 10e-9 - 1.0) < 0.10);
  CHECK(std::abs(f2.tau_slow / 70e-9 - 1.0) < 0.10);
}
