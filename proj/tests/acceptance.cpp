// Acceptance gate: one PASS/FAIL line per criterion; nonzero exit on any failure.
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <unistd.h>
#include <vector>

#include "cli.hpp"
#include "emitterforge/analysis.hpp"
#include "emitterforge/common.hpp"
#include "emitterforge/config.hpp"
#include "emitterforge/correlator.hpp"
#include "emitterforge/defectstats.hpp"
#include "emitterforge/implantation.hpp"
#include "emitterforge/photonsim.hpp"
#include "emitterforge/pipeline.hpp"
#include "emitterforge/timetag.hpp"

using namespace emitterforge;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(int id, const std::string& name, bool pass, const std::string& detail, double runtime) {
  if (!pass) ++failures;
  std::printf("[%s] criterion %d: %s | %s | %.2f s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str(),
              runtime);
  std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  std::atomic<std::size_t> next{0};
  const unsigned workers = std::max(1u, std::min(8u, std::thread::hardware_concurrency()));
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& t : pool) t.join();
}

TimeTagStream hbt_stream(const std::vector<photonsim::EmitterModel>& models, double power, double bg_rate,
                         double duration, std::uint64_t seed) {
  auto light = photonsim::simulate_emitter_tags(models, power, duration, derive_seed(seed, 1));
  if (bg_rate > 0.0)
    light = relabel(merge_streams({light, photonsim::simulate_background_tags(bg_rate, duration, derive_seed(seed, 2))}), 0);
  auto [a, b] = photonsim::run_detection(light, 0.5, {}, {}, derive_seed(seed, 3));
  auto s = merge_streams({a, b});
  s.duration = duration;
  return s;
}

// 1. Composite defect pmf at mu = 4, k = 3 against the quoted percentages.
void criterion1() {
  const auto t0 = Clock::now();
  const defectstats::CreationModel model{4.0, 3, 0.16};
  const double quoted[4] = {0.238, 0.547, 0.195, 0.020};
  bool pass = true;
  std::string detail;
  for (int n = 0; n < 4; ++n) {
    const double p = defectstats::composite_defect_pmf(model, n);
    // Brute-force oracle: direct products, no log-space.
    double oracle = 0.0;
    for (int m = 3 * n; m < 3 * n + 3; ++m) {
      double term = std::exp(-4.0);
      for (int i = 1; i <= m; ++i) term *= 4.0 / i;
      oracle += term;
    }
    const bool ok = std::abs(p - quoted[n]) <= 0.0005 && std::abs(p - oracle) < 1e-12;
    pass = pass && ok;
    detail += "P(" + std::to_string(n) + ")=" + fmt("%.5f", p) + (ok ? "" : "[off]") + " ";
  }
  const double rt = seconds_since(t0);
  report(1, "sub-Poisson pmf (mu=4,k=3) vs 0.238/0.547/0.195/0.020 +-0.0005", pass && rt < 1.0, detail, rt);
}

// 2. Poisson maximum.
void criterion2() {
  const auto t0 = Clock::now();
  const double p0 = defectstats::poisson_pmf(1.0, 0), p1 = defectstats::poisson_pmf(1.0, 1);
  const bool pass = std::abs(p0 - 0.3679) <= 1e-4 && std::abs(p1 - 0.3679) <= 1e-4;
  report(2, "poisson_pmf(1,0)=poisson_pmf(1,1)=0.3679 +-1e-4", pass,
         "P(0)=" + fmt("%.6f", p0) + " P(1)=" + fmt("%.6f", p1), seconds_since(t0));
}

// 3. Monte Carlo consistency of per-site sampling.
void criterion3() {
  const auto t0 = Clock::now();
  const defectstats::CreationModel model{4.0, 3, 0.16};
  const auto samples = defectstats::sample_site_defect_counts(25.0, model, 1'000'000, 20240301);
  const auto empirical = defectstats::occurrence_histogram(samples);
  const double tv = defectstats::total_variation(empirical, defectstats::composite_distribution(model, 40));
  const double rt = seconds_since(t0);
  report(3, "1e6 sites at n=25, p=0.16, k=3: TV < 0.02", tv < 0.02 && rt < 30.0,
         "TV=" + fmt("%.5f", tv) + " P(1)=" + fmt("%.4f", empirical.probability(1)), rt);
}

// 4. Antibunching levels at desk-scale count rates.
void criterion4() {
  const auto t0 = Clock::now();
  bool pass = true;
  std::string detail;
  const double p0 = 110e-6, duration = 60.0, total_rate = 1e4;
  for (int n = 1; n <= 3; ++n) {
    // Identical G-like emitters driven at P0, total detected rate 1e4 cps.
    const auto m = photonsim::EmitterModel::from_saturation(2.0 * total_rate / n, p0, 10e-9);
    const std::vector<photonsim::EmitterModel> models(static_cast<std::size_t>(n), m);
    const auto s = hbt_stream(models, p0, 0.0, duration, 400 + static_cast<std::uint64_t>(n));
    const auto fit = correlator::fit_g2(correlator::correlate(s, 1e-9, 250e-9, 8, 8));
    const double target = (n - 1.0) / n;
    const bool ok = std::abs(fit.g2_zero - target) <= 0.05;
    pass = pass && ok;
    detail += "N=" + std::to_string(n) + ": " + fmt("%.3f", fit.g2_zero) + "+-" + fmt("%.3f", fit.g2_zero_sigma) +
              (ok ? "" : "[off]") + " ";
  }
  const double rt = seconds_since(t0);
  report(4, "g2(0) levels 0/0.5/0.667 +-0.05 (60 s, 1e4 cps)", pass && rt < 120.0, detail, rt);
}

// 5. Background correction at rho = 0.8.
void criterion5() {
  const auto t0 = Clock::now();
  const double p0 = 110e-6, duration = 10.0;
  const double signal = 4e5, background = 1e5;  // rho = 0.8
  const auto m = photonsim::EmitterModel::from_saturation(2.0 * signal, p0, 10e-9);
  const auto s = hbt_stream({m}, p0, background, duration, 500);
  const auto fit = correlator::fit_g2(correlator::correlate(s, 1e-9, 250e-9, 8, 8));
  const double measured = static_cast<double>(s.tags.size()) / duration;
  const auto rho = correlator::rho_from_rates(measured, background);
  const auto corr = correlator::background_correct(fit.g2_zero, fit.g2_zero_sigma, rho.rho);
  const bool pass = std::abs(fit.g2_zero - 0.36) <= 0.05 && std::abs(corr.value) <= 0.06;
  const double rt = seconds_since(t0);
  report(5, "rho=0.8: raw g2(0)=0.36+-0.05, corrected 0.00+-0.06", pass && rt < 60.0,
         "rho=" + fmt("%.4f", rho.rho) + " raw=" + fmt("%.3f", fit.g2_zero) + " corrected=" + fmt("%.3f", corr.value),
         rt);
}

// 6. Normalization on independent Poisson streams.
void criterion6() {
  const auto t0 = Clock::now();
  const double duration = 100.0;
  const auto a = photonsim::simulate_background_tags(1e4, duration, 601).channel(0);
  const auto b = photonsim::simulate_background_tags(1e4, duration, 602).channel(0);
  // 1 us bins: about 1e4 coincidences per bin.
  const auto h = correlator::correlate(a, b, 1e-12, duration, 1e-6, 100e-6, 8, 8);
  double mean = 0.0, worst = 0.0;
  for (const auto& bin : h.bins) {
    mean += bin.g2;
    worst = std::max(worst, std::abs(bin.g2 - 1.0));
  }
  mean /= static_cast<double>(h.bins.size());
  const double rt = seconds_since(t0);
  report(6, "two 1e4 cps Poisson streams, 100 s: bins 1+-0.06, mean 1+-0.005",
         worst <= 0.06 && std::abs(mean - 1.0) <= 0.005 && rt < 30.0,
         "bins=" + std::to_string(h.bins.size()) + " max|g2-1|=" + fmt("%.4f", worst) + " mean=" + fmt("%.5f", mean),
         rt);
}

// 7. Saturation fit round trips.
void criterion7() {
  const auto t0 = Clock::now();
  bool pass = true;
  std::string detail;
  std::mt19937_64 rng(700);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto [is, p0] : {std::pair{13000.0, 110e-6}, std::pair{3600.0, 810e-6}}) {
    std::vector<analysis::SaturationPoint> clean, noisy;
    for (int i = 0; i < 14; ++i) {
      const double p = p0 * 0.05 * std::pow(1.5, i);
      const double truth = analysis::saturation_model(p, is, p0, 0.0);
      clean.push_back({p, truth, 1.0});
      noisy.push_back({p, truth * (1.0 + 0.05 * gauss(rng)), 0.05 * truth});
    }
    const auto f = analysis::fit_saturation(clean);
    const double e_is = std::abs(f.sat_rate / is - 1.0), e_p0 = std::abs(f.sat_power / p0 - 1.0);
    const auto g = analysis::fit_saturation(noisy);
    const double z_is = std::abs(g.sat_rate - is) / g.sigma(0), z_p0 = std::abs(g.sat_power - p0) / g.sigma(1);
    const bool ok = e_is <= 1e-6 && e_p0 <= 1e-6 && z_is <= 3.0 && z_p0 <= 3.0;
    pass = pass && ok;
    detail += fmt("(%.0f cps", is) + fmt(", %.0f uW): ", p0 * 1e6) + "rel=" + fmt("%.1e", std::max(e_is, e_p0)) +
              " noisy z=" + fmt("%.2f", z_is) + "/" + fmt("%.2f", z_p0) + " ";
  }
  report(7, "saturation round trips (1e-6 noiseless, 3 sigma at 5% noise)", pass, detail, seconds_since(t0));
}

// 8. Bi-exponential decay round trip.
void criterion8() {
  const auto t0 = Clock::now();
  const std::vector<photonsim::EmitterModel> g{photonsim::EmitterModel{}};
  const photonsim::BackgroundModel bg{0.0, 70e-9};
  const auto h = photonsim::simulate_pulsed_decay(g, bg, 0.5, 1e-6, 1e-9, 1'000'000, 800);
  const auto f = analysis::fit_decay(h);
  const double ef = std::abs(f.tau_fast / 10e-9 - 1.0), es = std::abs(f.tau_slow / 70e-9 - 1.0);
  report(8, "10 ns / 70 ns decay constants within 10%", !f.single_exponential && ef <= 0.10 && es <= 0.10,
         "tau_fast=" + fmt("%.2f", f.tau_fast * 1e9) + " ns tau_slow=" + fmt("%.2f", f.tau_slow * 1e9) + " ns",
         seconds_since(t0));
}

// 9. Simulate -> correlate -> calibrate -> count on the 15 x 16 FIB grid.
void criterion9() {
  const auto t0 = Clock::now();
  std::istringstream ini(R"([pattern]
kind = fib
[emitter]
lifetime = 10 ns
sat_power = 110 uW
sat_rate = 2 Mcps
[background]
slope = 450 cps/uW
[excitation]
power = 110 uW
duration = 10 ms
)");
  const auto cfg = config::parse_run_config(ini);
  const auto pattern = implantation::build_pattern(cfg.pattern);
  const std::uint64_t run_seed = 909;
  const std::size_t n = pattern.sites.size();

  // Count-rate acquisition on every spot.
  std::vector<pipeline::SiteSimulation> sims(n);
  parallel_for(n, [&](std::size_t i) {
    sims[i] = pipeline::simulate_site(cfg, pattern.sites[i], pipeline::site_seed(run_seed, i));
  });

  // Background from an unimplanted spot with a longer integration.
  auto bg_cfg = cfg;
  bg_cfg.duration = 0.2;
  const auto dark = pipeline::simulate_site(bg_cfg, {-10e-6, -10e-6, 0.0, "BG"}, derive_seed(run_seed, 99999));
  const double background = static_cast<double>(dark.stream.tags.size()) / bg_cfg.duration;

  // HBT on the three lowest-dose rows with a longer acquisition.
  auto g2_cfg = cfg;
  g2_cfg.duration = 0.5;
  std::vector<std::size_t> g2_sites;
  for (std::size_t i = 0; i < n; ++i)
    if (pattern.sites[i].expected_ions <= implantation::kFibRowDoses[2]) g2_sites.push_back(i);
  std::vector<analysis::SpotMeasurement> spots(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double rate = static_cast<double>(sims[i].stream.tags.size()) / cfg.duration;
    spots[i] = {pattern.sites[i].label, rate, background, std::nullopt, std::nullopt};
  }
  std::atomic<int> g2_used{0}, g2_right{0};
  parallel_for(g2_sites.size(), [&](std::size_t j) {
    const std::size_t i = g2_sites[j];
    const auto long_run = pipeline::simulate_site(g2_cfg, pattern.sites[i], pipeline::site_seed(run_seed, i));
    if (long_run.record.count_a == 0 || long_run.record.count_b == 0) return;
    const auto hist = correlator::correlate(long_run.stream, cfg.bin_width, cfg.window);
    const auto fit = correlator::fit_g2(hist);
    if (!fit.converged || fit.no_dip) return;
    const double rate = static_cast<double>(long_run.stream.tags.size()) / g2_cfg.duration;
    const auto rho = correlator::rho_from_rates(rate, background);
    if (rho.degenerate || rho.rho < 0.5) return;
    const auto corr = correlator::background_correct(fit.g2_zero, fit.g2_zero_sigma, rho.rho);
    const double g = std::clamp(corr.value, 0.0, 0.95);
    const long n_g2 = std::lround(1.0 / (1.0 - g));
    if (n_g2 < 1 || n_g2 > 3) return;
    spots[i].n_emitters_g2 = static_cast<int>(n_g2);
    spots[i].rate = rate;
    ++g2_used;
    if (n_g2 == long_run.record.true_n) ++g2_right;
  });

  const auto cal = analysis::calibrate_single_rate(spots, background);
  const double truth_single = photonsim::steady_state_rate(cfg.emitter, cfg.power);
  int considered = 0, correct = 0;
  double min_snr = 1e300;
  for (std::size_t i = 0; i < n; ++i) {
    const double rate = static_cast<double>(sims[i].stream.tags.size()) / cfg.duration;
    const double snr = cal.i_single * cfg.duration / std::sqrt(std::max(rate * cfg.duration, 1.0));
    min_snr = std::min(min_snr, snr);
    if (snr < 10.0) continue;
    ++considered;
    if (analysis::count_emitters(rate, background, cal.i_single) == sims[i].record.true_n) ++correct;
  }
  const double frac = considered > 0 ? static_cast<double>(correct) / considered : 0.0;
  const double rt = seconds_since(t0);
  report(9, "15x16 grid: correct N on >= 95% of spots at SNR >= 10", considered == static_cast<int>(n) && frac >= 0.95 && rt < 600.0,
         "correct=" + std::to_string(correct) + "/" + std::to_string(considered) + " (" + fmt("%.1f%%", 100 * frac) +
             ") I_single=" + fmt("%.0f", cal.i_single) + " (true " + fmt("%.0f", truth_single) + ") g2 spots " +
             std::to_string(g2_right.load()) + "/" + std::to_string(g2_used.load()) + " right, min SNR " +
             fmt("%.1f", min_snr),
         rt);
}

// 10. Determinism and formats.
void criterion10() {
  const auto t0 = Clock::now();
  const fs::path dir = fs::temp_directory_path() / ("emitterforge_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream(dir / "run.ini") << "[pattern]\nkind = fib\nrows = 3\ncolumns = 4\n"
                                      "[emitter]\nsat_rate = 200 kcps\n[background]\nslope = 100 cps/uW\n"
                                      "[excitation]\nduration = 50 ms\n[run]\nseed = 31337\n";
  }
  std::ostringstream sink;
  const auto run = [&](const std::string& out, const std::string& jobs) {
    return cli::run({"emitterforge", "simulate", (dir / "run.ini").string(), (dir / out).string(), "--jobs", jobs},
                    sink, sink);
  };
  bool identical = run("a", "1") == 0 && run("b", "4") == 0;
  std::size_t files = 0;
  auto bytes = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  };
  if (identical) {
    for (const auto& e : fs::directory_iterator(dir / "a")) {
      ++files;
      identical = identical && bytes(e.path()) == bytes(dir / "b" / e.path().filename());
    }
  }

  const auto m = photonsim::EmitterModel::from_saturation(2e5, 110e-6, 10e-9);
  const auto s = hbt_stream({m, m}, 110e-6, 2e4, 1.0, 1000);
  std::stringstream buf;
  ttg::write(buf, s);
  const auto back = ttg::read(buf);
  const bool lossless = back.tags == s.tags && back.resolution == s.resolution;

  const auto a = s.channel(0), b = s.channel(1);
  const auto binning = correlator::Binning::make(1e-9, 250e-9, s.resolution);
  const auto mono = correlator::correlate_raw(a, b, binning, s.tick_limit(), 1, 1);
  bool chunked = true;
  for (int chunks : {2, 16, 257}) chunked = chunked && correlator::correlate_raw(a, b, binning, s.tick_limit(), chunks, 4).counts == mono.counts;
  fs::remove_all(dir);
  report(10, "determinism, TTG1 round trip, chunked == monolithic", identical && files == 13 && lossless && chunked,
         std::string("simulate byte-identical=") + (identical ? "yes" : "no") + " (" + std::to_string(files) +
             " files) ttg lossless=" + (lossless ? "yes" : "no") + " chunked equal=" + (chunked ? "yes" : "no"),
         seconds_since(t0));
}

}  // namespace

int main() {
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion5();
  criterion6();
  criterion7();
  criterion8();
  criterion9();
  criterion10();
  std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
