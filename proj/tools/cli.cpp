#include "cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "emitterforge/analysis.hpp"
#include "emitterforge/common.hpp"
#include "emitterforge/config.hpp"
#include "emitterforge/correlator.hpp"
#include "emitterforge/csv.hpp"
#include "emitterforge/defectstats.hpp"
#include "emitterforge/implantation.hpp"
#include "emitterforge/pipeline.hpp"
#include "emitterforge/timetag.hpp"

namespace emitterforge::cli {

namespace {

namespace fs = std::filesystem;

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

/// Writes to `path`, or to `fallback` when path is empty.
template <typename Fn>
void emit(const std::string& path, std::ostream& fallback, Fn&& write) {
  if (path.empty()) {
    write(fallback);
    return;
  }
  auto out = open_out(path);
  write(out);
  if (!out) throw IoError("failed writing " + path);
}

std::string kv(const std::string& key, double value) { return key + " " + csv::format_double(value) + "\n"; }

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, const config::RunConfig& cfg) {
  if (flag) return *flag;
  if (cfg.seed) return *cfg.seed;
  if (const char* env = std::getenv("EMITTERFORGE_SEED")) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError("EMITTERFORGE_SEED", "not an unsigned integer");
  }
  throw ConfigError("run.seed", "no seed given (flag, config or EMITTERFORGE_SEED)");
}

int cmd_pattern(const std::string& config_path, const std::string& out_path, std::ostream& out) {
  auto in = open_in(config_path);
  const auto spec = config::parse_pattern_spec(in);
  const auto pattern = implantation::build_pattern(spec);
  emit(out_path, out, [&](std::ostream& o) { implantation::write_pattern_csv(o, pattern); });
  return kOk;
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir, std::optional<std::uint64_t> seed_flag,
                 std::optional<int> jobs, std::ostream& out) {
  auto cfg = config::load_run_config(config_path);
  if (jobs) cfg.jobs = std::max(1, *jobs);
  const auto seed = resolve_seed(seed_flag, cfg);
  const auto pattern = implantation::build_pattern(cfg.pattern);
  const auto sites = pipeline::simulate_pattern(cfg, pattern, seed);
  pipeline::write_outputs(out_dir, sites, cfg, seed);
  out << "simulated " << sites.size() << " sites into " << out_dir << '\n';
  return kOk;
}

int cmd_g2(const std::string& tagfile, double bin_ns, double window_ns, std::optional<double> rho,
           std::optional<double> duration, const std::string& prefix_arg, std::ostream& out) {
  auto stream = ttg::read_file(tagfile);
  if (duration) stream.duration = *duration;
  if (stream.count(0) == 0 || stream.count(1) == 0)
    throw FormatError(ttg::kHeaderBytes, "time-tag file needs tags on channels 0 and 1");
  const auto hist = correlator::correlate(stream, bin_ns * 1e-9, window_ns * 1e-9);
  const auto fit = correlator::fit_g2(hist);
  std::optional<correlator::Correction> corr;
  const std::string prefix = prefix_arg.empty() ? fs::path(tagfile).replace_extension().string() : prefix_arg;

  emit(prefix + "_g2.csv", out, [&](std::ostream& o) { correlator::write_histogram_csv(o, hist); });
  if (rho) {
    corr = correlator::background_correct(fit.g2_zero, fit.g2_zero_sigma, *rho);
    const auto corrected = correlator::background_correct(hist, *rho);
    emit(prefix + "_g2_corrected.csv", out, [&](std::ostream& o) { correlator::write_histogram_csv(o, corrected); });
  }
  emit(prefix + "_fit.txt", out, [&](std::ostream& o) {
    correlator::write_fit_report(o, fit, corr);
    if (rho) o << kv("rho", *rho);
  });
  correlator::write_fit_report(out, fit, corr);
  return fit.converged ? kOk : kFit;
}

std::vector<std::int64_t> read_counts(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  std::uint64_t first = 0, no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (lines.empty()) first = no;
    lines.push_back(line);
  }
  std::vector<std::int64_t> counts;
  if (!lines.empty() && lines[0].rfind("label,", 0) == 0) {
    std::stringstream ss;
    for (const auto& l : lines) ss << l << '\n';
    for (const auto& r : pipeline::read_manifest(ss)) counts.push_back(r.true_n);
    return counts;
  }
  std::size_t start = (!lines.empty() && lines[0] == "N") ? 1 : 0;
  for (std::size_t i = start; i < lines.size(); ++i) {
    for (const auto& f : csv::split(lines[i])) {
      if (f.empty()) continue;
      const auto v = csv::parse_int(f, first + i);
      if (v < 0) throw FormatError(first + i, "negative count", "line");
      counts.push_back(v);
    }
  }
  return counts;
}

int cmd_stats(const std::string& input, int k, bool fit, const std::string& out_path, std::ostream& out) {
  auto in = open_in(input);
  const auto counts = read_counts(in);
  if (counts.empty()) throw ConfigError("input", "no counts in " + input);
  const auto dist = defectstats::occurrence_histogram(counts);
  emit(out_path, out, [&](std::ostream& o) {
    defectstats::write_distribution_csv(o, dist);
    o << "# samples=" << dist.sample_count << " k=" << k << '\n';
    if (fit) {
      const auto f = defectstats::fit_mu(dist, k);
      o << "# mu=" << csv::format_double(f.mu) << " log_likelihood=" << csv::format_double(f.log_likelihood)
        << " degenerate=" << (f.degenerate ? 1 : 0) << '\n';
    }
  });
  return kOk;
}

int cmd_saturation(const std::string& input, double integration_time, const std::string& out_path, std::ostream& out) {
  auto in = open_in(input);
  const auto points = analysis::read_saturation_csv(in);
  const auto fit = analysis::fit_saturation(points, integration_time);
  emit(out_path, out, [&](std::ostream& o) {
    o << "sat_rate_cps " << csv::format_double(fit.sat_rate) << ' ' << csv::format_double(fit.sigma(0)) << '\n';
    o << "sat_power_uW " << csv::format_double(fit.sat_power * 1e6) << ' ' << csv::format_double(fit.sigma(1) * 1e6)
      << '\n';
    o << "bg_slope_cps_per_uW " << csv::format_double(fit.bg_slope * 1e-6) << ' '
      << csv::format_double(fit.sigma(2) * 1e-6) << '\n';
    o << kv("reduced_chi2", fit.reduced_chi2) << kv("converged", fit.converged) << kv("unidentifiable", fit.unidentifiable);
  });
  return fit.converged ? kOk : kFit;
}

int cmd_decay(const std::string& input, const std::string& out_path, std::ostream& out) {
  auto in = open_in(input);
  const auto hist = analysis::read_decay_csv(in);
  const auto fit = analysis::fit_decay(hist);
  emit(out_path, out, [&](std::ostream& o) {
    o << kv("amp_fast", fit.amp_fast) << kv("tau_fast_ns", fit.tau_fast * 1e9) << kv("amp_slow", fit.amp_slow)
      << kv("tau_slow_ns", fit.tau_slow * 1e9) << kv("baseline", fit.baseline) << kv("reduced_chi2", fit.reduced_chi2)
      << kv("single_exponential", fit.single_exponential) << kv("no_fit", fit.no_fit)
      << kv("converged", fit.converged);
  });
  return fit.no_fit || !fit.converged ? kFit : kOk;
}

int cmd_dw(const std::string& input, double zpl_nm, double halfwidth_nm, int components, const std::string& out_path,
           std::ostream& out) {
  auto in = open_in(input);
  const auto spectrum = analysis::read_spectrum_csv(in, zpl_nm * 1e-9);
  const auto res = analysis::debye_waller(spectrum, halfwidth_nm * 1e-9, components);
  const double window = analysis::debye_waller_window(spectrum, halfwidth_nm * 1e-9);
  emit(out_path, out, [&](std::ostream& o) {
    o << kv("dw", res.dw) << kv("dw_window", window) << kv("zpl_area", res.zpl_area) << kv("psb_area", res.psb_area)
      << kv("zpl_in_noise", res.zpl_in_noise) << kv("converged", res.converged);
  });
  return res.converged ? kOk : kFit;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"emitterforge: implantation, photon-correlation and emitter-counting toolkit", "emitterforge"};
  app.require_subcommand(1);

  std::string config_path, out_path, out_dir, input, prefix;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  double bin_ns = 1.0, window_ns = 250.0, integration_time = 1.0, zpl_nm = 1278.0, halfwidth_nm = 3.0;
  std::optional<double> rho, duration;
  int k = 3, components = 3;
  bool fit_mu = false;

  auto* pattern = app.add_subcommand("pattern", "Write an implantation pattern as CSV");
  pattern->add_option("config", config_path, "Config file with a [pattern] section")->required();
  pattern->add_option("-o,--out", out_path, "Output CSV (default stdout)");

  auto* simulate = app.add_subcommand("simulate", "Simulate time tags for every site of a pattern");
  simulate->add_option("config", config_path, "Run config")->required();
  simulate->add_option("out_dir", out_dir, "Output directory")->required();
  simulate->add_option("--seed", seed, "Seed (overrides config and EMITTERFORGE_SEED)");
  simulate->add_option("--jobs", jobs, "Worker threads");

  auto* g2 = app.add_subcommand("g2", "Correlate a TTG1 file, fit the antibunching model");
  g2->add_option("tagfile", input, "TTG1 time-tag file")->required();
  g2->add_option("--bin", bin_ns, "Bin width in ns");
  g2->add_option("--window", window_ns, "Half-range in ns");
  g2->add_option("--rho", rho, "Signal fraction (I - B) / I for background correction");
  g2->add_option("--duration", duration, "Acquisition time in s (default: last tag)");
  g2->add_option("-o,--prefix", prefix, "Output path prefix");

  auto* stats = app.add_subcommand("stats", "Occurrence histogram of defect counts");
  stats->add_option("input", input, "Manifest CSV or list of counts")->required();
  stats->add_option("--k", k, "Implantations per composite defect");
  stats->add_flag("--fit-mu", fit_mu, "Maximum-likelihood fit of mu");
  stats->add_option("-o,--out", out_path, "Output CSV (default stdout)");

  auto* saturation = app.add_subcommand("saturation", "Fit the saturation law to power_uW,rate_cps[,sigma_cps]");
  saturation->add_option("input", input)->required();
  saturation->add_option("--time", integration_time, "Integration time per point in s (for Poisson sigma)");
  saturation->add_option("-o,--out", out_path);

  auto* decay = app.add_subcommand("decay", "Fit a bi-exponential decay to t_ns,counts");
  decay->add_option("input", input)->required();
  decay->add_option("-o,--out", out_path);

  auto* dw = app.add_subcommand("dw", "Debye-Waller factor from wavelength_nm,intensity");
  dw->add_option("input", input)->required();
  dw->add_option("--zpl", zpl_nm, "ZPL wavelength in nm");
  dw->add_option("--halfwidth", halfwidth_nm, "ZPL half-width in nm");
  dw->add_option("--components", components, "Number of phonon-sideband Gaussians");
  dw->add_option("-o,--out", out_path);

  std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kConfig;
  }

  try {
    if (*pattern) return cmd_pattern(config_path, out_path, out);
    if (*simulate) return cmd_simulate(config_path, out_dir, seed, jobs, out);
    if (*g2) return cmd_g2(input, bin_ns, window_ns, rho, duration, prefix, out);
    if (*stats) return cmd_stats(input, k, fit_mu, out_path, out);
    if (*saturation) return cmd_saturation(input, integration_time, out_path, out);
    if (*decay) return cmd_decay(input, out_path, out);
    if (*dw) return cmd_dw(input, zpl_nm, halfwidth_nm, components, out_path, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return kFormat;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kConfig;
  }
  return kConfig;
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  return run(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace emitterforge::cli
