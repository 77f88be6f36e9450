#include "emitterforge/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <thread>

#include "emitterforge/common.hpp"
#include "emitterforge/csv.hpp"
#include "emitterforge/defectstats.hpp"
#include "emitterforge/photonsim.hpp"

namespace emitterforge::pipeline {

std::uint64_t site_seed(std::uint64_t run_seed, std::size_t index) { return derive_seed(run_seed, index); }

SiteSimulation simulate_site(const config::RunConfig& cfg, const implantation::ImplantSite& site,
                             std::uint64_t seed) {
  SiteSimulation out;
  out.record.site = site;

  Rng rng(derive_seed(seed, 0));
  if (site.expected_ions > 0.0) {
    std::poisson_distribution<std::int64_t> ions(site.expected_ions);
    out.record.n_ions = ions(rng);
  }
  out.record.true_n = defectstats::sample_defect_count(out.record.n_ions, cfg.creation, derive_seed(seed, 1));
  out.record.emitter_rate = static_cast<double>(out.record.true_n) * photonsim::steady_state_rate(cfg.emitter, cfg.power);
  out.record.background_rate = cfg.background.rate(cfg.power);

  out.stream.resolution = cfg.resolution;
  out.stream.duration = cfg.duration;
  if (cfg.duration <= 0.0) return out;

  const std::vector<photonsim::EmitterModel> emitters(static_cast<std::size_t>(out.record.true_n), cfg.emitter);
  const auto light = merge_streams(
      {photonsim::simulate_emitter_tags(emitters, cfg.power, cfg.duration, derive_seed(seed, 2), cfg.resolution),
       photonsim::simulate_background_tags(out.record.background_rate, cfg.duration, derive_seed(seed, 3),
                                           cfg.resolution)});
  auto [a, b] = photonsim::run_detection(light, cfg.split_ratio, cfg.detector_a, cfg.detector_b, derive_seed(seed, 4));
  out.record.count_a = a.tags.size();
  out.record.count_b = b.tags.size();
  out.stream = merge_streams({a, b});
  out.stream.duration = cfg.duration;
  return out;
}

std::vector<SiteSimulation> simulate_pattern(const config::RunConfig& cfg,
                                             const implantation::ImplantPattern& pattern,
                                             std::uint64_t run_seed) {
  std::vector<SiteSimulation> results(pattern.sites.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < results.size(); i = next++)
      results[i] = simulate_site(cfg, pattern.sites[i], site_seed(run_seed, i));
  };
  const int jobs = std::max(1, cfg.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return results;
}

void write_manifest(std::ostream& out, const std::vector<SiteRecord>& records, std::uint64_t config_hash,
                    std::uint64_t run_seed) {
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(config_hash));
  out << "# config_hash=" << hex << " seed=" << run_seed << '\n';
  out << "label,x_um,y_um,expected_ions,n_ions,true_n,emitter_rate_cps,background_rate_cps,count_a,count_b\n";
  for (const auto& r : records) {
    out << r.site.label << ',' << csv::format_double(r.site.x * 1e6) << ',' << csv::format_double(r.site.y * 1e6)
        << ',' << csv::format_double(r.site.expected_ions) << ',' << r.n_ions << ',' << r.true_n << ','
        << csv::format_double(r.emitter_rate) << ',' << csv::format_double(r.background_rate) << ',' << r.count_a
        << ',' << r.count_b << '\n';
  }
}

std::vector<SiteRecord> read_manifest(std::istream& in) {
  csv::Reader reader(in, {"label", "x_um", "y_um", "expected_ions", "n_ions", "true_n", "emitter_rate_cps",
                          "background_rate_cps", "count_a", "count_b"});
  std::vector<SiteRecord> out;
  std::vector<std::string> f;
  while (reader.next(f)) {
    const auto line = reader.line_number();
    SiteRecord r;
    r.site.label = f[0];
    r.site.x = csv::parse_double(f[1], line) * 1e-6;
    r.site.y = csv::parse_double(f[2], line) * 1e-6;
    r.site.expected_ions = csv::parse_double(f[3], line);
    r.n_ions = csv::parse_int(f[4], line);
    r.true_n = csv::parse_int(f[5], line);
    r.emitter_rate = csv::parse_double(f[6], line);
    r.background_rate = csv::parse_double(f[7], line);
    r.count_a = static_cast<std::uint64_t>(csv::parse_int(f[8], line));
    r.count_b = static_cast<std::uint64_t>(csv::parse_int(f[9], line));
    out.push_back(r);
  }
  return out;
}

void write_outputs(const std::filesystem::path& out_dir, const std::vector<SiteSimulation>& sites,
                   const config::RunConfig& cfg, std::uint64_t run_seed) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<SiteRecord> records;
  for (const auto& s : sites) {
    ttg::write_file(out_dir / (s.record.site.label + ".ttg"), s.stream);
    records.push_back(s.record);
  }
  std::ofstream manifest(out_dir / "manifest.csv");
  if (!manifest) throw IoError("cannot write manifest in " + out_dir.string());
  write_manifest(manifest, records, cfg.hash(), run_seed);
  if (!manifest) throw IoError("failed writing manifest");
}

}  // namespace emitterforge::pipeline
