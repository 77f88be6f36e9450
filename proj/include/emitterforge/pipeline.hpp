#pragma once

// Per-site simulation chain: ion count -> defect count -> emitter and
// background photons -> HBT detection.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "emitterforge/config.hpp"
#include "emitterforge/implantation.hpp"
#include "emitterforge/timetag.hpp"

namespace emitterforge::pipeline {

struct SiteRecord {
  implantation::ImplantSite site;
  std::int64_t n_ions = 0;
  std::int64_t true_n = 0;
  double emitter_rate = 0.0;     // cps expected from the saturation law, all emitters
  double background_rate = 0.0;  // cps
  std::uint64_t count_a = 0;
  std::uint64_t count_b = 0;
};

struct SiteSimulation {
  SiteRecord record;
  TimeTagStream stream;  // channel 0 = detector A, 1 = detector B
};

/// Seed for site `index` of a run.
std::uint64_t site_seed(std::uint64_t run_seed, std::size_t index);

/// Ion count is Poisson about the site's expected count. Zero duration gives
/// an empty stream.
SiteSimulation simulate_site(const config::RunConfig& cfg, const implantation::ImplantSite& site,
                             std::uint64_t seed);

/// Simulates every site on cfg.jobs threads; results keep pattern order.
std::vector<SiteSimulation> simulate_pattern(const config::RunConfig& cfg,
                                             const implantation::ImplantPattern& pattern,
                                             std::uint64_t run_seed);

/// Writes <label>.ttg per site and manifest.csv into out_dir.
void write_outputs(const std::filesystem::path& out_dir, const std::vector<SiteSimulation>& sites,
                   const config::RunConfig& cfg, std::uint64_t run_seed);

// label,x_um,y_um,expected_ions,n_ions,true_n,emitter_rate_cps,background_rate_cps,count_a,count_b
void write_manifest(std::ostream& out, const std::vector<SiteRecord>& records, std::uint64_t config_hash,
                    std::uint64_t run_seed);
std::vector<SiteRecord> read_manifest(std::istream& in);

}  // namespace emitterforge::pipeline
