#include "emitterforge/implantation.hpp"

#include <cmath>
#include <numbers>
#include <ostream>
#include <set>

#include "emitterforge/common.hpp"
#include "emitterforge/csv.hpp"

namespace emitterforge::implantation {

void BeamConfig::validate() const {
  require_positive(current, "beam current");
  if (charge_state < 1) throw DomainError("charge_state must be >= 1");
  require_positive(spot_fwhm, "spot_fwhm");
  require_finite(energy, "energy");
}

void StraggleParams::validate() const {
  require_positive(mean_depth, "mean_depth");
  require_positive(sigma_depth, "sigma_depth");
  require_positive(sigma_lateral, "sigma_lateral");
}

std::string to_string(PatternKind kind) {
  switch (kind) {
    case PatternKind::FibGrid: return "fib";
    case PatternKind::MaskHoles: return "mask";
    case PatternKind::Frame: return "frame";
  }
  return "?";
}

PatternKind pattern_kind_from_string(const std::string& text) {
  if (text == "fib" || text == "fib_grid") return PatternKind::FibGrid;
  if (text == "mask" || text == "mask_holes") return PatternKind::MaskHoles;
  if (text == "frame") return PatternKind::Frame;
  throw ConfigError("kind", "unknown pattern kind '" + text + "'");
}

void ImplantPattern::validate() const {
  straggle.validate();
  std::set<std::string> seen;
  for (const auto& s : sites) {
    require_nonnegative(s.expected_ions, "expected_ions");
    if (!seen.insert(s.label).second) throw DomainError("duplicate site label " + s.label);
  }
}

double ions_per_spot(const BeamConfig& beam, double dwell_time) {
  beam.validate();
  require_nonnegative(dwell_time, "dwell_time");
  return beam.current * dwell_time / (beam.charge_state * kElementaryCharge);
}

double dwell_time_for_ions(const BeamConfig& beam, double ions) {
  beam.validate();
  require_nonnegative(ions, "ions");
  return ions * (beam.charge_state * kElementaryCharge) / beam.current;
}

double expected_ions_through_hole(double fluence_per_cm2, double diameter) {
  require_nonnegative(fluence_per_cm2, "fluence");
  require_positive(diameter, "hole diameter");
  const double radius_cm = 0.5 * diameter * 100.0;
  return fluence_per_cm2 * std::numbers::pi * radius_cm * radius_cm;
}

std::vector<Position3> sample_ion_positions(const ImplantSite& site, std::int64_t n_ions,
                                            double beam_fwhm, const StraggleParams& straggle,
                                            std::uint64_t seed) {
  if (n_ions < 0) throw DomainError("n_ions must be >= 0");
  require_nonnegative(beam_fwhm, "beam_fwhm");
  straggle.validate();

  const double sigma_beam = beam_fwhm / kFwhmToSigma;
  const double sigma_xy = std::hypot(sigma_beam, straggle.sigma_lateral);
  Rng rng(seed);
  std::normal_distribution<double> lateral(0.0, sigma_xy);
  std::normal_distribution<double> depth(straggle.mean_depth, straggle.sigma_depth);

  std::vector<Position3> out;
  out.reserve(static_cast<std::size_t>(n_ions));
  for (std::int64_t i = 0; i < n_ions; ++i) {
    Position3 p;
    p.x = site.x + lateral(rng);
    p.y = site.y + lateral(rng);
    p.z = depth(rng);
    out.push_back(p);
  }
  return out;
}

std::string chess_label(int column, int row) {
  if (column < 0 || column >= 26) throw DomainError("column out of range for chess label");
  return std::string(1, static_cast<char>('A' + column)) + std::to_string(row + 1);
}

namespace {

int table_rows(int requested, std::size_t available, const char* key) {
  if (requested == 0) return static_cast<int>(available);
  if (requested < 0 || static_cast<std::size_t>(requested) > available)
    throw ConfigError(key, "rows must be in 1.." + std::to_string(available));
  return requested;
}

}  // namespace

ImplantPattern build_pattern(const PatternSpec& spec) {
  require_positive(spec.pitch, "pitch");
  ImplantPattern pattern;
  pattern.kind = spec.kind;
  pattern.straggle = spec.straggle;

  switch (spec.kind) {
    case PatternKind::FibGrid: {
      const int rows = table_rows(spec.rows, kFibRowDoses.size(), "rows");
      const int cols = spec.columns == 0 ? kFibColumns : spec.columns;
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
          pattern.sites.push_back({c * spec.pitch, r * spec.pitch, kFibRowDoses[r], chess_label(c, r)});
      break;
    }
    case PatternKind::MaskHoles: {
      if (!spec.fluence_per_cm2) throw ConfigError("fluence_per_cm2", "required for mask pattern");
      const int rows = table_rows(spec.rows, kMaskRowDiametersNm.size(), "rows");
      const int cols = spec.columns == 0 ? kMaskColumns : spec.columns;
      for (int r = 0; r < rows; ++r) {
        const double ions = expected_ions_through_hole(*spec.fluence_per_cm2, kMaskRowDiametersNm[r] * 1e-9);
        for (int c = 0; c < cols; ++c)
          pattern.sites.push_back({c * spec.pitch, r * spec.pitch, ions, chess_label(c, r)});
      }
      break;
    }
    case PatternKind::Frame: {
      // Ring of pitch x pitch cells one pitch outside the FIB grid.
      if (!spec.fluence_per_cm2) throw ConfigError("fluence_per_cm2", "required for frame pattern");
      require_nonnegative(*spec.fluence_per_cm2, "fluence_per_cm2");
      const int rows = table_rows(spec.rows, kFibRowDoses.size(), "rows");
      const int cols = spec.columns == 0 ? kFibColumns : spec.columns;
      const double cell_cm = spec.pitch * 100.0;
      const double ions = *spec.fluence_per_cm2 * cell_cm * cell_cm;
      int n = 0;
      auto add = [&](int c, int r) {
        pattern.sites.push_back({c * spec.pitch, r * spec.pitch, ions, "F" + std::to_string(++n)});
      };
      for (int c = -1; c <= cols; ++c) add(c, -1);
      for (int r = 0; r < rows; ++r) add(cols, r);
      for (int c = cols; c >= -1; --c) add(c, rows);
      for (int r = rows - 1; r >= 0; --r) add(-1, r);
      break;
    }
  }
  pattern.validate();
  return pattern;
}

void write_pattern_csv(std::ostream& out, const ImplantPattern& pattern) {
  out << "label,x_um,y_um,expected_ions\n";
  for (const auto& s : pattern.sites) {
    out << s.label << ',' << csv::format_double(s.x * 1e6) << ',' << csv::format_double(s.y * 1e6)
        << ',' << csv::format_double(s.expected_ions) << '\n';
  }
}

std::vector<ImplantSite> read_pattern_csv(std::istream& in) {
  csv::Reader reader(in, {"label", "x_um", "y_um", "expected_ions"});
  std::vector<ImplantSite> sites;
  std::vector<std::string> f;
  while (reader.next(f)) {
    const auto line = reader.line_number();
    sites.push_back({csv::parse_double(f[1], line) * 1e-6, csv::parse_double(f[2], line) * 1e-6,
                     csv::parse_double(f[3], line), f[0]});
  }
  return sites;
}

}  // namespace emitterforge::implantation
