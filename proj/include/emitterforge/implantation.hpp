#pragma once

// Ion-dose planning for FIB spot grids and masked broad-beam implantation,
// plus Gaussian straggling of ion landing positions.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace emitterforge::implantation {

struct BeamConfig {
  double current = 1.602e-12;  // A
  int charge_state = 2;        // Si2+
  double spot_fwhm = 50e-9;    // m
  double energy = 40e3;        // eV, informational
  double tilt_deg = 7.0;       // metadata only, channeling is not modeled

  void validate() const;
};

struct StraggleParams {
  double mean_depth = 60e-9;     // R_p
  double sigma_depth = 20e-9;
  double sigma_lateral = 25e-9;  // 1 sigma

  void validate() const;
};

struct Position3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  bool operator==(const Position3&) const = default;
};

struct ImplantSite {
  double x = 0.0;  // m
  double y = 0.0;  // m
  double expected_ions = 0.0;
  std::string label;
};

enum class PatternKind { FibGrid, MaskHoles, Frame };

std::string to_string(PatternKind kind);
PatternKind pattern_kind_from_string(const std::string& text);

struct ImplantPattern {
  std::vector<ImplantSite> sites;
  StraggleParams straggle;
  PatternKind kind = PatternKind::FibGrid;

  /// Throws DomainError when two sites share a label.
  void validate() const;
};

/// Average Si ions per FIB spot for rows 1..15 of the dose-series grid.
inline constexpr std::array<double, 15> kFibRowDoses = {6,   9,   13,  16,  25,  33,  45, 61,
                                                        83,  113, 153, 208, 283, 384, 500};
/// Nominal nanohole diameters (nm) for mask rows 1..20.
inline constexpr std::array<double, 20> kMaskRowDiametersNm = {30, 35, 40, 45,  50,  55,  60,
                                                               65, 70, 75, 80,  85,  90,  95,
                                                               100, 125, 150, 200, 300, 400};

inline constexpr int kFibColumns = 16;
inline constexpr int kMaskColumns = 20;

/// Expected ion count for one FIB dwell: I t / (q e).
double ions_per_spot(const BeamConfig& beam, double dwell_time);
/// Inverse of ions_per_spot.
double dwell_time_for_ions(const BeamConfig& beam, double ions);

/// Ions through a circular hole of the given diameter (m) at a fluence in
/// ions/cm^2, assuming full transmission.
double expected_ions_through_hole(double fluence_per_cm2, double diameter);

/// Landing positions for n_ions: beam spot and lateral straggle add in
/// quadrature, depth is Gaussian about the mean range. Deterministic per seed.
std::vector<Position3> sample_ion_positions(const ImplantSite& site, std::int64_t n_ions,
                                            double beam_fwhm, const StraggleParams& straggle,
                                            std::uint64_t seed);

struct PatternSpec {
  PatternKind kind = PatternKind::FibGrid;
  double pitch = 10e-6;                        // m
  std::optional<double> fluence_per_cm2;       // required for MaskHoles and Frame
  int rows = 0;                                // 0 = full table
  int columns = 0;                             // 0 = default per kind
  StraggleParams straggle;
};

/// Chess-style spot label: column letter + 1-based row, e.g. "I3".
std::string chess_label(int column, int row);

ImplantPattern build_pattern(const PatternSpec& spec);

/// label,x_um,y_um,expected_ions
void write_pattern_csv(std::ostream& out, const ImplantPattern& pattern);
std::vector<ImplantSite> read_pattern_csv(std::istream& in);

}  // namespace emitterforge::implantation
