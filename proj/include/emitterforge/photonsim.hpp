#pragma once

// Synthetic detection streams: three-level emitters under CW pumping,
// Poisson background, and a two-detector HBT chain.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "emitterforge/timetag.hpp"

namespace emitterforge::photonsim {

/// Ground -> excited at k_p = (P / sat_power) / lifetime; excited decays
/// radiatively at 1 / lifetime (detected with collection_efficiency) or
/// shelves at shelving_rate; the shelf empties at deshelving_rate.
struct EmitterModel {
  double lifetime = 10e-9;       // s
  double sat_power = 110e-6;     // W
  double sat_rate = 13000.0;     // detected cps at full saturation
  double shelving_rate = 0.0;    // 1/s
  double deshelving_rate = 0.0;  // 1/s
  double collection_efficiency = 1.3e-4;

  void validate() const;

  /// Sets collection_efficiency so the kinetic saturation rate equals sat_rate.
  static EmitterModel from_saturation(double sat_rate, double sat_power, double lifetime,
                                      double shelving_rate = 0.0, double deshelving_rate = 0.0);
};

struct BackgroundModel {
  double slope = 0.0;        // cps per W
  double decay_time = 70e-9; // s

  void validate() const;
  double rate(double power) const { return slope * power; }
};

struct DetectorModel {
  double efficiency = 1.0;
  double jitter_sigma = 0.0;  // s
  double dead_time = 0.0;     // s
  double dark_rate = 0.0;     // cps

  void validate() const;
};

/// Saturation law emitter term: sat_rate / (1 + sat_power / power).
double steady_state_rate(const EmitterModel& model, double power);

/// Exact stationary detected rate of the three-level kinetics.
double kinetic_detected_rate(const EmitterModel& model, double power);

/// Time constant of the antibunching dip for the two-level kinetics,
/// lifetime / (1 + power / sat_power).
double antibunching_time(const EmitterModel& model, double power);

/// Detections of all emitters merged on channel 0. Each emitter starts in
/// the ground state at t = 0. Deterministic per seed.
TimeTagStream simulate_emitter_tags(std::span<const EmitterModel> models, double power,
                                    double duration, std::uint64_t seed,
                                    double resolution = 1e-12);

/// Homogeneous Poisson process on channel 0.
TimeTagStream simulate_background_tags(double rate, double duration, std::uint64_t seed,
                                       double resolution = 1e-12);

/// Beam splitter plus two detectors; returns (A on channel 0, B on channel 1).
std::pair<TimeTagStream, TimeTagStream> run_detection(const TimeTagStream& stream, double split_ratio,
                                                      const DetectorModel& det_a,
                                                      const DetectorModel& det_b, std::uint64_t seed);

/// Non-paralyzable dead-time filter over one sorted channel.
std::vector<std::int64_t> apply_dead_time(std::span<const std::int64_t> ticks, std::int64_t dead_ticks);

struct DecayHistogram {
  double bin_width = 0.5e-9;     // s; bin i covers [i w, (i + 1) w) after the pulse rising edge
  std::vector<std::int64_t> counts;

  double bin_center(std::size_t i) const { return (static_cast<double>(i) + 0.5) * bin_width; }
  std::int64_t total() const;
};

/// One detected photon per pulse. Emission starts uniformly within the
/// rectangular pulse; the delay is exponential with an emitter lifetime
/// (probability 1 - bg_fraction) or bg.decay_time. Delays wrap modulo the
/// pulse period.
DecayHistogram simulate_pulsed_decay(std::span<const EmitterModel> models, const BackgroundModel& bg,
                                     double bg_fraction, double pulse_period, double pulse_width,
                                     std::int64_t n_pulses, std::uint64_t seed,
                                     double bin_width = 0.5e-9);

}  // namespace emitterforge::photonsim
