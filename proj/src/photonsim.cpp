#include "emitterforge/photonsim.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "emitterforge/common.hpp"

namespace emitterforge::photonsim {

void EmitterModel::validate() const {
  require_positive(lifetime, "lifetime");
  require_positive(sat_power, "sat_power");
  require_nonnegative(sat_rate, "sat_rate");
  require_nonnegative(shelving_rate, "shelving_rate");
  require_nonnegative(deshelving_rate, "deshelving_rate");
  if (shelving_rate > 0.0 && deshelving_rate <= 0.0)
    throw DomainError("deshelving_rate must be > 0 when shelving_rate > 0");
  require_finite(collection_efficiency, "collection_efficiency");
  if (collection_efficiency <= 0.0 || collection_efficiency > 1.0)
    throw DomainError("collection_efficiency must be in (0, 1]");
}

EmitterModel EmitterModel::from_saturation(double sat_rate, double sat_power, double lifetime,
                                           double shelving_rate, double deshelving_rate) {
  EmitterModel m;
  m.sat_rate = sat_rate;
  m.sat_power = sat_power;
  m.lifetime = lifetime;
  m.shelving_rate = shelving_rate;
  m.deshelving_rate = deshelving_rate;
  const double shelf = shelving_rate > 0.0 ? shelving_rate / deshelving_rate : 0.0;
  m.collection_efficiency = sat_rate * lifetime * (1.0 + shelf);
  m.validate();
  return m;
}

void BackgroundModel::validate() const {
  require_nonnegative(slope, "background slope");
  require_positive(decay_time, "background decay_time");
}

void DetectorModel::validate() const {
  require_finite(efficiency, "efficiency");
  if (efficiency < 0.0 || efficiency > 1.0) throw DomainError("efficiency must be in [0, 1]");
  require_nonnegative(jitter_sigma, "jitter_sigma");
  require_nonnegative(dead_time, "dead_time");
  require_nonnegative(dark_rate, "dark_rate");
}

double steady_state_rate(const EmitterModel& model, double power) {
  require_nonnegative(power, "power");
  if (power == 0.0) return 0.0;
  return model.sat_rate / (1.0 + model.sat_power / power);
}

double kinetic_detected_rate(const EmitterModel& model, double power) {
  model.validate();
  require_nonnegative(power, "power");
  if (power == 0.0) return 0.0;
  const double decay = 1.0 / model.lifetime;
  const double pump = (power / model.sat_power) * decay;
  const double shelf = model.shelving_rate > 0.0 ? model.shelving_rate / model.deshelving_rate : 0.0;
  const double excited = 1.0 / ((decay + model.shelving_rate) / pump + 1.0 + shelf);
  return model.collection_efficiency * excited * decay;
}

double antibunching_time(const EmitterModel& model, double power) {
  require_nonnegative(power, "power");
  return model.lifetime / (1.0 + power / model.sat_power);
}

namespace {

// Time between two recorded photons of one emitter. After every emission the
// emitter is back in the ground state, so recorded photons form a renewal
// process. With C emissions per recorded photon (geometric in the collection
// efficiency) and J shelving excursions (negative binomial in the branching
// ratio), the interval is a sum of C + J pump waits, C + J excited-state
// dwells and J shelf dwells, each a Gamma variate.
class RenewalSampler {
 public:
  RenewalSampler(const EmitterModel& m, double power)
      : pump_(power / m.sat_power / m.lifetime),
        leave_excited_(1.0 / m.lifetime + m.shelving_rate),
        deshelve_(m.deshelving_rate),
        p_emit_((1.0 / m.lifetime) / leave_excited_),
        shelving_(m.shelving_rate > 0.0),
        missed_(m.collection_efficiency) {}

  double operator()(Rng& rng) {
    const std::int64_t emissions = missed_(rng) + 1;
    std::int64_t shelvings = 0;
    if (shelving_) {
      std::negative_binomial_distribution<std::int64_t> nb(emissions, p_emit_);
      shelvings = nb(rng);
    }
    const double visits = static_cast<double>(emissions + shelvings);
    double t = std::gamma_distribution<double>(visits, 1.0 / pump_)(rng);
    t += std::gamma_distribution<double>(visits, 1.0 / leave_excited_)(rng);
    if (shelvings > 0)
      t += std::gamma_distribution<double>(static_cast<double>(shelvings), 1.0 / deshelve_)(rng);
    return t;
  }

 private:
  double pump_;
  double leave_excited_;
  double deshelve_;
  double p_emit_;
  bool shelving_;
  std::geometric_distribution<std::int64_t> missed_;
};

TimeTagStream empty_stream(double duration, double resolution) {
  TimeTagStream s;
  s.resolution = resolution;
  s.duration = duration;
  return s;
}

std::vector<std::int64_t> poisson_ticks(double rate, const TimeTagStream& frame, Rng& rng) {
  std::vector<std::int64_t> out;
  if (rate <= 0.0 || frame.duration <= 0.0) return out;
  std::exponential_distribution<double> wait(rate);
  const std::int64_t limit = frame.tick_limit();
  double t = wait(rng);
  while (t < frame.duration) {
    const auto tick = frame.to_ticks(t);
    if (tick < limit) out.push_back(tick);
    t += wait(rng);
  }
  return out;
}

}  // namespace

TimeTagStream simulate_emitter_tags(std::span<const EmitterModel> models, double power,
                                    double duration, std::uint64_t seed, double resolution) {
  require_positive(duration, "duration");
  require_positive(resolution, "resolution");
  require_nonnegative(power, "power");
  for (const auto& m : models) m.validate();

  std::vector<TimeTagStream> parts;
  parts.reserve(models.size());
  for (std::size_t i = 0; i < models.size(); ++i) {
    auto s = empty_stream(duration, resolution);
    if (power > 0.0) {
      Rng rng(derive_seed(seed, i));
      RenewalSampler next(models[i], power);
      const std::int64_t limit = s.tick_limit();
      for (double t = next(rng); t < duration; t += next(rng)) {
        const auto tick = s.to_ticks(t);
        if (tick < limit) s.tags.push_back({0, tick});
      }
    }
    parts.push_back(std::move(s));
  }
  if (parts.empty()) return empty_stream(duration, resolution);
  return merge_streams(parts);
}

TimeTagStream simulate_background_tags(double rate, double duration, std::uint64_t seed,
                                       double resolution) {
  require_nonnegative(rate, "background rate");
  require_nonnegative(duration, "duration");
  require_positive(resolution, "resolution");
  auto s = empty_stream(duration, resolution);
  Rng rng(seed);
  for (auto tick : poisson_ticks(rate, s, rng)) s.tags.push_back({0, tick});
  return s;
}

std::vector<std::int64_t> apply_dead_time(std::span<const std::int64_t> ticks, std::int64_t dead_ticks) {
  std::vector<std::int64_t> out;
  out.reserve(ticks.size());
  for (auto t : ticks) {
    if (out.empty() || t - out.back() >= dead_ticks || dead_ticks == 0) out.push_back(t);
  }
  return out;
}

namespace {

TimeTagStream detect(std::span<const std::int64_t> arrivals, const DetectorModel& det,
                     const TimeTagStream& frame, std::uint8_t channel, std::uint64_t seed) {
  Rng rng(seed);
  std::bernoulli_distribution keep(det.efficiency);
  std::normal_distribution<double> jitter(0.0, det.jitter_sigma);
  const std::int64_t limit = frame.tick_limit();

  std::vector<std::int64_t> ticks;
  ticks.reserve(arrivals.size());
  for (auto t : arrivals) {
    if (!keep(rng)) continue;
    if (det.jitter_sigma > 0.0) t += static_cast<std::int64_t>(std::llround(jitter(rng) / frame.resolution));
    if (t >= 0 && t < limit) ticks.push_back(t);
  }
  std::sort(ticks.begin(), ticks.end());
  const auto dead = static_cast<std::int64_t>(std::llround(det.dead_time / frame.resolution));
  ticks = apply_dead_time(ticks, dead);

  auto dark = poisson_ticks(det.dark_rate, frame, rng);
  std::vector<std::int64_t> merged(ticks.size() + dark.size());
  std::merge(ticks.begin(), ticks.end(), dark.begin(), dark.end(), merged.begin());

  TimeTagStream out = empty_stream(frame.duration, frame.resolution);
  out.tags.reserve(merged.size());
  for (auto t : merged) out.tags.push_back({channel, t});
  return out;
}

}  // namespace

std::pair<TimeTagStream, TimeTagStream> run_detection(const TimeTagStream& stream, double split_ratio,
                                                      const DetectorModel& det_a,
                                                      const DetectorModel& det_b, std::uint64_t seed) {
  require_finite(split_ratio, "split_ratio");
  if (split_ratio < 0.0 || split_ratio > 1.0) throw DomainError("split_ratio must be in [0, 1]");
  det_a.validate();
  det_b.validate();

  Rng route_rng(derive_seed(seed, 0));
  std::bernoulli_distribution to_a(split_ratio);
  std::vector<std::int64_t> arm_a, arm_b;
  for (const auto& t : stream.tags) (to_a(route_rng) ? arm_a : arm_b).push_back(t.timestamp);

  return {detect(arm_a, det_a, stream, 0, derive_seed(seed, 1)),
          detect(arm_b, det_b, stream, 1, derive_seed(seed, 2))};
}

std::int64_t DecayHistogram::total() const {
  std::int64_t s = 0;
  for (auto c : counts) s += c;
  return s;
}

DecayHistogram simulate_pulsed_decay(std::span<const EmitterModel> models, const BackgroundModel& bg,
                                     double bg_fraction, double pulse_period, double pulse_width,
                                     std::int64_t n_pulses, std::uint64_t seed, double bin_width) {
  require_positive(pulse_width, "pulse_width");
  if (!(pulse_period > pulse_width)) throw DomainError("pulse_period must exceed pulse_width");
  require_positive(bin_width, "bin_width");
  require_finite(bg_fraction, "bg_fraction");
  if (bg_fraction < 0.0 || bg_fraction > 1.0) throw DomainError("bg_fraction must be in [0, 1]");
  if (n_pulses < 0) throw DomainError("n_pulses must be >= 0");
  bg.validate();
  for (const auto& m : models) m.validate();
  if (models.empty() && bg_fraction < 1.0 && n_pulses > 0)
    throw DomainError("emitter photons requested but no emitter models given");

  DecayHistogram h;
  h.bin_width = bin_width;
  if (n_pulses == 0) return h;
  h.counts.assign(static_cast<std::size_t>(std::ceil(pulse_period / bin_width)), 0);

  Rng rng(seed);
  std::uniform_real_distribution<double> within_pulse(0.0, pulse_width);
  std::bernoulli_distribution is_bg(bg_fraction);
  std::uniform_int_distribution<std::size_t> pick(0, models.empty() ? 0 : models.size() - 1);
  std::exponential_distribution<double> unit(1.0);
  for (std::int64_t i = 0; i < n_pulses; ++i) {
    const double start = within_pulse(rng);
    const double tau = is_bg(rng) ? bg.decay_time : models[pick(rng)].lifetime;
    const double t = std::fmod(start + tau * unit(rng), pulse_period);
    const auto bin = std::min(h.counts.size() - 1, static_cast<std::size_t>(t / bin_width));
    ++h.counts[bin];
  }
  return h;
}

}  // namespace emitterforge::photonsim
