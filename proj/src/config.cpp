#include "emitterforge/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <vector>

#include "emitterforge/common.hpp"
#include "emitterforge/csv.hpp"

namespace emitterforge::config {

namespace {

const std::map<std::string, double>& units(Dimension dim) {
  static const std::map<std::string, double> none = {{"", 1.0}};
  static const std::map<std::string, double> length = {
      {"", 1.0}, {"m", 1.0}, {"mm", 1e-3}, {"um", 1e-6}, {"\xC2\xB5m", 1e-6}, {"nm", 1e-9}};
  static const std::map<std::string, double> time = {{"", 1.0},   {"s", 1.0},   {"ms", 1e-3},
                                                     {"us", 1e-6}, {"ns", 1e-9}, {"ps", 1e-12}};
  static const std::map<std::string, double> power = {
      {"", 1.0}, {"W", 1.0}, {"mW", 1e-3}, {"uW", 1e-6}, {"\xC2\xB5W", 1e-6}, {"nW", 1e-9}};
  static const std::map<std::string, double> rate = {{"", 1.0},      {"cps", 1.0}, {"Hz", 1.0},
                                                     {"/s", 1.0},    {"kcps", 1e3}, {"Mcps", 1e6},
                                                     {"kHz", 1e3},   {"MHz", 1e6}};
  static const std::map<std::string, double> current = {{"", 1.0}, {"A", 1.0}, {"nA", 1e-9}, {"pA", 1e-12}};
  static const std::map<std::string, double> slope = {
      {"", 1.0}, {"cps/W", 1.0}, {"cps/mW", 1e3}, {"cps/uW", 1e6}};
  switch (dim) {
    case Dimension::None: return none;
    case Dimension::Length: return length;
    case Dimension::Time: return time;
    case Dimension::Power: return power;
    case Dimension::Rate: return rate;
    case Dimension::Current: return current;
    case Dimension::RatePerPower: return slope;
  }
  return none;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

using Tree = boost::property_tree::ptree;

Tree parse_tree(std::istream& in) {
  Tree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("", "line " + std::to_string(e.line()) + ": " + e.message());
  }
  return tree;
}

/// Typed accessors over the tree that record which keys were consumed.
class Settings {
 public:
  explicit Settings(const Tree& tree) : tree_(tree) {}

  std::optional<std::string> raw(const std::string& section, const std::string& key) {
    const auto sec = tree_.get_child_optional(section);
    if (!sec) return std::nullopt;
    const auto value = sec->get_optional<std::string>(key);
    if (!value) return std::nullopt;
    consumed_.insert(section + "." + key);
    return trim(*value);
  }

  void quantity(const std::string& section, const std::string& key, Dimension dim, double& target) {
    if (const auto v = raw(section, key)) {
      target = parse_quantity(*v, dim, section + "." + key);
      record(section, key, csv::format_double(target));
    }
  }

  void integer(const std::string& section, const std::string& key, int& target) {
    if (const auto v = raw(section, key)) {
      long long x = 0;
      const auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), x);
      if (ec != std::errc() || p != v->data() + v->size() || x < INT32_MIN || x > INT32_MAX)
        throw ConfigError(section + "." + key, "expected an integer, got '" + *v + "'");
      target = static_cast<int>(x);
      record(section, key, std::to_string(target));
    }
  }

  void unsigned64(const std::string& section, const std::string& key, std::optional<std::uint64_t>& target) {
    if (const auto v = raw(section, key)) {
      std::uint64_t x = 0;
      const auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), x);
      if (ec != std::errc() || p != v->data() + v->size())
        throw ConfigError(section + "." + key, "expected an unsigned integer, got '" + *v + "'");
      target = x;
      record(section, key, std::to_string(x));
    }
  }

  void text(const std::string& section, const std::string& key, std::string& target) {
    if (const auto v = raw(section, key)) {
      target = *v;
      record(section, key, target);
    }
  }

  /// Rejects any section or key that was never consumed.
  void reject_unknown(const std::set<std::string>& allowed_sections) const {
    for (const auto& [section, body] : tree_) {
      if (!allowed_sections.count(section)) throw ConfigError(section, "unknown section");
      if (body.empty() && !body.data().empty()) throw ConfigError(section, "value outside a section");
      for (const auto& [key, value] : body) {
        if (!consumed_.count(section + "." + key)) throw ConfigError(section + "." + key, "unknown key");
      }
    }
  }

  std::string canonical() const {
    std::string out;
    for (const auto& [k, v] : canonical_) out += k + "=" + v + "\n";
    return out;
  }

 private:
  void record(const std::string& section, const std::string& key, const std::string& value) {
    canonical_[section + "." + key] = value;
  }

  const Tree& tree_;
  std::set<std::string> consumed_;
  std::map<std::string, std::string> canonical_;
};

implantation::PatternSpec read_pattern(Settings& s) {
  implantation::PatternSpec spec;
  std::string kind = "fib";
  s.text("pattern", "kind", kind);
  spec.kind = implantation::pattern_kind_from_string(kind);
  double pitch_um = 10.0;
  s.quantity("pattern", "pitch_um", Dimension::None, pitch_um);
  if (!(pitch_um > 0.0)) throw ConfigError("pattern.pitch_um", "must be > 0");
  spec.pitch = pitch_um * 1e-6;
  double fluence = -1.0;
  s.quantity("pattern", "fluence_per_cm2", Dimension::None, fluence);
  if (fluence >= 0.0) {
    spec.fluence_per_cm2 = fluence;
  } else if (s.raw("pattern", "fluence_per_cm2")) {
    throw ConfigError("pattern.fluence_per_cm2", "must be >= 0");
  }
  s.integer("pattern", "rows", spec.rows);
  s.integer("pattern", "columns", spec.columns);
  if (spec.columns < 0 || spec.columns > 26) throw ConfigError("pattern.columns", "must be in 0..26");
  if (spec.kind != implantation::PatternKind::FibGrid && !spec.fluence_per_cm2)
    throw ConfigError("pattern.fluence_per_cm2", "required for kind '" + kind + "'");
  return spec;
}

template <typename Fn>
void validated(const std::string& key, Fn&& fn) {
  try {
    fn();
  } catch (const DomainError& e) {
    throw ConfigError(key, e.what());
  }
}

}  // namespace

double parse_quantity(const std::string& text, Dimension dim, const std::string& key) {
  const std::string t = trim(text);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr == t.data()) throw ConfigError(key, "expected a number, got '" + text + "'");
  const std::string unit = trim(std::string(ptr, t.data() + t.size()));
  const auto& table = units(dim);
  const auto it = table.find(unit);
  if (it == table.end()) throw ConfigError(key, "unknown unit '" + unit + "'");
  if (!std::isfinite(value)) throw ConfigError(key, "value must be finite");
  return value * it->second;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t RunConfig::hash() const { return fnv1a(canonical); }

implantation::PatternSpec parse_pattern_spec(std::istream& in) {
  const Tree tree = parse_tree(in);
  Settings s(tree);
  if (!tree.get_child_optional("pattern")) throw ConfigError("pattern", "missing section");
  auto spec = read_pattern(s);
  if (const auto sec = tree.get_child_optional("pattern")) {
    for (const auto& [key, value] : *sec) {
      static const std::set<std::string> known = {"kind", "pitch_um", "fluence_per_cm2", "rows", "columns"};
      if (!known.count(key)) throw ConfigError("pattern." + key, "unknown key");
    }
  }
  return spec;
}

RunConfig parse_run_config(std::istream& in) {
  const Tree tree = parse_tree(in);
  Settings s(tree);
  RunConfig cfg;

  if (tree.get_child_optional("pattern")) cfg.pattern = read_pattern(s);

  s.quantity("beam", "current", Dimension::Current, cfg.beam.current);
  s.integer("beam", "charge_state", cfg.beam.charge_state);
  s.quantity("beam", "spot_fwhm", Dimension::Length, cfg.beam.spot_fwhm);
  s.quantity("beam", "energy", Dimension::None, cfg.beam.energy);
  s.quantity("beam", "tilt_deg", Dimension::None, cfg.beam.tilt_deg);
  validated("beam", [&] { cfg.beam.validate(); });

  s.quantity("straggle", "mean_depth", Dimension::Length, cfg.pattern.straggle.mean_depth);
  s.quantity("straggle", "sigma_depth", Dimension::Length, cfg.pattern.straggle.sigma_depth);
  s.quantity("straggle", "sigma_lateral", Dimension::Length, cfg.pattern.straggle.sigma_lateral);
  validated("straggle", [&] { cfg.pattern.straggle.validate(); });

  s.quantity("creation", "p_success", Dimension::None, cfg.creation.p_success);
  s.integer("creation", "k", cfg.creation.k);
  validated("creation", [&] { cfg.creation.validate(); });

  double lifetime = 10e-9, sat_power = 110e-6, sat_rate = 13000.0, shelving = 0.0, deshelving = 0.0;
  s.quantity("emitter", "lifetime", Dimension::Time, lifetime);
  s.quantity("emitter", "sat_power", Dimension::Power, sat_power);
  s.quantity("emitter", "sat_rate", Dimension::Rate, sat_rate);
  s.quantity("emitter", "shelving_rate", Dimension::Rate, shelving);
  s.quantity("emitter", "deshelving_rate", Dimension::Rate, deshelving);
  validated("emitter", [&] {
    cfg.emitter = photonsim::EmitterModel::from_saturation(sat_rate, sat_power, lifetime, shelving, deshelving);
  });

  s.quantity("background", "slope", Dimension::RatePerPower, cfg.background.slope);
  s.quantity("background", "decay_time", Dimension::Time, cfg.background.decay_time);
  validated("background", [&] { cfg.background.validate(); });

  s.quantity("excitation", "power", Dimension::Power, cfg.power);
  s.quantity("excitation", "duration", Dimension::Time, cfg.duration);
  validated("excitation.power", [&] { require_nonnegative(cfg.power, "power"); });
  validated("excitation.duration", [&] { require_nonnegative(cfg.duration, "duration"); });

  photonsim::DetectorModel det;
  s.quantity("detectors", "split_ratio", Dimension::None, cfg.split_ratio);
  s.quantity("detectors", "efficiency", Dimension::None, det.efficiency);
  s.quantity("detectors", "jitter", Dimension::Time, det.jitter_sigma);
  s.quantity("detectors", "dead_time", Dimension::Time, det.dead_time);
  s.quantity("detectors", "dark_rate", Dimension::Rate, det.dark_rate);
  validated("detectors", [&] { det.validate(); });
  if (cfg.split_ratio < 0.0 || cfg.split_ratio > 1.0) throw ConfigError("detectors.split_ratio", "must be in [0, 1]");
  cfg.detector_a = det;
  cfg.detector_b = det;

  s.quantity("correlator", "bin_width", Dimension::Time, cfg.bin_width);
  s.quantity("correlator", "window", Dimension::Time, cfg.window);
  if (!(cfg.bin_width > 0.0)) throw ConfigError("correlator.bin_width", "must be > 0");
  if (!(cfg.window >= cfg.bin_width)) throw ConfigError("correlator.window", "must be >= bin_width");

  s.unsigned64("run", "seed", cfg.seed);
  s.quantity("run", "resolution", Dimension::Time, cfg.resolution);
  if (const auto jobs = s.raw("run", "jobs")) {  // not part of the hash: output is independent of it
    int x = 0;
    const auto [ptr, ec] = std::from_chars(jobs->data(), jobs->data() + jobs->size(), x);
    if (ec != std::errc() || ptr != jobs->data() + jobs->size()) throw ConfigError("run.jobs", "expected an integer");
    cfg.jobs = x;
  }
  if (!(cfg.resolution > 0.0)) throw ConfigError("run.resolution", "must be > 0");
  if (cfg.jobs < 1) throw ConfigError("run.jobs", "must be >= 1");

  s.reject_unknown({"pattern", "beam", "straggle", "creation", "emitter", "background", "excitation",
                    "detectors", "correlator", "run"});
  cfg.canonical = s.canonical();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse_run_config(in);
}

}  // namespace emitterforge::config
