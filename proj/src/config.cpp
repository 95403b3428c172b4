#include "pairhalo/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "pairhalo/event_io.hpp"

namespace pairhalo::config {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

const std::vector<std::pair<Stage, const char*>>& stage_names() {
  static const std::vector<std::pair<Stage, const char*>> names{
      {Stage::gp, "gp"},           {Stage::simulate, "simulate"}, {Stage::detect, "detect"},
      {Stage::correlate, "correlate"}, {Stage::fit, "fit"},       {Stage::stats, "stats"},
      {Stage::figures, "figures"}};
  return names;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

double to_double(const std::string& s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw std::invalid_argument("not a number: '" + s + "'");
  return v;
}

template <class Int>
Int to_int(const std::string& s) {
  Int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw std::invalid_argument("not an integer: '" + s + "'");
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw std::invalid_argument("expected true or false, got '" + s + "'");
}

std::string fmt(double v) { return io::format_double(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }
std::string fmt(const Vec3& v) { return fmt(v.x) + " " + fmt(v.y) + " " + fmt(v.z); }

Vec3 to_vec3(const std::string& s) {
  const auto w = words(s);
  if (w.size() != 3) throw std::invalid_argument("expected three numbers");
  return {to_double(w[0]), to_double(w[1]), to_double(w[2])};
}

struct Key {
  std::string section, name;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

/// Every configurable field, in serialization order.
std::vector<Key> keys(RunConfig& c) {
  std::vector<Key> k;
  auto num = [&](const char* sec, const char* name, double& ref) {
    k.push_back({sec, name, [&ref] { return fmt(ref); }, [&ref](const std::string& s) { ref = to_double(s); }});
  };
  auto integer = [&](const char* sec, const char* name, int& ref) {
    k.push_back({sec, name, [&ref] { return std::to_string(ref); },
                 [&ref](const std::string& s) { ref = to_int<int>(s); }});
  };
  auto flag = [&](const char* sec, const char* name, bool& ref) {
    k.push_back({sec, name, [&ref] { return fmt(ref); }, [&ref](const std::string& s) { ref = to_bool(s); }});
  };
  auto vec = [&](const char* sec, const char* name, Vec3& ref) {
    k.push_back({sec, name, [&ref] { return fmt(ref); }, [&ref](const std::string& s) { ref = to_vec3(s); }});
  };

  k.push_back({"run", "seed", [&c] { return std::to_string(c.seed); },
               [&c](const std::string& s) { c.seed = to_int<std::uint64_t>(s); }});
  k.push_back({"run", "out", [&c] { return c.out.generic_string(); },
               [&c](const std::string& s) { c.out = s; }});
  k.push_back({"run", "stages",
               [&c] {
                 std::string s;
                 for (Stage st : c.stages) s += (s.empty() ? "" : " ") + to_string(st);
                 return s;
               },
               [&c](const std::string& s) {
                 c.stages.clear();
                 for (const auto& w : words(s)) c.stages.push_back(stage_from_string(w));
               }});

  num("trap", "frequency_x_hz", c.trap_frequency_x);
  num("trap", "frequency_perp_hz", c.trap_frequency_perp);
  num("trap", "atom_number", c.trap.atom_number);
  num("trap", "scattering_length", c.trap.scattering_length);
  integer("grid", "nx", c.trap.grid.nx);
  integer("grid", "ny", c.trap.grid.ny);
  integer("grid", "nz", c.trap.grid.nz);
  num("grid", "half_extent_x", c.trap.grid.half_extent_x);
  num("grid", "half_extent_perp", c.trap.grid.half_extent_perp);
  num("grid", "extent_factor", c.trap.grid.extent_factor);
  num("solver", "tolerance", c.solver.tolerance);
  integer("solver", "max_iterations", c.solver.max_iterations);
  num("solver", "time_step", c.solver.time_step);
  integer("solver", "check_every", c.solver.check_every);

  num("halo", "shell_radius", c.halo.shell_radius);
  num("halo", "shell_rms_width", c.halo.shell_rms_width);
  num("halo", "mode_width_x", c.halo.mode_widths.x);
  num("halo", "mode_width_yz", c.halo.mode_widths.yz);
  num("halo", "cell_scale", c.halo.cell_scale);
  num("halo", "mean_occupation", c.halo.mean_occupation);
  num("halo", "mean_scattered", c.halo.mean_scattered);
  num("halo", "shot_number_spread", c.halo.shot_number_spread);
  integer("halo", "n_shots", c.halo.n_shots);
  num("halo", "rate_tau", c.halo.rate_tau);

  num("detector", "drop_height", c.drop_height);
  num("detector", "detector_radius", c.detector_radius);
  vec("detector", "com_velocity", c.com_velocity);
  num("detector", "efficiency", c.detector.efficiency);
  num("detector", "pair_resolution", c.detector.pair_resolution);
  k.push_back({"detector", "exclusion_zones",
               [&c] {
                 std::string s;
                 for (const auto& z : c.detector.exclusion_zones)
                   s += (s.empty() ? "" : " ; ") + fmt(z.direction) + " " + fmt(z.half_angle);
                 return s;
               },
               [&c](const std::string& s) {
                 c.detector.exclusion_zones.clear();
                 std::istringstream in(s);
                 for (std::string part; std::getline(in, part, ';');) {
                   const auto w = words(part);
                   if (w.empty()) continue;
                   if (w.size() != 4) throw std::invalid_argument("zone needs direction (3 numbers) and half angle");
                   c.detector.exclusion_zones.push_back(
                       {{to_double(w[0]), to_double(w[1]), to_double(w[2])}, to_double(w[3])});
                 }
               }});

  k.push_back({"correlator", "variables",
               [&c] {
                 std::string s;
                 for (auto v : c.variables) s += (s.empty() ? "" : " ") + correlator::to_string(v);
                 return s;
               },
               [&c](const std::string& s) {
                 c.variables.clear();
                 for (const auto& w : words(s)) c.variables.push_back(correlator::variable_from_string(w));
               }});
  vec("correlator", "window", c.correlation.window);
  vec("correlator", "bin_width", c.correlation.bin_width);
  num("correlator", "shell_gate", c.correlation.shell_gate);
  num("correlator", "shell_gate_sigmas", c.shell_gate_sigmas);

  flag("fit", "free_baseline", c.fit.free_baseline);
  integer("fit", "max_iterations", c.fit.max_iterations);
  integer("fit", "reweight_passes", c.fit.reweight_passes);

  integer("stats", "eta_bins", c.eta_bins);
  integer("stats", "min_shots_per_bin", c.min_shots_per_bin);
  flag("stats", "eta_fixed_widths", c.eta_fixed_widths);
  num("stats", "zone_half_angle", c.zone_half_angle);

  num("figures", "slice_width", c.slice_width);
  integer("figures", "image_bins", c.image_bins);
  return k;
}

}  // namespace

std::string to_string(Stage s) {
  for (const auto& [st, name] : stage_names())
    if (st == s) return name;
  return "?";
}

Stage stage_from_string(const std::string& s) {
  for (const auto& [st, name] : stage_names())
    if (s == name) return st;
  throw std::invalid_argument("unknown stage '" + s + "'");
}

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> all = [] {
    std::vector<Stage> v;
    for (const auto& [st, name] : stage_names()) v.push_back(st);
    return v;
  }();
  return all;
}

bool RunConfig::has_stage(Stage s) const { return std::find(stages.begin(), stages.end(), s) != stages.end(); }

gp::TrapConfig RunConfig::trap_config() const {
  gp::TrapConfig t = trap;
  t.omega_x = kTwoPi * trap_frequency_x;
  t.omega_perp = kTwoPi * trap_frequency_perp;
  return t;
}

kinematics::DetectorGeometry RunConfig::geometry(const kinematics::PhysicalConstants& c) const {
  kinematics::DetectorGeometry g;
  g.drop_height = drop_height;
  g.detector_radius = detector_radius;
  g.com_velocity = com_velocity * c.recoil_velocity();
  return g;
}

void validate(const RunConfig& cfg) {
  try {
    gp::validate(cfg.trap_config());
    halo::validate(cfg.halo);
    detector::validate(cfg.detector);
    kinematics::validate(cfg.geometry({}));
    correlator::BinLayout::from(cfg.correlation);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (cfg.variables.empty()) throw ConfigError("no correlation variables");
  if (cfg.eta_bins < 1) throw ConfigError("eta_bins must be >= 1");
  if (!(cfg.slice_width > 0.0)) throw ConfigError("slice_width must be > 0");
  if (cfg.image_bins < 1) throw ConfigError("image_bins must be >= 1");
  if (!(cfg.zone_half_angle > 0.0)) throw ConfigError("zone_half_angle must be > 0");
}

RunConfig parse(std::istream& in) {
  RunConfig cfg;
  auto table = keys(cfg);
  std::map<std::pair<std::string, std::string>, Key*> index;
  for (auto& k : table) index[{k.section, k.name}] = &k;

  std::string line, section;
  std::size_t lineno = 0;
  std::set<std::pair<std::string, std::string>> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(where + "malformed section header", lineno);
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value", lineno);
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    const auto it = index.find({section, key});
    if (it == index.end()) throw ConfigError(where + "unknown key '" + section + "." + key + "'", lineno);
    if (!seen.insert({section, key}).second)
      throw ConfigError(where + "duplicate key '" + section + "." + key + "'", lineno);
    try {
      it->second->set(value);
    } catch (const std::exception& e) {
      throw ConfigError(where + section + "." + key + ": " + e.what(), lineno);
    }
  }
  return cfg;
}

RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse(in);
}

RunConfig load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  return parse(in);
}

std::string serialize(const RunConfig& cfg) {
  RunConfig copy = cfg;
  const auto table = keys(copy);
  std::ostringstream out;
  std::string section;
  for (const auto& k : table) {
    if (k.section != section) {
      if (!section.empty()) out << '\n';
      section = k.section;
      out << '[' << section << "]\n";
    }
    out << k.name << " = " << k.get() << '\n';
  }
  return out.str();
}

void save(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << serialize(cfg);
}

}  // namespace pairhalo::config
