#include "trapsim/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>

#include "trapsim/error.hpp"
#include "trapsim/io.hpp"
#include "trapsim/polarization.hpp"

namespace trapsim {

namespace {

using nlohmann::json;

enum class Kind { number, integer, boolean, text, number_list, text_list, count_or_auto };

struct KeyDef {
  Kind kind;
  json fallback;  // null means "unset"
};

const std::map<std::string, KeyDef>& key_table() {
  static const std::map<std::string, KeyDef> table = {
      {"run.seed", {Kind::integer, 1}},
      {"beam.wavelength_nm", {Kind::number, 852.0}},
      {"primary.power_mw", {Kind::number, nullptr}},
      {"primary.waist_um", {Kind::number, 1.3}},
      {"primary.rayleigh_um", {Kind::number, 11.7}},
      {"primary.zeta", {Kind::number, 0.33}},
      {"primary.amplitude", {Kind::number, 1.0}},
      {"primary.ellipticity", {Kind::number, 1.0}},
      {"ancillary.power_mw", {Kind::number, 0.0}},
      {"ancillary.waist_um", {Kind::number, 2.03}},
      {"ancillary.rayleigh_um", {Kind::number, nullptr}},  // Gaussian pi w^2 / lambda
      {"ancillary.zeta", {Kind::number, nullptr}},         // same as primary.zeta
      {"trap.kappa", {Kind::number, 1.0}},
      {"trap.phase_rad", {Kind::number, 0.0}},
      {"trap.zeta_applies_to_ancillary", {Kind::boolean, false}},
      {"trap.theta_deg", {Kind::number, nullptr}},  // when set, kappa follows the wave plate
      {"trap.theta0_deg", {Kind::number, kDefaultWavePlateOffsetDeg}},
      {"dynamics.load_rate_probe", {Kind::number, 0.0}},
      {"dynamics.load_rate_mot", {Kind::number, 0.0}},
      {"dynamics.one_body_loss_rate", {Kind::number, 0.0}},
      {"dynamics.pair_loss_rate", {Kind::number, 0.0}},
      {"dynamics.n_sites", {Kind::integer, 1}},
      {"dynamics.max_atoms_per_site", {Kind::integer, 1}},
      {"dynamics.atom_count_rate", {Kind::number, 0.0}},
      {"dynamics.background_count_rate", {Kind::number, 0.0}},
      // Flattened (depth_mK, counts/s) pairs; overrides atom_count_rate.
      {"dynamics.count_rate_table", {Kind::number_list, json::array()}},
      {"cycle.load_s", {Kind::number, 3.0}},
      {"cycle.probe_s", {Kind::number, 2.0}},
      {"cycle.off_s", {Kind::number, 1.0}},
      {"cycle.bin_width_ms", {Kind::number, 50.0}},
      {"cycle.n_cycles", {Kind::integer, 100}},
      {"profile.z_min_um", {Kind::number, -5.0}},
      {"profile.z_max_um", {Kind::number, 5.0}},
      {"profile.n_points", {Kind::integer, 2001}},
      {"sites.threshold_mK", {Kind::number, 0.0}},
      {"sites.z_lo_um", {Kind::number, -2.0}},
      {"sites.z_hi_um", {Kind::number, 2.0}},
      {"sites.from_trap", {Kind::boolean, false}},
      {"analysis.model", {Kind::text, "poisson"}},
      {"analysis.components", {Kind::count_or_auto, "auto"}},
      {"sweep.param", {Kind::text, "panc_mw"}},
      {"sweep.grid", {Kind::number_list, json::array()}},
      {"sweep.outputs", {Kind::text_list, json::array({"trap_depth"})}},
  };
  return table;
}

const KeyDef& lookup(const std::string& key) {
  const auto& t = key_table();
  const auto it = t.find(key);
  if (it == t.end()) throw ConfigError("unknown configuration key '" + key + "'");
  return it->second;
}

void check_type(const std::string& key, const json& v) {
  if (v.is_null()) return;
  const KeyDef& def = lookup(key);
  bool ok = false;
  switch (def.kind) {
    case Kind::number: ok = v.is_number(); break;
    case Kind::integer: ok = v.is_number_integer(); break;
    case Kind::boolean: ok = v.is_boolean(); break;
    case Kind::text: ok = v.is_string(); break;
    case Kind::number_list:
      ok = v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number(); });
      break;
    case Kind::text_list:
      ok = v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); });
      break;
    case Kind::count_or_auto: ok = v.is_number_integer() || (v.is_string() && v.get<std::string>() == "auto"); break;
  }
  if (!ok) throw ConfigError("configuration key '" + key + "' has the wrong type: " + v.dump());
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  for (auto& f : split_csv_line(text))
    if (!f.empty()) out.push_back(f);
  return out;
}

// "a,b,c" or "start:stop:n" (inclusive, n points).
json parse_number_list(const std::string& text) {
  json arr = json::array();
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (;;) {
      const auto c = text.find(':', start);
      parts.push_back(text.substr(start, c == std::string::npos ? std::string::npos : c - start));
      if (c == std::string::npos) break;
      start = c + 1;
    }
    if (parts.size() != 3) throw ConfigError("range must look like start:stop:count");
    const double a = parse_double(parts[0]);
    const double b = parse_double(parts[1]);
    const long long n = parse_int(parts[2]);
    if (n < 1) throw ConfigError("range count must be >= 1");
    for (long long i = 0; i < n; ++i)
      arr.push_back(n == 1 ? a : (i + 1 == n ? b : a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1)));
    return arr;
  }
  for (const auto& f : split_list(text)) arr.push_back(parse_double(f));
  return arr;
}

double interpolate_table(const std::vector<double>& flat, double x) {
  if (flat.size() < 2 || flat.size() % 2 != 0)
    throw ConfigError("dynamics.count_rate_table needs (depth, rate) pairs");
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < flat.size(); i += 2) pts.emplace_back(flat[i], flat[i + 1]);
  std::sort(pts.begin(), pts.end());
  if (x <= pts.front().first) return pts.front().second;
  if (x >= pts.back().first) return pts.back().second;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (x <= pts[i].first) {
      const auto [x0, y0] = pts[i - 1];
      const auto [x1, y1] = pts[i];
      return x1 == x0 ? y1 : y0 + (y1 - y0) * (x - x0) / (x1 - x0);
    }
  }
  return pts.back().second;
}

}  // namespace

RunConfig::RunConfig() : values_(json::object()) {
  for (const auto& [key, def] : key_table()) values_[key] = def.fallback;
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& [key, def] : key_table()) out.push_back(key);
    return out;
  }();
  return k;
}

void RunConfig::merge(const json& doc) {
  if (!doc.is_object()) throw ConfigError("configuration must be a JSON object");
  const json* flat = &doc;
  if (doc.contains("config")) {
    // Provenance sidecar: only the "config" member is configuration.
    if (!doc["config"].is_object()) throw ConfigError("provenance 'config' member must be an object");
    flat = &doc["config"];
  }
  for (const auto& [key, value] : flat->items()) {
    check_type(key, value);
    values_[key] = value;
  }
}

void RunConfig::merge_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("invalid JSON in '" + path + "': " + e.what());
  }
  merge(doc);
}

void RunConfig::set_value(const std::string& key, json value) {
  check_type(key, value);
  values_[key] = std::move(value);
}

void RunConfig::set(const std::string& key, const std::string& text) {
  const KeyDef& def = lookup(key);
  try {
    switch (def.kind) {
      case Kind::number: set_value(key, parse_double(text)); break;
      case Kind::integer: set_value(key, parse_int(text)); break;
      case Kind::boolean:
        if (text == "true" || text == "1") set_value(key, true);
        else if (text == "false" || text == "0") set_value(key, false);
        else throw ConfigError("expected true/false for '" + key + "'");
        break;
      case Kind::text: set_value(key, text); break;
      case Kind::number_list: set_value(key, parse_number_list(text)); break;
      case Kind::text_list: set_value(key, json(split_list(text))); break;
      case Kind::count_or_auto:
        set_value(key, text == "auto" ? json("auto") : json(parse_int(text)));
        break;
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError("bad value for '" + key + "': " + e.what());
  }
}

bool RunConfig::has(const std::string& key) const { return values_.contains(key) && !values_.at(key).is_null(); }

double RunConfig::number(const std::string& key) const {
  lookup(key);
  if (!has(key)) throw ConfigError("missing required value '" + key + "'");
  return values_.at(key).get<double>();
}

std::string RunConfig::text(const std::string& key) const {
  lookup(key);
  return values_.at(key).get<std::string>();
}

std::uint64_t RunConfig::seed() const {
  const json& v = values_.at("run.seed");
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  const auto s = v.get<std::int64_t>();
  if (s < 0) throw ConfigError("run.seed must be >= 0");
  return static_cast<std::uint64_t>(s);
}

int RunConfig::n_cycles() const { return values_.at("cycle.n_cycles").get<int>(); }

TrapConfig RunConfig::trap_config(bool require_primary_power) const {
  TrapConfig cfg = default_trap_config();
  const double lambda = number("beam.wavelength_nm");

  cfg.primary.wavelength_nm = lambda;
  if (has("primary.power_mw")) {
    cfg.primary.power_mw = number("primary.power_mw");
  } else if (require_primary_power) {
    throw ConfigError("primary power is required (--pp-mw or primary.power_mw)");
  }
  cfg.primary.waist_um = number("primary.waist_um");
  cfg.primary.rayleigh_um = number("primary.rayleigh_um");
  cfg.primary.zeta = number("primary.zeta");
  cfg.primary.amplitude = number("primary.amplitude");
  cfg.primary.polarization = make_elliptical(number("primary.ellipticity"), kPrimaryLabHandedness);

  cfg.ancillary.wavelength_nm = lambda;
  cfg.ancillary.power_mw = number("ancillary.power_mw");
  cfg.ancillary.waist_um = number("ancillary.waist_um");
  cfg.ancillary.rayleigh_um = has("ancillary.rayleigh_um")
                                  ? number("ancillary.rayleigh_um")
                                  : std::numbers::pi * cfg.ancillary.waist_um * cfg.ancillary.waist_um / (lambda * 1e-3);
  cfg.ancillary.zeta = has("ancillary.zeta") ? number("ancillary.zeta") : cfg.primary.zeta;

  cfg.phase_rad = number("trap.phase_rad");
  cfg.zeta_applies_to_ancillary = values_.at("trap.zeta_applies_to_ancillary").get<bool>();
  cfg.kappa = has("trap.theta_deg")
                  ? ancillary_overlap_vs_angle(number("trap.theta_deg"), number("trap.theta0_deg"),
                                               cfg.primary.polarization)
                  : number("trap.kappa");
  cfg.validate();
  return cfg;
}

DynamicsParams RunConfig::dynamics() const {
  DynamicsParams p;
  p.load_rate_probe = number("dynamics.load_rate_probe");
  p.load_rate_mot = number("dynamics.load_rate_mot");
  p.one_body_loss_rate = number("dynamics.one_body_loss_rate");
  p.pair_loss_rate = number("dynamics.pair_loss_rate");
  p.n_sites = values_.at("dynamics.n_sites").get<int>();
  p.max_atoms_per_site = values_.at("dynamics.max_atoms_per_site").get<int>();
  p.atom_count_rate = number("dynamics.atom_count_rate");
  p.background_count_rate = number("dynamics.background_count_rate");

  const auto table = values_.at("dynamics.count_rate_table").get<std::vector<double>>();
  if (!table.empty()) p.atom_count_rate = interpolate_table(table, trap_depth(trap_config(true)));
  p.validate();
  return p;
}

CycleTiming RunConfig::timing() const {
  CycleTiming t;
  t.load_s = number("cycle.load_s");
  t.probe_s = number("cycle.probe_s");
  t.off_s = number("cycle.off_s");
  t.bin_width_ms = number("cycle.bin_width_ms");
  t.validate();
  return t;
}

SweepSpec RunConfig::sweep_spec() const {
  SweepSpec spec;
  spec.parameter = text("sweep.param");
  // The swept quantity may be the primary power itself.
  spec.trap = trap_config(spec.parameter != "pp_mw");
  if (spec.parameter == "pp_mw" && !has("primary.power_mw")) spec.trap.primary.power_mw = 0.0;
  spec.dynamics = dynamics();
  spec.timing = timing();
  spec.grid = values_.at("sweep.grid").get<std::vector<double>>();
  spec.outputs.clear();
  for (const auto& name : values_.at("sweep.outputs").get<std::vector<std::string>>())
    spec.outputs.push_back(sweep_output_from_string(name));
  spec.primary_ellipticity = number("primary.ellipticity");
  spec.waveplate_offset_deg = number("trap.theta0_deg");
  spec.site_threshold_mk = number("sites.threshold_mK");
  spec.site_z_lo_um = number("sites.z_lo_um");
  spec.site_z_hi_um = number("sites.z_hi_um");
  spec.sites_from_trap = values_.at("sites.from_trap").get<bool>();
  spec.n_cycles = n_cycles();
  const std::string model = text("analysis.model");
  if (model == "poisson") spec.model = MixtureKind::poisson;
  else if (model == "gaussian") spec.model = MixtureKind::gaussian;
  else throw ConfigError("analysis.model must be poisson or gaussian");
  const json& comp = values_.at("analysis.components");
  spec.n_components = comp.is_string() ? kAutoComponents : comp.get<int>();
  spec.validate();
  return spec;
}

}  // namespace trapsim
