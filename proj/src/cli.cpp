#include "trapsim/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "trapsim/atom_dynamics.hpp"
#include "trapsim/config.hpp"
#include "trapsim/error.hpp"
#include "trapsim/io.hpp"
#include "trapsim/loading_model.hpp"
#include "trapsim/sweep_runner.hpp"
#include "trapsim/trace_analysis.hpp"
#include "trapsim/trap_potential.hpp"

namespace trapsim::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config_path;
  std::optional<std::string> seed;
  std::string out_dir = ".";
  std::vector<std::string> sets;  // key=value
};

// Command-line flags that map one-to-one onto configuration keys. Values are
// kept as text so they reach the config without a binary round trip.
struct Overrides {
  std::map<std::string, std::string> values;

  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    app->add_option_function<std::string>(flag, [this, key](const std::string& v) { values[key] = v; }, help);
  }

  void add_switch(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    app->add_flag_callback(flag, [this, key]() { values[key] = "true"; }, help);
  }
};

void add_beam_flags(CLI::App* app, Overrides& o) {
  o.add(app, "--pp-mw", "primary.power_mw", "Primary beam power (mW)");
  o.add(app, "--panc-mw", "ancillary.power_mw", "Ancillary beam power (mW)");
  o.add(app, "--zeta", "primary.zeta", "Effective power fraction of the primary beam");
  o.add(app, "--kappa", "trap.kappa", "Interference visibility in [0, 1]");
  o.add(app, "--theta-deg", "trap.theta_deg", "Ancillary wave-plate angle; sets kappa");
  o.add(app, "--theta0-deg", "trap.theta0_deg", "Wave-plate calibration offset");
  o.add(app, "--phase-rad", "trap.phase_rad", "Relative phase of the standing wave");
  o.add_switch(app, "--zeta-both", "trap.zeta_applies_to_ancillary", "Apply zeta to the ancillary beam too");
}

void add_dynamics_flags(CLI::App* app, Overrides& o) {
  o.add(app, "--load-rate-probe", "dynamics.load_rate_probe", "Loading rate during the probe (1/s)");
  o.add(app, "--load-rate-mot", "dynamics.load_rate_mot", "Loading rate with the MOT on (1/s)");
  o.add(app, "--loss-rate", "dynamics.one_body_loss_rate", "One-body loss rate 1/tau (1/s)");
  o.add(app, "--pair-loss-rate", "dynamics.pair_loss_rate", "Pair loss rate (1/s per pair)");
  o.add(app, "--n-sites", "dynamics.n_sites", "Number of independent trap sites");
  o.add(app, "--max-atoms", "dynamics.max_atoms_per_site", "Occupancy cap per site");
  o.add(app, "--atom-rate", "dynamics.atom_count_rate", "Detected counts/s per atom");
  o.add(app, "--background-rate", "dynamics.background_count_rate", "Background counts/s");
  o.add(app, "--n-cycles", "cycle.n_cycles", "Number of 6 s cycles");
  o.add(app, "--bin-ms", "cycle.bin_width_ms", "Bin width (ms)");
}

RunConfig resolve(const Globals& g, const Overrides& o) {
  RunConfig cfg;
  if (!g.config_path.empty()) cfg.merge_file(g.config_path);
  for (const auto& kv : g.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& [key, text] : o.values) cfg.set(key, text);
  if (g.seed) cfg.set("run.seed", *g.seed);
  return cfg;
}

json provenance(const std::string& command, const RunConfig& cfg) {
  return json{{"tool", "trapsim"}, {"version", kVersion}, {"command", command}, {"config", cfg.values()}};
}

fs::path ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir + "'");
  return fs::path(dir);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

unsigned thread_cap() {
  if (const char* env = std::getenv("TRAPSIM_THREADS")) {
    try {
      const long long n = parse_int(env);
      if (n >= 1) return static_cast<unsigned>(n);
    } catch (const std::invalid_argument&) {
    }
    throw ConfigError("TRAPSIM_THREADS must be a positive integer");
  }
  return 0;
}

json fit_to_json(const TraceReport& r) {
  const auto& fit = r.fit;
  json occ = json::object();
  for (const auto& [n, p] : r.occupancy) occ[std::to_string(n)] = p;
  json out{{"model", fit.kind == MixtureKind::poisson ? "poisson" : "gaussian"},
           {"n_components", fit.n_components()},
           {"weights", fit.weights},
           {"means", fit.means},
           {"log_likelihood", fit.log_likelihood},
           {"lifetime_ms", r.lifetime_ms ? json(*r.lifetime_ms) : json(nullptr)},
           {"occupancy_probabilities", occ},
           {"converged", fit.converged},
           {"iterations", fit.iterations},
           {"degenerate", fit.degenerate}};
  if (fit.kind == MixtureKind::gaussian) {
    out["variances"] = fit.variances;
    out["variance_floor_active"] = fit.variance_floor_active;
  }
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  out["lifetime_binned_ms"] = opt(r.lifetime_binned_ms);
  out["lifetime_raw_ms"] = opt(r.lifetime_raw_ms);
  out["gap_lifetime_ms"] = opt(r.gap_lifetime_ms);
  json plateau = json::array();
  for (const auto& m : r.plateau_means) plateau.push_back(m ? json(*m) : json(nullptr));
  out["plateau_means"] = plateau;
  out["step_counts"] = r.step_counts ? json(*r.step_counts) : json(nullptr);
  std::size_t completed = 0;
  for (const auto& d : r.dwells)
    if (d.state == 1 && !d.right_censored) ++completed;
  out["completed_single_atom_dwells"] = completed;
  return out;
}

void write_report(const fs::path& path, const std::string& command, const RunConfig& cfg, json report,
                  json extra = json::object()) {
  json doc = provenance(command, cfg);
  for (auto& [k, v] : extra.items()) doc[k] = v;
  doc["report"] = std::move(report);
  write_text(path, doc.dump(2) + "\n");
}

int cmd_depth(const RunConfig& cfg, const Globals& g, std::ostream& out) {
  const TrapConfig trap = cfg.trap_config();
  const double depth = trap_depth(trap);
  TrapConfig bare = trap;
  bare.ancillary.power_mw = 0.0;

  json report{{"depth_mK", depth},
              {"depth_without_ancillary_mK", trap_depth(bare)},
              {"kappa", trap.kappa},
              {"rho_primary_mW_per_um2", primary_axial_density(trap, 0.0)},
              {"rho_ancillary_mW_per_um2", ancillary_axial_density(trap, 0.0)},
              {"stark_shift_MHz", stark_shift(depth)},
              {"enhancement_exact", nullptr},
              {"enhancement_approx", nullptr}};
  if (trap.primary.power_mw > 0.0) {
    report["enhancement_exact"] = enhancement_ratio_exact(trap);
    report["enhancement_approx"] =
        enhancement_ratio_approx(trap.primary.power_mw, trap.ancillary.power_mw, trap.primary.waist_um,
                                 trap.ancillary.waist_um, trap.primary.zeta, trap.zeta_applies_to_ancillary);
  }

  write_report(ensure_dir(g.out_dir) / "depth.json", "depth", cfg, report);
  out << report.dump(2) << '\n';
  return ExitCode::ok;
}

int cmd_profile(const RunConfig& cfg, const Globals& g, std::ostream& out) {
  const TrapConfig trap = cfg.trap_config();
  const long long n = cfg.values().at("profile.n_points").get<long long>();
  if (n < 2) throw ConfigError("profile.n_points must be >= 2");
  const PotentialProfile prof = potential_profile(trap, cfg.number("profile.z_min_um"),
                                                  cfg.number("profile.z_max_um"), static_cast<std::size_t>(n));
  std::ostringstream csv;
  csv << "z_um,depth_mK\n";
  for (std::size_t i = 0; i < prof.z_um.size(); ++i)
    csv << format_double(prof.z_um[i]) << ',' << format_double(prof.depth_mk[i]) << '\n';

  const fs::path dir = ensure_dir(g.out_dir);
  write_text(dir / "profile.csv", csv.str());
  write_report(dir / "profile.json", "profile", cfg, json{{"rows", prof.z_um.size()}},
               json{{"outputs", {"profile.csv"}}});
  out << json{{"profile_csv", (dir / "profile.csv").string()}, {"rows", prof.z_um.size()}}.dump(2) << '\n';
  return ExitCode::ok;
}

int cmd_simulate(const RunConfig& cfg, const Globals& g, std::ostream& out) {
  const DynamicsParams dyn = cfg.dynamics();
  const CycleTiming timing = cfg.timing();
  const int n_cycles = cfg.n_cycles();
  const TraceRecord trace = concatenate(simulate_cycles(dyn, timing, n_cycles, cfg.seed()));

  std::ostringstream csv;
  write_trace_csv(trace, csv);
  const fs::path dir = ensure_dir(g.out_dir);
  write_text(dir / "trace.csv", csv.str());
  write_report(dir / "trace.json", "simulate", cfg,
               json{{"n_cycles", n_cycles}, {"bins", trace.counts.size()}, {"bin_width_ms", trace.bin_width_ms}},
               json{{"outputs", {"trace.csv"}}});
  out << json{{"trace_csv", (dir / "trace.csv").string()},
              {"sidecar", (dir / "trace.json").string()},
              {"n_cycles", n_cycles},
              {"bins", trace.counts.size()}}
             .dump(2)
      << '\n';
  return ExitCode::ok;
}

int cmd_analyze(const RunConfig& cfg, const Globals& g, const std::string& path, bool keep_first_bin,
                std::ostream& out) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace file '" + path + "'");
  TraceRecord trace = read_trace_csv(in, cfg.number("cycle.bin_width_ms"));
  trace.forced_first_bin = !keep_first_bin;

  const std::string model = cfg.text("analysis.model");
  MixtureKind kind;
  if (model == "poisson") kind = MixtureKind::poisson;
  else if (model == "gaussian") kind = MixtureKind::gaussian;
  else throw ConfigError("model must be poisson or gaussian");
  const json& comp = cfg.values().at("analysis.components");
  const int n = comp.is_string() ? kAutoComponents : comp.get<int>();
  if (n < 0 || n > 5) throw ConfigError("components must be 1..5 or auto");

  const TraceReport r = analyze_trace(trace, kind, n);
  json report = fit_to_json(r);
  report["n_bins"] = build_histogram(trace).total();
  report["bin_width_ms"] = trace.bin_width_ms;

  write_report(ensure_dir(g.out_dir) / "analysis.json", "analyze", cfg, report,
               json{{"input", path}, {"keep_first_bin", keep_first_bin}});
  out << report.dump(2) << '\n';
  return ExitCode::ok;
}

int cmd_fit_loading(const RunConfig& cfg, const Globals& g, const std::string& path, std::ostream& out) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open loading-curve file '" + path + "'");
  const LoadingFit fit = fit_loading_curve(read_loading_csv(in));
  json report{{"eta0", fit.params.eta0},
              {"alpha_per_mW", fit.params.alpha_per_mw},
              {"p_half_mW", fit.params.p_half_mw},
              {"rms_residual", fit.rms_residual},
              {"high_residual", fit.high_residual}};
  write_report(ensure_dir(g.out_dir) / "fit_loading.json", "fit-loading", cfg, report, json{{"input", path}});
  out << report.dump(2) << '\n';
  return ExitCode::ok;
}

int cmd_sweep(const RunConfig& cfg, const Globals& g, std::ostream& out) {
  const SweepSpec spec = cfg.sweep_spec();
  const SweepResult result = run_sweep(spec, cfg.seed(), thread_cap());

  std::ostringstream csv;
  write_sweep_csv(result, csv);
  const fs::path dir = ensure_dir(g.out_dir);
  const std::string stem = "sweep_" + spec.parameter + "_" + utc_timestamp();
  std::string name = stem;
  for (int i = 1; fs::exists(dir / (name + ".csv")); ++i) name = stem + "_" + std::to_string(i);
  write_text(dir / (name + ".csv"), csv.str());

  std::size_t failed = 0;
  for (const auto& row : result.rows)
    if (!row.error.empty()) ++failed;
  write_report(dir / (name + ".json"), "sweep", cfg,
               json{{"rows", result.rows.size()}, {"failed_rows", failed}, {"columns", result.columns}},
               json{{"outputs", {name + ".csv"}}});
  out << json{{"sweep_csv", (dir / (name + ".csv")).string()},
              {"sidecar", (dir / (name + ".json")).string()},
              {"rows", result.rows.size()},
              {"failed_rows", failed}}
             .dump(2)
      << '\n';
  return ExitCode::ok;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Optical tweezer loading simulator and trace analysis toolkit", "trapsim"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config_path, "JSON configuration or provenance sidecar");
  app.add_option_function<std::string>("--seed", [&g](const std::string& s) { g.seed = s; }, "Master seed");
  app.add_option("--out", g.out_dir, "Output directory");
  app.add_option("--set", g.sets, "Override a configuration key (key=value)");

  Overrides o;
  auto* depth = app.add_subcommand("depth", "Trap depth, enhancement ratios and Stark shift");
  add_beam_flags(depth, o);

  auto* profile = app.add_subcommand("profile", "Write the axial depth profile as CSV");
  add_beam_flags(profile, o);
  o.add(profile, "--z-min", "profile.z_min_um", "Profile start (um)");
  o.add(profile, "--z-max", "profile.z_max_um", "Profile end (um)");
  o.add(profile, "--n-points", "profile.n_points", "Number of samples");

  auto* simulate = app.add_subcommand("simulate", "Simulate loading cycles and write a count trace");
  add_dynamics_flags(simulate, o);

  std::string trace_path;
  bool keep_first_bin = false;
  auto* analyze = app.add_subcommand("analyze", "Fit a count trace: mixture, occupancy, lifetime");
  analyze->add_option("trace", trace_path, "Trace CSV (t_ms,counts[,phase])")->required();
  o.add(analyze, "--model", "analysis.model", "poisson or gaussian");
  o.add(analyze, "--components", "analysis.components", "Number of components or auto");
  analyze->add_flag("--keep-first-bin", keep_first_bin, "The first bin of each probe window is signal");

  std::string points_path;
  auto* fit_loading = app.add_subcommand("fit-loading", "Fit the erf loading curve");
  fit_loading->add_option("points", points_path, "CSV power_mW,probability[,stderr]")->required();

  auto* sweep = app.add_subcommand("sweep", "Evaluate outputs over a parameter grid");
  add_beam_flags(sweep, o);
  add_dynamics_flags(sweep, o);
  o.add(sweep, "--param", "sweep.param", "panc_mw, pp_mw, theta_deg, kappa or phase_rad");
  o.add(sweep, "--grid", "sweep.grid", "Values a,b,c or start:stop:count");
  o.add(sweep, "--outputs", "sweep.outputs", "trap_depth,enhancement,kappa,site_count,occupancy,lifetime");
  o.add(sweep, "--threshold-mk", "sites.threshold_mK", "Minimum site depth (mK)");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? ExitCode::ok : ExitCode::usage_error;
  }

  try {
    const RunConfig cfg = resolve(g, o);
    if (depth->parsed()) return cmd_depth(cfg, g, out);
    if (profile->parsed()) return cmd_profile(cfg, g, out);
    if (simulate->parsed()) return cmd_simulate(cfg, g, out);
    if (analyze->parsed()) return cmd_analyze(cfg, g, trace_path, keep_first_bin, out);
    if (fit_loading->parsed()) return cmd_fit_loading(cfg, g, points_path, out);
    if (sweep->parsed()) return cmd_sweep(cfg, g, out);
  } catch (const DataError& e) {
    err << "trapsim: data error: " << e.what() << '\n';
    return ExitCode::data_error;
  } catch (const IoError& e) {
    err << "trapsim: " << e.what() << '\n';
    return ExitCode::data_error;
  } catch (const NumericalError& e) {
    err << "trapsim: numerical failure: " << e.what() << '\n';
    return ExitCode::numerical_error;
  } catch (const std::invalid_argument& e) {
    err << "trapsim: " << e.what() << '\n';
    return ExitCode::usage_error;
  } catch (const nlohmann::json::exception& e) {
    err << "trapsim: configuration error: " << e.what() << '\n';
    return ExitCode::usage_error;
  } catch (const std::exception& e) {
    err << "trapsim: " << e.what() << '\n';
    return ExitCode::numerical_error;
  }
  err << app.help();
  return ExitCode::usage_error;
}

}  // namespace trapsim::cli
