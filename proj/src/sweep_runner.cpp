#include "trapsim/sweep_runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "trapsim/io.hpp"
#include "trapsim/polarization.hpp"

namespace trapsim {

namespace {

const std::vector<std::string> kParameters = {"panc_mw", "pp_mw", "theta_deg", "kappa", "phase_rad"};

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void apply_parameter(const SweepSpec& spec, double value, TrapConfig& cfg) {
  const auto& p = spec.parameter;
  if (p == "panc_mw") {
    cfg.ancillary.power_mw = value;
  } else if (p == "pp_mw") {
    cfg.primary.power_mw = value;
  } else if (p == "theta_deg") {
    const JonesVector primary = make_elliptical(spec.primary_ellipticity, kPrimaryLabHandedness);
    cfg.primary.polarization = primary;
    cfg.kappa = ancillary_overlap_vs_angle(value, spec.waveplate_offset_deg, primary);
  } else if (p == "kappa") {
    cfg.kappa = value;
  } else if (p == "phase_rad") {
    cfg.phase_rad = value;
  } else {
    throw std::invalid_argument("unknown sweep parameter '" + p + "'");
  }
}

std::string join_error(const std::string& prev, const std::string& what, const std::string& msg) {
  return (prev.empty() ? "" : prev + "; ") + what + ": " + msg;
}

}  // namespace

SweepOutput sweep_output_from_string(const std::string& name) {
  if (name == "trap_depth") return SweepOutput::trap_depth;
  if (name == "enhancement") return SweepOutput::enhancement;
  if (name == "kappa") return SweepOutput::kappa;
  if (name == "site_count") return SweepOutput::site_count;
  if (name == "occupancy") return SweepOutput::occupancy;
  if (name == "lifetime") return SweepOutput::lifetime;
  throw std::invalid_argument("unknown sweep output '" + name + "'");
}

std::string to_string(SweepOutput out) {
  switch (out) {
    case SweepOutput::trap_depth: return "trap_depth";
    case SweepOutput::enhancement: return "enhancement";
    case SweepOutput::kappa: return "kappa";
    case SweepOutput::site_count: return "site_count";
    case SweepOutput::occupancy: return "occupancy";
    case SweepOutput::lifetime: return "lifetime";
  }
  return "trap_depth";
}

void SweepSpec::validate() const {
  if (std::find(kParameters.begin(), kParameters.end(), parameter) == kParameters.end())
    throw std::invalid_argument("unknown sweep parameter '" + parameter + "'");
  if (grid.empty()) throw std::invalid_argument("sweep grid is empty");
  const bool up = grid.size() < 2 || grid[1] > grid[0];
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (up ? !(grid[i] > grid[i - 1]) : !(grid[i] < grid[i - 1]))
      throw std::invalid_argument("sweep grid must be strictly monotone");
  }
  if (outputs.empty()) throw std::invalid_argument("sweep has no outputs");
  if (n_cycles < 1) throw std::invalid_argument("n_cycles must be >= 1");
  if (!(site_z_lo_um < site_z_hi_um)) throw std::invalid_argument("site range must satisfy lo < hi");
}

std::vector<std::string> sweep_columns(const std::vector<SweepOutput>& outputs) {
  std::vector<std::string> cols;
  for (auto out : outputs) {
    switch (out) {
      case SweepOutput::trap_depth: cols.push_back("depth_mK"); break;
      case SweepOutput::enhancement: cols.push_back("enhancement_exact"); break;
      case SweepOutput::kappa: cols.push_back("kappa"); break;
      case SweepOutput::site_count: cols.push_back("site_count"); break;
      case SweepOutput::occupancy:
        cols.insert(cols.end(), {"p0", "p1", "p2plus"});
        break;
      case SweepOutput::lifetime: cols.push_back("lifetime_ms"); break;
    }
  }
  return cols;
}

std::uint64_t sweep_point_seed(std::uint64_t master_seed, const std::string& parameter, std::size_t grid_index) {
  return derive_seed(derive_seed(master_seed, fnv1a(parameter)), grid_index);
}

SweepRow evaluate_sweep_point(const SweepSpec& spec, std::size_t grid_index, std::uint64_t master_seed) {
  SweepRow row;
  row.value = spec.grid.at(grid_index);
  for (auto out : spec.outputs) {
    row.cells.resize(row.cells.size() + (out == SweepOutput::occupancy ? 3 : 1));
  }

  TrapConfig cfg = spec.trap;
  try {
    apply_parameter(spec, row.value, cfg);
    cfg.validate();
  } catch (const std::exception& e) {
    row.error = join_error("", "config", e.what());
    return row;
  }

  std::optional<TraceReport> report;
  std::string report_error;
  auto stochastic = [&]() -> const TraceReport* {
    if (report || !report_error.empty()) return report ? &*report : nullptr;
    try {
      DynamicsParams dyn = spec.dynamics;
      if (spec.sites_from_trap) {
        const auto sites = find_antinodes(cfg, spec.site_z_lo_um, spec.site_z_hi_um, spec.site_threshold_mk);
        dyn.n_sites = std::max<int>(1, static_cast<int>(sites.size()));
      }
      const std::uint64_t seed = sweep_point_seed(master_seed, spec.parameter, grid_index);
      const TraceRecord trace = concatenate(simulate_cycles(dyn, spec.timing, spec.n_cycles, seed));
      report = analyze_trace(trace, spec.model, spec.n_components);
      return &*report;
    } catch (const std::exception& e) {
      report_error = e.what();
      return nullptr;
    }
  };

  std::size_t col = 0;
  for (auto out : spec.outputs) {
    const std::string name = to_string(out);
    try {
      switch (out) {
        case SweepOutput::trap_depth: row.cells[col++] = trap_depth(cfg); break;
        case SweepOutput::enhancement: row.cells[col++] = enhancement_ratio_exact(cfg); break;
        case SweepOutput::kappa: row.cells[col++] = cfg.kappa; break;
        case SweepOutput::site_count:
          row.cells[col++] = static_cast<double>(
              find_antinodes(cfg, spec.site_z_lo_um, spec.site_z_hi_um, spec.site_threshold_mk).size());
          break;
        case SweepOutput::occupancy: {
          const TraceReport* r = stochastic();
          if (r == nullptr) {
            col += 3;
            row.error = join_error(row.error, name, report_error);
            break;
          }
          double p2 = 0.0;
          for (const auto& [n, p] : r->occupancy)
            if (n >= 2) p2 += p;
          row.cells[col++] = r->occupancy.count(0) ? r->occupancy.at(0) : 0.0;
          row.cells[col++] = r->occupancy.count(1) ? r->occupancy.at(1) : 0.0;
          row.cells[col++] = p2;
          break;
        }
        case SweepOutput::lifetime: {
          const TraceReport* r = stochastic();
          if (r == nullptr) {
            ++col;
            row.error = join_error(row.error, name, report_error);
          } else if (!r->lifetime_ms) {
            ++col;
            row.error = join_error(row.error, name, "lifetime indeterminate");
          } else {
            row.cells[col++] = *r->lifetime_ms;
          }
          break;
        }
      }
    } catch (const std::exception& e) {
      col = std::min(row.cells.size(), col + 1);
      row.error = join_error(row.error, name, e.what());
    }
  }
  return row;
}

SweepResult run_sweep(const SweepSpec& spec, std::uint64_t seed, unsigned threads) {
  spec.validate();
  SweepResult result;
  result.parameter = spec.parameter;
  result.columns = sweep_columns(spec.outputs);
  result.seed = seed;
  result.rows.resize(spec.grid.size());

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(spec.grid.size()));

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < spec.grid.size(); i = next++) result.rows[i] = evaluate_sweep_point(spec, i, seed);
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return result;
}

void write_sweep_csv(const SweepResult& result, std::ostream& os) {
  os << result.parameter;
  for (const auto& c : result.columns) os << ',' << c;
  os << ",error\n";
  for (const auto& row : result.rows) {
    os << format_double(row.value);
    for (const auto& cell : row.cells) {
      os << ',';
      if (cell) os << format_double(*cell);
    }
    os << ',';
    if (!row.error.empty()) {
      std::string quoted = "\"";
      for (char c : row.error) {
        if (c == '"') quoted += '"';
        quoted += c == '\n' ? ' ' : c;
      }
      os << quoted << '"';
    }
    os << '\n';
  }
}

}  // namespace trapsim
