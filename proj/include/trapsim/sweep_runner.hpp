/**
 * @file sweep_runner.hpp
 * @brief Batch evaluation of trap and loading quantities over a 1-D grid.
 *
 * Each grid point is an independent task with its own seed derived from
 * (master seed, parameter name, grid index), so a sweep split into pieces
 * reproduces the rows of the full sweep.
 */

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "trapsim/atom_dynamics.hpp"
#include "trapsim/trace_analysis.hpp"
#include "trapsim/trap_potential.hpp"

namespace trapsim {

enum class SweepOutput { trap_depth, enhancement, kappa, site_count, occupancy, lifetime };

/// Names: trap_depth, enhancement, kappa, site_count, occupancy, lifetime.
SweepOutput sweep_output_from_string(const std::string& name);
std::string to_string(SweepOutput out);

struct SweepSpec {
  TrapConfig trap = default_trap_config();
  DynamicsParams dynamics;
  CycleTiming timing;

  // One of: panc_mw, pp_mw, theta_deg, kappa, phase_rad.
  std::string parameter = "panc_mw";
  std::vector<double> grid;
  std::vector<SweepOutput> outputs{SweepOutput::trap_depth};

  // theta sweeps derive kappa from the wave plate and this primary state.
  double primary_ellipticity = 1.0;
  double waveplate_offset_deg = kDefaultWavePlateOffsetDeg;

  double site_threshold_mk = 0.0;
  double site_z_lo_um = -2.0;
  double site_z_hi_um = 2.0;
  bool sites_from_trap = false;  // n_sites for the simulation from find_antinodes

  int n_cycles = 100;
  MixtureKind model = MixtureKind::poisson;
  int n_components = kAutoComponents;

  /// Throws std::invalid_argument for an empty or non-monotone grid, an
  /// unknown parameter or no outputs.
  void validate() const;
};

struct SweepRow {
  double value = 0.0;
  std::vector<std::optional<double>> cells;  // aligned with SweepResult::columns
  std::string error;                         // empty when the point succeeded
};

struct SweepResult {
  std::string parameter;
  std::vector<std::string> columns;
  std::vector<SweepRow> rows;
  std::uint64_t seed = 0;
};

/// Column names produced for a list of outputs.
std::vector<std::string> sweep_columns(const std::vector<SweepOutput>& outputs);

std::uint64_t sweep_point_seed(std::uint64_t master_seed, const std::string& parameter,
                               std::size_t grid_index);

/// Evaluate one grid point. Never throws for per-point failures; they are
/// recorded in SweepRow::error.
SweepRow evaluate_sweep_point(const SweepSpec& spec, std::size_t grid_index,
                              std::uint64_t master_seed);

/// `threads` = 0 uses the hardware concurrency. Row order follows the grid.
SweepResult run_sweep(const SweepSpec& spec, std::uint64_t seed, unsigned threads = 0);

void write_sweep_csv(const SweepResult& result, std::ostream& os);

}  // namespace trapsim
