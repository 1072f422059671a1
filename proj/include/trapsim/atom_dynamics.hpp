/**
 * @file atom_dynamics.hpp
 * @brief Exact event-driven simulation of trap occupancy and the photon
 *        counting traces it produces.
 */

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace trapsim {

struct DynamicsParams {
  double load_rate_probe = 0.0;     // 1/s, MOT off
  double load_rate_mot = 0.0;       // 1/s, MOT on
  double one_body_loss_rate = 0.0;  // 1/s, = 1/tau
  double pair_loss_rate = 0.0;      // 1/s per atom pair
  int n_sites = 1;
  int max_atoms_per_site = 1;
  double atom_count_rate = 0.0;        // counts/s per atom
  double background_count_rate = 0.0;  // counts/s

  void validate() const;
};

// Cycle structure: load with the MOT, probe (recorded), then empty the trap.
struct CycleTiming {
  double load_s = 3.0;
  double probe_s = 2.0;
  double off_s = 1.0;
  double bin_width_ms = 50.0;

  double cycle_s() const { return load_s + probe_s + off_s; }
  void validate() const;
};

enum class Phase { load, probe, off };

std::string_view to_string(Phase p);
/// Throws std::invalid_argument for unknown names.
Phase phase_from_string(std::string_view s);

// Piecewise-constant occupancy. occupancy[j] holds the per-site counts on
// [times[j], times[j+1]) (the last entry runs to end_time).
struct OccupancyPath {
  double start_time = 0.0;
  double end_time = 0.0;
  std::vector<double> times;
  std::vector<std::vector<int>> occupancy;

  int total_at(double t) const;
  /// Integral of total occupancy over [t0, t1], clipped to the path.
  double integrated_total(double t0, double t1) const;
  std::size_t event_count() const { return times.empty() ? 0 : times.size() - 1; }
};

struct TraceRecord {
  double bin_width_ms = 50.0;
  std::vector<std::int64_t> counts;
  std::vector<Phase> phases;
  // The first probe bin of every probe segment was forced to zero and is
  // not signal.
  bool forced_first_bin = false;

  double duration_ms() const { return bin_width_ms * static_cast<double>(counts.size()); }
};

/// Independent stream seed for sub-task `index` of a run seeded with `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// Simulate `duration_s` starting at `t0` from `initial` per-site occupancy
/// (empty when not given) with the given loading rate.
OccupancyPath simulate_occupancy(const DynamicsParams& params, double load_rate, double duration_s,
                                 std::uint64_t seed, std::vector<int> initial = {},
                                 double t0 = 0.0);

/// Probe-phase convenience overload.
OccupancyPath simulate_occupancy(const DynamicsParams& params, double duration_s,
                                 std::uint64_t seed);

/// Poisson counts per bin with mean bg*T + atom_rate * integral of n(t).
/// Bins start at path.start_time and cover the path; all bins are probe.
TraceRecord synthesize_trace(const OccupancyPath& path, const DynamicsParams& params,
                             double bin_width_ms, std::uint64_t seed);

struct CycleRun {
  TraceRecord trace;        // full cycle: load, probe and off bins
  OccupancyPath probe_path; // ground truth during the probe window
  int occupancy_at_probe_start = 0;
};

/// Full cycles. Load and off bins carry zero counts (nothing recorded);
/// probe bins carry photon counts with the first one forced to 0.
std::vector<CycleRun> simulate_cycles_detailed(const DynamicsParams& params,
                                               const CycleTiming& timing, int n_cycles,
                                               std::uint64_t seed);

std::vector<TraceRecord> simulate_cycles(const DynamicsParams& params, const CycleTiming& timing,
                                         int n_cycles, std::uint64_t seed);

/// Concatenate traces in order.
TraceRecord concatenate(const std::vector<TraceRecord>& traces);

/// Merge groups of `factor` consecutive bins by summing counts. The phase of
/// a merged bin is that of its first member. Throws when the length is not a
/// multiple of the factor.
TraceRecord rebin(const TraceRecord& trace, std::size_t factor);

}  // namespace trapsim
