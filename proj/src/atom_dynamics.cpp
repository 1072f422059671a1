#include "trapsim/atom_dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace trapsim {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Number of whole bins of `bin_ms` in `seconds`; throws when not whole.
std::size_t whole_bins(double seconds, double bin_ms) {
  const double n = seconds * 1000.0 / bin_ms;
  const double r = std::round(n);
  if (std::abs(n - r) > 1e-9 * std::max(1.0, n))
    throw std::invalid_argument("phase durations must be whole multiples of the bin width");
  return static_cast<std::size_t>(r);
}

}  // namespace

void DynamicsParams::validate() const {
  for (double r : {load_rate_probe, load_rate_mot, one_body_loss_rate, pair_loss_rate, atom_count_rate,
                   background_count_rate}) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw std::invalid_argument("dynamics rates must be finite and >= 0");
  }
  if (n_sites < 1) throw std::invalid_argument("n_sites must be >= 1");
  if (max_atoms_per_site < 1) throw std::invalid_argument("max_atoms_per_site must be >= 1");
}

void CycleTiming::validate() const {
  if (!(bin_width_ms > 0.0)) throw std::invalid_argument("bin width must be > 0");
  if (!(load_s >= 0.0) || !(probe_s > 0.0) || !(off_s >= 0.0))
    throw std::invalid_argument("cycle phase durations must be >= 0 (probe > 0)");
  whole_bins(load_s, bin_width_ms);
  whole_bins(probe_s, bin_width_ms);
  whole_bins(off_s, bin_width_ms);
}

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::load: return "load";
    case Phase::probe: return "probe";
    case Phase::off: return "off";
  }
  return "probe";
}

Phase phase_from_string(std::string_view s) {
  if (s == "load") return Phase::load;
  if (s == "probe") return Phase::probe;
  if (s == "off") return Phase::off;
  throw std::invalid_argument("unknown phase label '" + std::string(s) + "'");
}

int OccupancyPath::total_at(double t) const {
  if (times.empty() || t < times.front()) return 0;
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  const auto& occ = occupancy[static_cast<std::size_t>(it - times.begin()) - 1];
  return std::accumulate(occ.begin(), occ.end(), 0);
}

double OccupancyPath::integrated_total(double t0, double t1) const {
  double sum = 0.0;
  for (std::size_t j = 0; j < times.size(); ++j) {
    const double a = std::max(t0, times[j]);
    const double b = std::min(t1, j + 1 < times.size() ? times[j + 1] : end_time);
    if (b > a) sum += (b - a) * std::accumulate(occupancy[j].begin(), occupancy[j].end(), 0);
  }
  return sum;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

OccupancyPath simulate_occupancy(const DynamicsParams& params, double load_rate, double duration_s,
                                 std::uint64_t seed, std::vector<int> initial, double t0) {
  params.validate();
  if (!(duration_s > 0.0)) throw std::invalid_argument("simulation duration must be > 0");
  if (!(load_rate >= 0.0)) throw std::invalid_argument("load rate must be >= 0");

  const auto n_sites = static_cast<std::size_t>(params.n_sites);
  if (initial.empty()) initial.assign(n_sites, 0);
  if (initial.size() != n_sites) throw std::invalid_argument("initial occupancy must list every site");
  for (int n : initial)
    if (n < 0 || n > params.max_atoms_per_site) throw std::invalid_argument("initial occupancy out of range");

  OccupancyPath path;
  path.start_time = t0;
  path.end_time = t0 + duration_s;
  path.times.push_back(t0);
  path.occupancy.push_back(initial);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<int> occ = std::move(initial);
  std::vector<double> rates(3 * n_sites);
  double t = t0;

  for (;;) {
    double total = 0.0;
    for (std::size_t s = 0; s < n_sites; ++s) {
      const double n = occ[s];
      rates[3 * s + 0] = occ[s] < params.max_atoms_per_site ? load_rate : 0.0;
      rates[3 * s + 1] = n * params.one_body_loss_rate;
      rates[3 * s + 2] = params.pair_loss_rate * n * (n - 1.0) / 2.0;
      total += rates[3 * s] + rates[3 * s + 1] + rates[3 * s + 2];
    }
    if (total <= 0.0) break;

    t += std::exponential_distribution<double>(total)(rng);
    if (t >= path.end_time) break;

    double pick = uniform(rng) * total;
    std::size_t event = rates.size() - 1;
    for (std::size_t j = 0; j < rates.size(); ++j) {
      if (pick < rates[j]) {
        event = j;
        break;
      }
      pick -= rates[j];
    }
    // Guard against round-off landing on a zero-rate channel.
    while (rates[event] <= 0.0) --event;

    const std::size_t site = event / 3;
    switch (event % 3) {
      case 0: occ[site] += 1; break;
      case 1: occ[site] -= 1; break;
      default: occ[site] -= 2; break;
    }
    path.times.push_back(t);
    path.occupancy.push_back(occ);
  }
  return path;
}

OccupancyPath simulate_occupancy(const DynamicsParams& params, double duration_s, std::uint64_t seed) {
  return simulate_occupancy(params, params.load_rate_probe, duration_s, seed);
}

TraceRecord synthesize_trace(const OccupancyPath& path, const DynamicsParams& params, double bin_width_ms,
                             std::uint64_t seed) {
  if (!(bin_width_ms > 0.0)) throw std::invalid_argument("bin width must be > 0");
  params.validate();

  const double bin_s = bin_width_ms * 1e-3;
  const auto n_bins =
      static_cast<std::size_t>(std::floor((path.end_time - path.start_time) / bin_s + 1e-9));

  TraceRecord trace;
  trace.bin_width_ms = bin_width_ms;
  trace.counts.resize(n_bins);
  trace.phases.assign(n_bins, Phase::probe);

  std::mt19937_64 rng(seed);
  std::size_t seg = 0;
  for (std::size_t b = 0; b < n_bins; ++b) {
    const double a = path.start_time + static_cast<double>(b) * bin_s;
    const double e = a + bin_s;
    // Segments are visited in order; only the overlap with [a, e) counts.
    double atom_time = 0.0;
    while (seg < path.times.size()) {
      const double s0 = std::max(a, path.times[seg]);
      const double s1 = std::min(e, seg + 1 < path.times.size() ? path.times[seg + 1] : path.end_time);
      if (s1 > s0)
        atom_time += (s1 - s0) * std::accumulate(path.occupancy[seg].begin(), path.occupancy[seg].end(), 0);
      const double seg_end = seg + 1 < path.times.size() ? path.times[seg + 1] : path.end_time;
      if (seg_end > e) break;
      ++seg;
    }
    const double mean = params.background_count_rate * bin_s + params.atom_count_rate * atom_time;
    trace.counts[b] = mean > 0.0 ? std::poisson_distribution<std::int64_t>(mean)(rng) : 0;
  }
  return trace;
}

std::vector<CycleRun> simulate_cycles_detailed(const DynamicsParams& params, const CycleTiming& timing,
                                               int n_cycles, std::uint64_t seed) {
  params.validate();
  timing.validate();
  if (n_cycles < 1) throw std::invalid_argument("n_cycles must be >= 1");

  const std::size_t n_load = whole_bins(timing.load_s, timing.bin_width_ms);
  const std::size_t n_off = whole_bins(timing.off_s, timing.bin_width_ms);

  std::vector<CycleRun> runs;
  runs.reserve(static_cast<std::size_t>(n_cycles));
  for (int c = 0; c < n_cycles; ++c) {
    const std::uint64_t cycle_seed = derive_seed(seed, static_cast<std::uint64_t>(c));

    std::vector<int> start(static_cast<std::size_t>(params.n_sites), 0);
    if (timing.load_s > 0.0) {
      const OccupancyPath load =
          simulate_occupancy(params, params.load_rate_mot, timing.load_s, derive_seed(cycle_seed, 0));
      start = load.occupancy.back();
    }

    CycleRun run;
    run.occupancy_at_probe_start = std::accumulate(start.begin(), start.end(), 0);
    run.probe_path = simulate_occupancy(params, params.load_rate_probe, timing.probe_s,
                                        derive_seed(cycle_seed, 1), start, timing.load_s);
    const TraceRecord probe =
        synthesize_trace(run.probe_path, params, timing.bin_width_ms, derive_seed(cycle_seed, 2));

    TraceRecord& trace = run.trace;
    trace.bin_width_ms = timing.bin_width_ms;
    trace.forced_first_bin = true;
    trace.counts.assign(n_load, 0);
    trace.phases.assign(n_load, Phase::load);
    trace.counts.insert(trace.counts.end(), probe.counts.begin(), probe.counts.end());
    trace.phases.insert(trace.phases.end(), probe.counts.size(), Phase::probe);
    trace.counts[n_load] = 0;  // first recorded point of each cycle is defined as 0
    trace.counts.insert(trace.counts.end(), n_off, 0);
    trace.phases.insert(trace.phases.end(), n_off, Phase::off);

    runs.push_back(std::move(run));
  }
  return runs;
}

std::vector<TraceRecord> simulate_cycles(const DynamicsParams& params, const CycleTiming& timing, int n_cycles,
                                         std::uint64_t seed) {
  std::vector<TraceRecord> traces;
  for (auto& run : simulate_cycles_detailed(params, timing, n_cycles, seed)) traces.push_back(std::move(run.trace));
  return traces;
}

TraceRecord concatenate(const std::vector<TraceRecord>& traces) {
  TraceRecord out;
  if (traces.empty()) return out;
  out.bin_width_ms = traces.front().bin_width_ms;
  out.forced_first_bin = traces.front().forced_first_bin;
  for (const auto& t : traces) {
    if (t.bin_width_ms != out.bin_width_ms) throw std::invalid_argument("cannot concatenate traces with different bin widths");
    if (t.forced_first_bin != out.forced_first_bin)
      throw std::invalid_argument("cannot concatenate traces with different first-bin conventions");
    out.counts.insert(out.counts.end(), t.counts.begin(), t.counts.end());
    out.phases.insert(out.phases.end(), t.phases.begin(), t.phases.end());
  }
  return out;
}

TraceRecord rebin(const TraceRecord& trace, std::size_t factor) {
  if (factor == 0) throw std::invalid_argument("rebin factor must be >= 1");
  if (trace.counts.size() % factor != 0) throw std::invalid_argument("trace length is not a multiple of the rebin factor");
  TraceRecord out;
  out.bin_width_ms = trace.bin_width_ms * static_cast<double>(factor);
  out.forced_first_bin = trace.forced_first_bin;
  for (std::size_t i = 0; i < trace.counts.size(); i += factor) {
    std::int64_t sum = 0;
    for (std::size_t j = 0; j < factor; ++j) sum += trace.counts[i + j];
    out.counts.push_back(sum);
    out.phases.push_back(trace.phases.empty() ? Phase::probe : trace.phases[i]);
  }
  return out;
}

}  // namespace trapsim
