#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "trapsim/atom_dynamics.hpp"

using trapsim::DynamicsParams;
using trapsim::OccupancyPath;
using trapsim::Phase;

namespace {

DynamicsParams single_atom(double load, double tau_s) {
  DynamicsParams p;
  p.load_rate_probe = load;
  p.load_rate_mot = load;
  p.one_body_loss_rate = 1.0 / tau_s;
  return p;
}

int site_at(const OccupancyPath& path, double t, std::size_t site) {
  auto it = std::upper_bound(path.times.begin(), path.times.end(), t);
  const auto j = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, it - path.times.begin() - 1));
  return path.occupancy[j][site];
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double stddev(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// Upper 0.1% point of chi-square (Wilson-Hilferty).
double chi2_critical_999(int df) {
  const double a = 2.0 / (9.0 * df);
  return df * std::pow(1.0 - a + 3.0902 * std::sqrt(a), 3);
}

}  // namespace

TEST_CASE("no loading leaves the trap empty") {
  DynamicsParams p;
  p.one_body_loss_rate = 2.0;
  const auto path = trapsim::simulate_occupancy(p, 100.0, 5);
  CHECK(path.event_count() == 0);
  CHECK(path.total_at(0.0) == 0);
  CHECK(path.total_at(99.9) == 0);
  CHECK(path.integrated_total(0.0, 100.0) == 0.0);
}

TEST_CASE("single atom dwell times are exponential with the loss lifetime") {
  const auto p = single_atom(10.0, 0.3);
  const auto path = trapsim::simulate_occupancy(p, 4500.0, 17);
  std::vector<double> dwells;
  for (std::size_t j = 1; j + 1 < path.times.size(); ++j) {
    if (path.occupancy[j][0] == 1) dwells.push_back(path.times[j + 1] - path.times[j]);
  }
  REQUIRE(dwells.size() >= 10000);
  const double se = stddev(dwells) / std::sqrt(static_cast<double>(dwells.size()));
  CHECK(std::abs(mean(dwells) - 0.300) < 3.0 * se);
}

TEST_CASE("fast pair loss keeps double occupancy rare") {
  DynamicsParams p = single_atom(5.0, 0.3);
  p.pair_loss_rate = 1000.0;
  p.max_atoms_per_site = 2;
  const auto path = trapsim::simulate_occupancy(p, 2000.0, 23);
  double doubled = 0.0;
  for (std::size_t j = 0; j < path.times.size(); ++j) {
    const double t1 = j + 1 < path.times.size() ? path.times[j + 1] : path.end_time;
    if (path.occupancy[j][0] >= 2) doubled += t1 - path.times[j];
  }
  CHECK(doubled / 2000.0 < 1e-2);
  CHECK(doubled > 0.0);
}

TEST_CASE("occupancy changes by one atom or a pair and stays within bounds") {
  DynamicsParams p = single_atom(20.0, 0.5);
  p.pair_loss_rate = 3.0;
  p.max_atoms_per_site = 3;
  p.n_sites = 4;
  const auto path = trapsim::simulate_occupancy(p, 200.0, 99);
  REQUIRE(path.event_count() > 1000);
  for (std::size_t j = 0; j < path.times.size(); ++j) {
    int total = 0;
    for (int n : path.occupancy[j]) {
      CHECK(n >= 0);
      CHECK(n <= 3);
      total += n;
    }
    CHECK(total <= 12);
    if (j == 0) continue;
    CHECK(path.times[j] >= path.times[j - 1]);
    int changed = 0;
    for (std::size_t s = 0; s < 4; ++s) {
      const int d = path.occupancy[j][s] - path.occupancy[j - 1][s];
      if (d != 0) {
        ++changed;
        CHECK((d == 1 || d == -1 || d == -2));
      }
    }
    CHECK(changed == 1);
  }
}

TEST_CASE("load events into an unblocked lossless site are Poisson") {
  DynamicsParams p;
  p.load_rate_probe = 2.5;
  p.max_atoms_per_site = 1000;
  const double duration = 2.0;  // mean 5
  std::vector<int> hist(40, 0);
  const int runs = 10000;
  for (int i = 0; i < runs; ++i) {
    const auto path = trapsim::simulate_occupancy(p, duration, trapsim::derive_seed(1234, i));
    ++hist[std::min<std::size_t>(path.event_count(), hist.size() - 1)];
  }
  const double mu = p.load_rate_probe * duration;
  double chi2 = 0.0, obs_acc = 0.0, exp_acc = 0.0, pk = std::exp(-mu), cdf = 0.0;
  int df = -1;
  for (std::size_t k = 0; k < hist.size(); ++k) {
    obs_acc += hist[k];
    exp_acc += runs * pk;
    cdf += pk;
    const bool last = runs * (1.0 - cdf) < 5.0;
    if (exp_acc >= 5.0 || last) {
      if (last) {
        // Fold the whole remaining tail into this cell.
        exp_acc += runs * (1.0 - cdf);
        for (std::size_t r = k + 1; r < hist.size(); ++r) obs_acc += hist[r];
      }
      chi2 += (obs_acc - exp_acc) * (obs_acc - exp_acc) / exp_acc;
      ++df;
      obs_acc = exp_acc = 0.0;
      if (last) break;
    }
    pk *= mu / static_cast<double>(k + 1);
  }
  REQUIRE(df >= 5);
  CHECK(chi2 < chi2_critical_999(df));
}

TEST_CASE("sites evolve independently") {
  DynamicsParams p = single_atom(3.0, 0.3);
  p.n_sites = 2;
  const auto path = trapsim::simulate_occupancy(p, 10000.0, 7);
  std::vector<double> a, b;
  for (int i = 0; i < 10000; ++i) {
    a.push_back(site_at(path, i + 0.5, 0));
    b.push_back(site_at(path, i + 0.5, 1));
  }
  const double ma = mean(a), mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  CHECK(std::abs(sab / std::sqrt(saa * sbb)) < 0.05);
  CHECK(ma == doctest::Approx(3.0 / (3.0 + 1.0 / 0.3)).epsilon(0.1));
}

TEST_CASE("simulation is reproducible from its seed") {
  const auto p = single_atom(2.0, 0.3);
  const auto a = trapsim::simulate_occupancy(p, 50.0, 77);
  const auto b = trapsim::simulate_occupancy(p, 50.0, 77);
  const auto c = trapsim::simulate_occupancy(p, 50.0, 78);
  CHECK(a.times == b.times);
  CHECK(a.occupancy == b.occupancy);
  CHECK(a.times != c.times);
}

TEST_CASE("seed derivation") {
  CHECK(trapsim::derive_seed(1, 0) == trapsim::derive_seed(1, 0));
  CHECK(trapsim::derive_seed(1, 0) != trapsim::derive_seed(1, 1));
  CHECK(trapsim::derive_seed(1, 0) != trapsim::derive_seed(2, 0));
}

TEST_CASE("background only counts") {
  DynamicsParams p;
  p.background_count_rate = 100.0;
  p.atom_count_rate = 1000.0;
  const auto path = trapsim::simulate_occupancy(p, 500.0, 1);  // 10^4 bins of 50 ms
  const auto trace = trapsim::synthesize_trace(path, p, 50.0, 2);
  REQUIRE(trace.counts.size() == 10000);
  std::vector<double> x(trace.counts.begin(), trace.counts.end());
  const double se = stddev(x) / std::sqrt(static_cast<double>(x.size()));
  CHECK(std::abs(mean(x) - 5.0) < 3.0 * se);
  for (auto ph : trace.phases) CHECK(ph == Phase::probe);
}

TEST_CASE("constant single atom counts") {
  DynamicsParams p;
  p.background_count_rate = 100.0;
  p.atom_count_rate = 1000.0;
  // One atom loaded up front, nothing else happens.
  const auto path = trapsim::simulate_occupancy(p, 0.0, 500.0, 3, {1});
  CHECK(path.event_count() == 0);
  CHECK(path.integrated_total(0.0, 0.05) == doctest::Approx(0.05));
  const auto trace = trapsim::synthesize_trace(path, p, 50.0, 4);
  std::vector<double> x(trace.counts.begin(), trace.counts.end());
  const double se = stddev(x) / std::sqrt(static_cast<double>(x.size()));
  CHECK(std::abs(mean(x) - 55.0) < 3.0 * se);

  const auto again = trapsim::synthesize_trace(path, p, 50.0, 4);
  CHECK(again.counts == trace.counts);
  CHECK_THROWS_AS(trapsim::synthesize_trace(path, p, 0.0, 4), std::invalid_argument);
}

TEST_CASE("cycle structure") {
  DynamicsParams p = single_atom(1.0, 0.3);
  p.atom_count_rate = 1000.0;
  p.background_count_rate = 100.0;
  const trapsim::CycleTiming timing;
  const auto traces = trapsim::simulate_cycles(p, timing, 20, 5);
  REQUIRE(traces.size() == 20);
  for (const auto& t : traces) {
    REQUIRE(t.counts.size() == 120);
    CHECK(t.duration_ms() == doctest::Approx(6000.0));
    CHECK(t.forced_first_bin);
    CHECK(t.counts.front() == 0);
    CHECK(t.phases[59] == Phase::load);
    CHECK(t.phases[60] == Phase::probe);
    CHECK(t.counts[60] == 0);
    CHECK(t.phases[99] == Phase::probe);
    CHECK(t.phases[100] == Phase::off);
    for (std::size_t i = 0; i < 60; ++i) CHECK(t.counts[i] == 0);
    for (std::size_t i = 100; i < 120; ++i) CHECK(t.counts[i] == 0);
  }
  const auto again = trapsim::simulate_cycles(p, timing, 20, 5);
  for (std::size_t c = 0; c < 20; ++c) CHECK(again[c].counts == traces[c].counts);
}

TEST_CASE("cycles without loading record background only") {
  DynamicsParams p;
  p.one_body_loss_rate = 3.0;
  p.atom_count_rate = 1000.0;
  p.background_count_rate = 100.0;
  const auto runs = trapsim::simulate_cycles_detailed(p, {}, 50, 8);
  std::int64_t sum = 0;
  std::size_t bins = 0;
  for (const auto& r : runs) {
    CHECK(r.occupancy_at_probe_start == 0);
    CHECK(r.probe_path.event_count() == 0);
    for (std::size_t i = 61; i < 100; ++i) sum += r.trace.counts[i], ++bins;
  }
  CHECK(static_cast<double>(sum) / static_cast<double>(bins) == doctest::Approx(5.0).epsilon(0.05));
}

TEST_CASE("occupancy at probe start matches the two-state stationary value") {
  const double R = 1.0, gamma = 1.0 / 0.3;
  const auto runs = trapsim::simulate_cycles_detailed(single_atom(R, 0.3), {}, 500, 2024);
  double loaded = 0.0;
  for (const auto& r : runs) loaded += r.occupancy_at_probe_start;
  CHECK(std::abs(loaded / 500.0 - R / (R + gamma)) < 0.04);
}

TEST_CASE("rebinning conserves counts") {
  DynamicsParams p = single_atom(1.0, 0.3);
  p.atom_count_rate = 1000.0;
  p.background_count_rate = 100.0;
  trapsim::CycleTiming fine;
  fine.bin_width_ms = 25.0;
  const auto t25 = trapsim::concatenate(trapsim::simulate_cycles(p, fine, 5, 6));
  const auto t50 = trapsim::rebin(t25, 2);
  CHECK(t50.bin_width_ms == 50.0);
  CHECK(t50.counts.size() * 2 == t25.counts.size());
  CHECK(std::accumulate(t50.counts.begin(), t50.counts.end(), std::int64_t{0}) ==
        std::accumulate(t25.counts.begin(), t25.counts.end(), std::int64_t{0}));
  const auto t100 = trapsim::rebin(t50, 2);
  CHECK(std::accumulate(t100.counts.begin(), t100.counts.end(), std::int64_t{0}) ==
        std::accumulate(t25.counts.begin(), t25.counts.end(), std::int64_t{0}));
  CHECK_THROWS_AS(trapsim::rebin(t25, 7), std::invalid_argument);
}

TEST_CASE("phase names") {
  for (Phase ph : {Phase::load, Phase::probe, Phase::off}) {
    CHECK(trapsim::phase_from_string(trapsim::to_string(ph)) == ph);
  }
  CHECK_THROWS_AS(trapsim::phase_from_string("idle"), std::invalid_argument);
}

TEST_CASE("parameter validation") {
  DynamicsParams p;
  CHECK_NOTHROW(p.validate());
  p.one_body_loss_rate = -1.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = {};
  p.n_sites = 0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = {};
  p.max_atoms_per_site = 0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);

  trapsim::CycleTiming t;
  CHECK_NOTHROW(t.validate());
  t.bin_width_ms = 33.0;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
  t = {};
  t.probe_s = 0.0;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
  CHECK_THROWS_AS(trapsim::simulate_cycles({}, {}, 0, 1), std::invalid_argument);
}
