#include "trapsim/trace_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "trapsim/error.hpp"

namespace trapsim {

namespace {

constexpr int kMaxAutoComponents = 5;
constexpr double kMinPoissonMean = 1e-10;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_component(MixtureKind kind, double mean, double variance, double k) {
  if (kind == MixtureKind::poisson) {
    return k * std::log(mean) - mean - std::lgamma(k + 1.0);
  }
  const double d = k - mean;
  return -0.5 * std::log(2.0 * std::numbers::pi * variance) - d * d / (2.0 * variance);
}

double log_sum_exp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// Distinct support points and their frequencies.
struct Support {
  std::vector<double> k;
  std::vector<double> f;
  double total = 0.0;
};

Support support_of(const CountHistogram& hist) {
  Support s;
  for (std::size_t k = 0; k < hist.frequency.size(); ++k) {
    if (hist.frequency[k] == 0) continue;
    s.k.push_back(static_cast<double>(k));
    s.f.push_back(static_cast<double>(hist.frequency[k]));
    s.total += static_cast<double>(hist.frequency[k]);
  }
  return s;
}

// Log weights plus component log densities at one support point.
void component_terms(const MixtureFitResult& fit, double k, std::vector<double>& out) {
  const auto n = fit.means.size();
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double lw = fit.weights[i] > 0.0 ? std::log(fit.weights[i]) : kNegInf;
    const double var = fit.kind == MixtureKind::gaussian ? fit.variances[i] : 0.0;
    out[i] = lw == kNegInf ? kNegInf : lw + log_component(fit.kind, fit.means[i], var, k);
  }
}

double support_log_likelihood(const MixtureFitResult& fit, const Support& s) {
  std::vector<double> terms;
  double ll = 0.0;
  for (std::size_t j = 0; j < s.k.size(); ++j) {
    component_terms(fit, s.k[j], terms);
    ll += s.f[j] * log_sum_exp(terms);
  }
  return ll;
}

// Smallest support value whose cumulative frequency reaches q * total.
double quantile(const Support& s, double q) {
  double cum = 0.0;
  for (std::size_t j = 0; j < s.k.size(); ++j) {
    cum += s.f[j];
    if (cum >= q * s.total) return s.k[j];
  }
  return s.k.back();
}

void sort_and_merge(MixtureFitResult& fit) {
  const auto n = fit.means.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return fit.means[a] < fit.means[b]; });

  MixtureFitResult out = fit;
  out.weights.clear();
  out.means.clear();
  out.variances.clear();
  const bool gaussian = fit.kind == MixtureKind::gaussian;
  for (auto i : order) {
    if (!(fit.weights[i] > 1e-12)) continue;
    const bool duplicate = !out.means.empty() &&
                           fit.means[i] - out.means.back() <= 1e-9 * std::max(1.0, std::abs(fit.means[i]));
    if (duplicate) {
      const double w = out.weights.back() + fit.weights[i];
      const double m = (out.weights.back() * out.means.back() + fit.weights[i] * fit.means[i]) / w;
      if (gaussian) {
        out.variances.back() = std::max(out.variances.back(), fit.variances[i]);
      }
      out.weights.back() = w;
      out.means.back() = m;
      continue;
    }
    out.weights.push_back(fit.weights[i]);
    out.means.push_back(fit.means[i]);
    if (gaussian) out.variances.push_back(fit.variances[i]);
  }
  const double wsum = std::accumulate(out.weights.begin(), out.weights.end(), 0.0);
  for (auto& w : out.weights) w /= wsum;
  fit = std::move(out);
}

MixtureFitResult degenerate_fit(MixtureKind kind, const Support& s) {
  MixtureFitResult fit;
  fit.kind = kind;
  fit.weights = {1.0};
  fit.means = {std::max(s.k.front(), kind == MixtureKind::poisson ? kMinPoissonMean : s.k.front())};
  if (kind == MixtureKind::gaussian) {
    fit.variances = {kGaussianVarianceFloor};
    fit.variance_floor_active = true;
  }
  fit.degenerate = true;
  fit.converged = true;
  fit.log_likelihood = support_log_likelihood(fit, s);
  fit.log_likelihood_history = {fit.log_likelihood};
  return fit;
}

enum class Start { quantiles, spread };

MixtureFitResult run_em(MixtureKind kind, const Support& s, int n, Start start) {
  const bool gaussian = kind == MixtureKind::gaussian;

  double mean_all = 0.0;
  for (std::size_t j = 0; j < s.k.size(); ++j) mean_all += s.f[j] * s.k[j];
  mean_all /= s.total;
  double var_all = 0.0;
  for (std::size_t j = 0; j < s.k.size(); ++j) var_all += s.f[j] * (s.k[j] - mean_all) * (s.k[j] - mean_all);
  var_all /= s.total;

  MixtureFitResult fit;
  fit.kind = kind;
  fit.weights.assign(static_cast<std::size_t>(n), 1.0 / n);
  const double nudge = std::max(0.5, std::sqrt(var_all) / n);
  const double lo = s.k.front(), hi = s.k.back();
  for (int i = 1; i <= n; ++i) {
    double m = start == Start::quantiles ? quantile(s, static_cast<double>(i) / (n + 1))
                                         : lo + (hi - lo) * (i - 0.5) / n;
    if (!fit.means.empty() && m <= fit.means.back()) m = fit.means.back() + nudge;
    fit.means.push_back(gaussian ? m : std::max(m, 1e-3));
  }
  if (gaussian) fit.variances.assign(static_cast<std::size_t>(n), std::max(var_all / (n * n), kGaussianVarianceFloor));

  const auto nc = static_cast<std::size_t>(n);
  const auto ns = s.k.size();
  std::vector<double> resp(ns * nc);
  std::vector<double> terms;

  double ll_prev = kNegInf;
  for (int it = 1; it <= kMaxEmIterations; ++it) {
    // E-step
    double ll = 0.0;
    for (std::size_t j = 0; j < ns; ++j) {
      component_terms(fit, s.k[j], terms);
      const double lse = log_sum_exp(terms);
      ll += s.f[j] * lse;
      for (std::size_t i = 0; i < nc; ++i) resp[j * nc + i] = std::exp(terms[i] - lse);
    }
    fit.log_likelihood_history.push_back(ll);
    fit.iterations = it;
    if (it > 1 && ll - ll_prev < kEmTolerance) {
      fit.converged = true;
      break;
    }
    ll_prev = ll;

    // M-step
    fit.variance_floor_active = false;
    for (std::size_t i = 0; i < nc; ++i) {
      double w = 0.0;
      double wk = 0.0;
      for (std::size_t j = 0; j < ns; ++j) {
        const double r = s.f[j] * resp[j * nc + i];
        w += r;
        wk += r * s.k[j];
      }
      fit.weights[i] = w / s.total;
      if (w <= 0.0) continue;  // empty component keeps its parameters
      const double m = wk / w;
      fit.means[i] = gaussian ? m : std::max(m, kMinPoissonMean);
      if (gaussian) {
        double v = 0.0;
        for (std::size_t j = 0; j < ns; ++j) {
          const double d = s.k[j] - m;
          v += s.f[j] * resp[j * nc + i] * d * d;
        }
        v /= w;
        if (v < kGaussianVarianceFloor) {
          v = kGaussianVarianceFloor;
          fit.variance_floor_active = true;
        }
        fit.variances[i] = v;
      }
    }
  }
  if (!fit.converged) fit.log_likelihood_history.push_back(support_log_likelihood(fit, s));

  sort_and_merge(fit);
  fit.log_likelihood = support_log_likelihood(fit, s);
  const double params = gaussian ? 3.0 * fit.n_components() - 1.0 : 2.0 * fit.n_components() - 1.0;
  fit.bic = -2.0 * fit.log_likelihood + params * std::log(s.total);
  return fit;
}

// Quantile starts put several means inside one heavy component when the
// weights are uneven; a second start spread over the range catches the
// sparse high-count components. The better likelihood wins.
MixtureFitResult best_start(MixtureKind kind, const Support& s, int n) {
  MixtureFitResult a = run_em(kind, s, n, Start::quantiles);
  if (n == 1) return a;
  MixtureFitResult b = run_em(kind, s, n, Start::spread);
  return b.log_likelihood > a.log_likelihood + 1e-9 * std::abs(a.log_likelihood) ? b : a;
}

MixtureFitResult fit_mixture(MixtureKind kind, const CountHistogram& hist, int n_components) {
  if (n_components < 0) throw std::invalid_argument("component count must be >= 1 (or auto)");
  const Support s = support_of(hist);
  if (s.total == 0.0) throw DataError("histogram is empty");
  const int needed = n_components == kAutoComponents ? 1 : n_components;
  if (s.total < 10.0 * needed)
    throw DataError("insufficient data: " + std::to_string(static_cast<long long>(s.total)) +
                    " bins for " + std::to_string(needed) + " components");
  if (s.k.size() == 1) return degenerate_fit(kind, s);

  if (n_components != kAutoComponents) return best_start(kind, s, n_components);

  MixtureFitResult best;
  bool have = false;
  for (int n = 1; n <= kMaxAutoComponents && s.total >= 10.0 * n; ++n) {
    MixtureFitResult fit = best_start(kind, s, n);
    if (!have || fit.bic < best.bic) {
      best = std::move(fit);
      have = true;
    }
  }
  return best;
}

}  // namespace

std::uint64_t CountHistogram::total() const {
  return std::accumulate(frequency.begin(), frequency.end(), std::uint64_t{0});
}

CountHistogram& CountHistogram::operator+=(const CountHistogram& other) {
  if (other.frequency.size() > frequency.size()) frequency.resize(other.frequency.size(), 0);
  for (std::size_t k = 0; k < other.frequency.size(); ++k) frequency[k] += other.frequency[k];
  return *this;
}

std::vector<bool> analysis_mask(const TraceRecord& trace) {
  const auto n = trace.counts.size();
  std::vector<bool> mask(n, true);
  const bool labeled = trace.phases.size() == n;
  for (std::size_t i = 0; i < n; ++i) {
    const bool probe = !labeled || trace.phases[i] == Phase::probe;
    const bool segment_start = i == 0 || (labeled && trace.phases[i - 1] != Phase::probe);
    mask[i] = probe && !(trace.forced_first_bin && segment_start);
  }
  return mask;
}

CountHistogram build_histogram(const TraceRecord& trace) {
  if (trace.counts.empty()) throw DataError("trace is empty");
  const auto mask = analysis_mask(trace);
  CountHistogram hist;
  std::uint64_t used = 0;
  for (std::size_t i = 0; i < trace.counts.size(); ++i) {
    if (!mask[i]) continue;
    const auto c = trace.counts[i];
    if (c < 0) throw DataError("negative count in bin " + std::to_string(i));
    const auto k = static_cast<std::size_t>(c);
    if (k >= hist.frequency.size()) hist.frequency.resize(k + 1, 0);
    ++hist.frequency[k];
    ++used;
  }
  if (used == 0) throw DataError("trace has no probe bins");
  return hist;
}

MixtureFitResult fit_poisson_mixture(const CountHistogram& hist, int n_components) {
  return fit_mixture(MixtureKind::poisson, hist, n_components);
}

MixtureFitResult fit_gaussian_mixture(const CountHistogram& hist, int n_components) {
  return fit_mixture(MixtureKind::gaussian, hist, n_components);
}

double mixture_log_likelihood(const MixtureFitResult& fit, const CountHistogram& hist) {
  return support_log_likelihood(fit, support_of(hist));
}

std::vector<int> label_occupancy(const TraceRecord& trace, const MixtureFitResult& fit) {
  if (fit.means.empty()) throw std::invalid_argument("fit has no components");
  const auto mask = analysis_mask(trace);
  const auto n = trace.counts.size();

  std::vector<int> raw(n, kUnobserved);
  std::vector<double> terms;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    component_terms(fit, static_cast<double>(trace.counts[i]), terms);
    raw[i] = static_cast<int>(std::max_element(terms.begin(), terms.end()) - terms.begin());
  }

  // 3-bin median filter inside each observed run; run ends are kept.
  std::vector<int> out = raw;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (raw[i] == kUnobserved || raw[i - 1] == kUnobserved || raw[i + 1] == kUnobserved) continue;
    int w[3] = {raw[i - 1], raw[i], raw[i + 1]};
    std::sort(std::begin(w), std::end(w));
    out[i] = w[1];
  }
  return out;
}

std::vector<DwellRecord> extract_dwells(const std::vector<int>& states, double bin_width_ms) {
  if (!(bin_width_ms > 0.0)) throw std::invalid_argument("bin width must be > 0");
  std::vector<DwellRecord> dwells;
  const auto n = states.size();
  std::size_t i = 0;
  while (i < n) {
    if (states[i] < 0) {
      ++i;
      continue;
    }
    const std::size_t seg_start = dwells.size();
    // One observed segment.
    while (i < n && states[i] >= 0) {
      std::size_t j = i;
      while (j < n && states[j] == states[i]) ++j;
      dwells.push_back({states[i], bin_width_ms * static_cast<double>(j - i), false, false});
      i = j;
    }
    dwells[seg_start].left_censored = true;
    dwells.back().right_censored = true;
  }
  return dwells;
}

double estimate_lifetime(const std::vector<DwellRecord>& dwells, int state) {
  double exposure = 0.0;
  std::size_t events = 0;
  for (const auto& d : dwells) {
    if (d.state != state) continue;
    exposure += d.duration_ms;
    // A left-censored dwell still ends with an observed loss; by
    // memorylessness its observed part is a complete exponential sample.
    if (!d.right_censored) ++events;
  }
  if (events == 0)
    throw LifetimeIndeterminate("lifetime indeterminate: no completed dwell in state " + std::to_string(state));
  return exposure / static_cast<double>(events);
}

double estimate_lifetime_binned(const std::vector<DwellRecord>& dwells, int state, double bin_width_ms) {
  if (!(bin_width_ms > 0.0)) throw std::invalid_argument("bin width must be > 0");
  double extra_bins = 0.0;
  std::size_t events = 0;
  for (const auto& d : dwells) {
    if (d.state != state) continue;
    const double bins = std::round(d.duration_ms / bin_width_ms);
    const double shortest = d.left_censored ? 1.0 : 2.0;
    extra_bins += std::max(0.0, bins - shortest);
    if (!d.right_censored) ++events;
  }
  if (events == 0)
    throw LifetimeIndeterminate("lifetime indeterminate: no completed dwell in state " + std::to_string(state));
  if (extra_bins == 0.0) return 0.0;
  return bin_width_ms / std::log1p(static_cast<double>(events) / extra_bins);
}

double labeling_resolution_ms(double coverage_threshold, double bin_width_ms) {
  const double h = std::clamp(coverage_threshold, 0.0, 1.0);
  // Start phase a uniform in (0, 1]: the run needs G > a + h when the first
  // bin is labeled (a > h) and G > a + 1 + h otherwise.
  return (0.5 + 2.0 * h) * bin_width_ms;
}

double occupancy_label_threshold(const MixtureFitResult& fit) {
  if (fit.n_components() < 2) throw std::invalid_argument("threshold needs two components");
  const double lo = fit.means[0];
  const double hi = fit.means[1];
  MixtureFitResult pair = fit;
  pair.weights = {fit.weights[0], fit.weights[1]};
  pair.means = {lo, hi};
  if (fit.kind == MixtureKind::gaussian) pair.variances = {fit.variances[0], fit.variances[1]};

  // Bisection on the continuous count axis for equal posterior terms.
  std::vector<double> terms;
  auto prefers_upper = [&](double k) {
    component_terms(pair, k, terms);
    return terms[1] >= terms[0];
  };
  double a = lo;
  double b = hi;
  if (prefers_upper(a)) return 0.0;
  if (!prefers_upper(b)) return 1.0;
  for (int i = 0; i < 100; ++i) {
    const double m = 0.5 * (a + b);
    (prefers_upper(m) ? b : a) = m;
  }
  return std::clamp((0.5 * (a + b) - lo) / (hi - lo), 0.0, 1.0);
}

double correct_missed_gaps(double apparent_lifetime_ms, double gap_lifetime_ms, double resolution_ms) {
  if (!(gap_lifetime_ms > 0.0)) return apparent_lifetime_ms;
  return apparent_lifetime_ms * std::exp(-resolution_ms / gap_lifetime_ms);
}

std::vector<std::optional<double>> plateau_means(const TraceRecord& trace, const std::vector<int>& states,
                                                 std::size_t n_states) {
  if (states.size() != trace.counts.size()) throw std::invalid_argument("labels do not match the trace");
  std::vector<double> sum(n_states, 0.0);
  std::vector<std::size_t> n(n_states, 0);
  for (std::size_t i = 1; i + 1 < states.size(); ++i) {
    const int s = states[i];
    if (s < 0 || static_cast<std::size_t>(s) >= n_states || states[i - 1] != s || states[i + 1] != s) continue;
    sum[static_cast<std::size_t>(s)] += static_cast<double>(trace.counts[i]);
    ++n[static_cast<std::size_t>(s)];
  }
  std::vector<std::optional<double>> out(n_states);
  for (std::size_t s = 0; s < n_states; ++s)
    if (n[s] > 0) out[s] = sum[s] / static_cast<double>(n[s]);
  return out;
}

std::map<int, double> occupancy_probabilities(const MixtureFitResult& fit) {
  std::map<int, double> out;
  for (std::size_t i = 0; i < fit.weights.size(); ++i) out[static_cast<int>(i)] = fit.weights[i];
  return out;
}

TraceReport analyze_trace(const TraceRecord& trace, MixtureKind kind, int n_components) {
  TraceReport report;
  const CountHistogram hist = build_histogram(trace);
  report.fit = kind == MixtureKind::poisson ? fit_poisson_mixture(hist, n_components)
                                            : fit_gaussian_mixture(hist, n_components);
  report.states = label_occupancy(trace, report.fit);
  report.dwells = extract_dwells(report.states, trace.bin_width_ms);
  report.occupancy = occupancy_probabilities(report.fit);
  try {
    report.lifetime_binned_ms = estimate_lifetime_binned(report.dwells, 1, trace.bin_width_ms);
    report.lifetime_raw_ms = estimate_lifetime(report.dwells, 1);
    report.lifetime_ms = report.lifetime_binned_ms;
  } catch (const LifetimeIndeterminate&) {
  }
  try {
    report.gap_lifetime_ms = estimate_lifetime_binned(report.dwells, 0, trace.bin_width_ms);
  } catch (const LifetimeIndeterminate&) {
  }
  if (report.lifetime_ms && report.gap_lifetime_ms && report.fit.n_components() >= 2) {
    // A dwell is labeled once the atom covers more than f of a bin, a gap
    // once it is absent for more than 1 - f. Each apparent interval hides
    // the short intervals of the other kind, so correct both together.
    const double f = occupancy_label_threshold(report.fit);
    const double dwell_res = labeling_resolution_ms(f, trace.bin_width_ms);
    const double gap_res = labeling_resolution_ms(1.0 - f, trace.bin_width_ms);
    double dwell = *report.lifetime_binned_ms;
    double gap = *report.gap_lifetime_ms;
    for (int it = 0; it < 50; ++it) {
      const double next_dwell = correct_missed_gaps(*report.lifetime_binned_ms, gap, gap_res);
      const double next_gap = correct_missed_gaps(*report.gap_lifetime_ms, next_dwell, dwell_res);
      const bool done = std::abs(next_dwell - dwell) <= 1e-12 * dwell && std::abs(next_gap - gap) <= 1e-12 * gap;
      dwell = next_dwell;
      gap = next_gap;
      if (done) break;
    }
    report.lifetime_ms = dwell;
    report.gap_lifetime_ms = gap;
  }
  report.plateau_means = plateau_means(trace, report.states, report.fit.n_components());
  if (report.plateau_means.size() >= 2 && report.plateau_means[0] && report.plateau_means[1])
    report.step_counts = *report.plateau_means[1] - *report.plateau_means[0];
  return report;
}

}  // namespace trapsim
