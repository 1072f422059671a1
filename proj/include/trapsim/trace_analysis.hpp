/**
 * @file trace_analysis.hpp
 * @brief From telegraph traces back to occupancy: count histograms, Poisson
 *        and Gaussian mixture fits by EM, step labeling, dwell times and the
 *        single-atom lifetime.
 */

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "trapsim/atom_dynamics.hpp"

namespace trapsim {

// frequency[k] = number of bins with k counts.
struct CountHistogram {
  std::vector<std::uint64_t> frequency;

  std::uint64_t total() const;
  std::size_t size() const { return frequency.size(); }
  std::uint64_t at(std::size_t k) const { return k < frequency.size() ? frequency[k] : 0; }
  CountHistogram& operator+=(const CountHistogram& other);
};

enum class MixtureKind { poisson, gaussian };

struct MixtureFitResult {
  MixtureKind kind = MixtureKind::poisson;
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> variances;  // gaussian only
  double log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
  bool degenerate = false;          // all counts identical
  bool variance_floor_active = false;
  double bic = 0.0;
  std::vector<double> log_likelihood_history;  // one entry per EM iteration

  std::size_t n_components() const { return means.size(); }
};

struct DwellRecord {
  int state = 0;
  double duration_ms = 0.0;
  bool left_censored = false;
  bool right_censored = false;
};

class LifetimeIndeterminate : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Components 0 means "choose by BIC over 1..5".
inline constexpr int kAutoComponents = 0;
inline constexpr double kGaussianVarianceFloor = 0.25;
inline constexpr int kMaxEmIterations = 500;
inline constexpr double kEmTolerance = 1e-8;

/// True for the bins that carry signal: probe bins, minus the forced first
/// bin of each probe segment when the trace says it was forced.
std::vector<bool> analysis_mask(const TraceRecord& trace);

/// Throws DataError on an empty trace or one without analysis bins.
CountHistogram build_histogram(const TraceRecord& trace);

/// EM fit. Throws DataError when total < 10 * n_components.
MixtureFitResult fit_poisson_mixture(const CountHistogram& hist, int n_components);
MixtureFitResult fit_gaussian_mixture(const CountHistogram& hist, int n_components);

/// Log-likelihood of the histogram under a fitted mixture.
double mixture_log_likelihood(const MixtureFitResult& fit, const CountHistogram& hist);

/// Per-bin state indices (maximum responsibility, then a 3-bin median filter
/// within each contiguous run of analysis bins). Bins outside the analysis
/// mask are labeled kUnobserved.
inline constexpr int kUnobserved = -1;
std::vector<int> label_occupancy(const TraceRecord& trace, const MixtureFitResult& fit);

/// Maximal runs of constant state. kUnobserved entries split segments; the
/// first and last run of every segment are flagged censored.
std::vector<DwellRecord> extract_dwells(const std::vector<int>& states, double bin_width_ms);

/// Censored exponential MLE: total exposure over completed dwells.
/// Throws LifetimeIndeterminate when no dwell in `state` ends inside the
/// record.
double estimate_lifetime(const std::vector<DwellRecord>& dwells, int state);

/// Lifetime from dwells measured in whole bins after the 3-bin median
/// filter. Interior runs shorter than two bins are never observed, so run
/// lengths beyond the shortest observable run are geometric with ratio
/// exp(-bin / tau); this returns the MLE of tau for that model. Runs touching
/// a segment start can be one bin long. Throws LifetimeIndeterminate like
/// estimate_lifetime.
double estimate_lifetime_binned(const std::vector<DwellRecord>& dwells, int state, double bin_width_ms);

/// Shortest interval (ms) that survives labeling as an interior run, on
/// average over bin phase. An interval is labeled in a bin once it covers
/// more than `coverage_threshold` of that bin; the 3-bin filter then needs
/// two such bins.
double labeling_resolution_ms(double coverage_threshold, double bin_width_ms);

/// Fraction of a bin an atom must occupy before the fit labels the bin as
/// state 1 rather than state 0 (from the component 0/1 decision boundary).
double occupancy_label_threshold(const MixtureFitResult& fit);

/// Missed-interval correction: every gap shorter than the resolution hides
/// one loss, so apparent dwells are exp(resolution / gap_lifetime) true
/// dwells long on average.
double correct_missed_gaps(double apparent_lifetime_ms, double gap_lifetime_ms, double resolution_ms);

/// Mean counts per state over plateau bins: observed bins whose label
/// matches both neighbours. Transition bins carry partial occupancy and are
/// left out. Entries are empty for states without plateau bins.
std::vector<std::optional<double>> plateau_means(const TraceRecord& trace, const std::vector<int>& states,
                                                 std::size_t n_states);

std::map<int, double> occupancy_probabilities(const MixtureFitResult& fit);

// Whole pipeline: histogram, mixture fit, labeling, dwells, lifetime.
struct TraceReport {
  MixtureFitResult fit;
  std::vector<int> states;
  std::vector<DwellRecord> dwells;
  std::map<int, double> occupancy;
  std::optional<double> lifetime_ms;           // state 1, binned MLE with missed-gap correction
  std::optional<double> lifetime_binned_ms;    // state 1, binned MLE only
  std::optional<double> lifetime_raw_ms;       // state 1, continuous censored MLE
  std::optional<double> gap_lifetime_ms;       // state 0, corrected like lifetime_ms
  std::vector<std::optional<double>> plateau_means;
  std::optional<double> step_counts;  // plateau mean of state 1 minus state 0
};

TraceReport analyze_trace(const TraceRecord& trace, MixtureKind kind, int n_components);

}  // namespace trapsim
