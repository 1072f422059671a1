#pragma once

#include <optional>
#include <vector>

namespace trapsim {

// eta(P) = eta0 (erf[alpha (P - p_half)] + 1) / 2
struct LoadingModelParams {
  double eta0 = 0.5;
  double alpha_per_mw = 1.0;
  double p_half_mw = 1.0;

  void validate() const;
};

struct LoadingCurvePoint {
  double power_mw = 0.0;
  double probability = 0.0;
  std::optional<double> stderr_prob;
};

struct LoadingFit {
  LoadingModelParams params;
  double rms_residual = 0.0;
  int iterations = 0;
  // Residual is large compared with the data spread; the data are probably
  // not a single monotone transition.
  bool high_residual = false;
};

double loading_probability(double power_mw, const LoadingModelParams& params);

/// Weighted least squares: coarse grid over (p_half, alpha) with eta0 solved
/// in closed form, then Gauss-Newton on (eta0, log alpha, p_half).
/// Throws DataError for fewer than 4 points or a flat curve.
LoadingFit fit_loading_curve(const std::vector<LoadingCurvePoint>& points);

}  // namespace trapsim
