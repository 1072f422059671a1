#include "trapsim/loading_model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <limits>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "trapsim/error.hpp"

namespace trapsim {

namespace {

constexpr double kAlphaGridMin = 1e-2;  // 1/mW
constexpr double kAlphaGridMax = 1e5;
constexpr int kAlphaPerDecade = 10;
constexpr int kMaxGaussNewtonIterations = 200;

struct WeightedData {
  std::vector<double> p;
  std::vector<double> y;
  std::vector<double> w;
};

double erf_step(double alpha, double p_half, double p) { return 0.5 * (std::erf(alpha * (p - p_half)) + 1.0); }

double weighted_sse(const WeightedData& d, double eta0, double alpha, double p_half) {
  double sse = 0.0;
  for (std::size_t j = 0; j < d.p.size(); ++j) {
    const double r = d.y[j] - eta0 * erf_step(alpha, p_half, d.p[j]);
    sse += d.w[j] * r * r;
  }
  return sse;
}

// Best eta0 for fixed (alpha, p_half), clamped to [0, 1].
double best_eta0(const WeightedData& d, double alpha, double p_half) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t j = 0; j < d.p.size(); ++j) {
    const double g = erf_step(alpha, p_half, d.p[j]);
    num += d.w[j] * d.y[j] * g;
    den += d.w[j] * g * g;
  }
  if (den <= 0.0) return 0.0;
  return std::clamp(num / den, 0.0, 1.0);
}

}  // namespace

void LoadingModelParams::validate() const {
  if (!(eta0 >= 0.0 && eta0 <= 1.0)) throw std::invalid_argument("eta0 must lie in [0, 1]");
  if (!(alpha_per_mw > 0.0)) throw std::invalid_argument("alpha must be > 0");
  if (!(p_half_mw > 0.0)) throw std::invalid_argument("p_half must be > 0");
}

double loading_probability(double power_mw, const LoadingModelParams& params) {
  return params.eta0 * erf_step(params.alpha_per_mw, params.p_half_mw, power_mw);
}

LoadingFit fit_loading_curve(const std::vector<LoadingCurvePoint>& points) {
  if (points.size() < 4) throw DataError("loading-curve fit needs at least 4 points");

  WeightedData d;
  for (const auto& pt : points) {
    if (!std::isfinite(pt.power_mw) || !(pt.probability >= 0.0 && pt.probability <= 1.0))
      throw DataError("loading-curve point out of range");
    double w = 1.0;
    if (pt.stderr_prob) {
      if (!(*pt.stderr_prob > 0.0)) throw DataError("standard errors must be > 0");
      w = 1.0 / (*pt.stderr_prob * *pt.stderr_prob);
    }
    d.p.push_back(pt.power_mw);
    d.y.push_back(pt.probability);
    d.w.push_back(w);
  }

  const auto [ymin, ymax] = std::minmax_element(d.y.begin(), d.y.end());
  if (*ymax - *ymin <= 1e-12) throw DataError("transition not identifiable: all probabilities are equal");

  std::vector<double> powers = d.p;
  std::sort(powers.begin(), powers.end());
  powers.erase(std::unique(powers.begin(), powers.end()), powers.end());
  if (powers.size() < 2) throw DataError("transition not identifiable: a single power value");

  // Coarse grid.
  LoadingModelParams best{0.0, 1.0, powers.front()};
  double best_sse = std::numeric_limits<double>::infinity();
  const int n_alpha = static_cast<int>(std::lround(std::log10(kAlphaGridMax / kAlphaGridMin) * kAlphaPerDecade)) + 1;
  for (std::size_t i = 0; i + 1 < powers.size(); ++i) {
    const double p_half = 0.5 * (powers[i] + powers[i + 1]);
    for (int a = 0; a < n_alpha; ++a) {
      const double alpha = kAlphaGridMin * std::pow(10.0, static_cast<double>(a) / kAlphaPerDecade);
      const double eta0 = best_eta0(d, alpha, p_half);
      const double sse = weighted_sse(d, eta0, alpha, p_half);
      if (sse < best_sse) {
        best_sse = sse;
        best = {eta0, alpha, p_half};
      }
    }
  }

  // Gauss-Newton on (eta0, ln alpha, p_half) with step halving.
  const auto m = d.p.size();
  Eigen::Vector3d theta(best.eta0, std::log(best.alpha_per_mw), best.p_half_mw);
  double sse = best_sse;
  int iterations = 0;
  const double inv_sqrt_pi = 1.0 / std::sqrt(std::numbers::pi);
  for (; iterations < kMaxGaussNewtonIterations; ++iterations) {
    Eigen::MatrixXd jac(m, 3);
    Eigen::VectorXd res(m);
    const double eta0 = theta[0];
    const double alpha = std::exp(theta[1]);
    const double p_half = theta[2];
    for (std::size_t j = 0; j < m; ++j) {
      const double x = alpha * (d.p[j] - p_half);
      const double g = 0.5 * (std::erf(x) + 1.0);
      const double bump = eta0 * inv_sqrt_pi * std::exp(-x * x);
      const double sw = std::sqrt(d.w[j]);
      const auto row = static_cast<Eigen::Index>(j);
      res[row] = sw * (d.y[j] - eta0 * g);
      jac(row, 0) = sw * g;
      jac(row, 1) = sw * bump * x;
      jac(row, 2) = -sw * bump * alpha;
    }
    Eigen::Matrix3d normal = jac.transpose() * jac;
    const Eigen::Vector3d rhs = jac.transpose() * res;
    // Saturated data can leave a direction unconstrained.
    normal.diagonal() += Eigen::Vector3d::Constant(1e-14 * std::max(1.0, normal.diagonal().maxCoeff()));
    const Eigen::Vector3d step = normal.ldlt().solve(rhs);
    if (!step.allFinite()) break;

    bool improved = false;
    double scale = 1.0;
    for (int h = 0; h < 40; ++h, scale *= 0.5) {
      Eigen::Vector3d trial = theta + scale * step;
      trial[0] = std::clamp(trial[0], 0.0, 1.0);
      const double trial_sse = weighted_sse(d, trial[0], std::exp(trial[1]), trial[2]);
      if (trial_sse < sse) {
        const double gain = sse - trial_sse;
        theta = trial;
        sse = trial_sse;
        improved = gain > 1e-15 * std::max(sse, 1e-300);
        break;
      }
    }
    if (!improved) break;
  }

  LoadingFit fit;
  fit.params = {theta[0], std::exp(theta[1]), theta[2]};
  fit.iterations = iterations;
  double ss = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double r = d.y[j] - loading_probability(d.p[j], fit.params);
    ss += r * r;
  }
  fit.rms_residual = std::sqrt(ss / static_cast<double>(m));
  fit.high_residual = fit.rms_residual > 0.1 * (*ymax - *ymin);
  return fit;
}

}  // namespace trapsim
