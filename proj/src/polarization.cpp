#include "trapsim/polarization.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace trapsim {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

}  // namespace

double JonesVector::norm() const { return std::sqrt(std::norm(ex) + std::norm(ey)); }

JonesVector JonesVector::normalized() const {
  const double n = norm();
  if (n == 0.0) throw std::invalid_argument("cannot normalize a zero Jones vector");
  return {ex / n, ey / n};
}

JonesVector make_elliptical(double ellipticity, int handedness) {
  if (!(ellipticity >= 0.0 && ellipticity <= 1.0))
    throw std::invalid_argument("ellipticity must lie in [0, 1]");
  if (handedness != 1 && handedness != -1)
    throw std::invalid_argument("handedness must be +1 or -1");
  const double scale = 1.0 / std::sqrt(1.0 + ellipticity * ellipticity);
  return {cdouble{scale, 0.0}, cdouble{0.0, handedness * ellipticity * scale}};
}

JonesVector qwp_transform(const JonesVector& input, const WavePlateSetting& setting) {
  const double t = setting.effective_deg() * kDegToRad;
  const double c = std::cos(t);
  const double s = std::sin(t);
  const cdouble i{0.0, 1.0};

  // Rot(-t) into the plate frame, retard the slow axis, rotate back.
  const cdouble fast = c * input.ex + s * input.ey;
  const cdouble slow = i * (-s * input.ex + c * input.ey);
  return {c * fast - s * slow, s * fast + c * slow};
}

double overlap_factor(const JonesVector& a, const JonesVector& b) {
  return std::abs(std::conj(a.ex) * b.ex + std::conj(a.ey) * b.ey);
}

double ancillary_overlap_vs_angle(double theta_deg, double offset_deg, const JonesVector& primary) {
  const JonesVector anc = qwp_transform(JonesVector::horizontal(), {theta_deg, offset_deg});
  return overlap_factor(primary, anc);
}

}  // namespace trapsim
