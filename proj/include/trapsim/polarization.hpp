/**
 * @file polarization.hpp
 * @brief Jones-vector polarization states, quarter-wave plates and the
 *        interference visibility between two beams.
 *
 * All vectors live in one fixed lab basis (x = horizontal). The mirror flip
 * that a counter-propagating beam picks up is not modeled explicitly; it is
 * absorbed into WavePlateSetting::offset_deg.
 */

#pragma once

#include <complex>

namespace trapsim {

using cdouble = std::complex<double>;

struct JonesVector {
  cdouble ex{1.0, 0.0};
  cdouble ey{0.0, 0.0};

  double norm() const;
  JonesVector normalized() const;

  static JonesVector horizontal() { return {1.0, 0.0}; }
  static JonesVector vertical() { return {0.0, 1.0}; }
};

// Fast axis angle measured from horizontal. Angles are taken modulo 180 deg.
struct WavePlateSetting {
  double theta_deg = 0.0;
  double offset_deg = 0.0;  // calibration offset theta0

  double effective_deg() const { return theta_deg - offset_deg; }
};

/// Normalized (1, i*handedness*ellipticity) / sqrt(1 + ellipticity^2).
/// Ellipticity 1 is circular, 0 is horizontal linear.
/// Throws std::invalid_argument when ellipticity is outside [0, 1] or
/// handedness is not +1/-1.
JonesVector make_elliptical(double ellipticity, int handedness);

/// Ideal quarter-wave retarder: Rot(t) * diag(1, i) * Rot(-t).
JonesVector qwp_transform(const JonesVector& input, const WavePlateSetting& setting);

/// |<a|b>|, the magnitude of the Hermitian inner product.
double overlap_factor(const JonesVector& a, const JonesVector& b);

/// Visibility between `primary` and a horizontally polarized ancillary beam
/// sent through a quarter-wave plate at `theta_deg`.
double ancillary_overlap_vs_angle(double theta_deg, double offset_deg,
                                  const JonesVector& primary);

// Handedness of the primary beam as seen in the shared lab basis. With this
// choice the visibility for a circular primary is |cos(theta - theta0 - 45)|.
inline constexpr int kPrimaryLabHandedness = -1;

// Offset that puts the visibility maximum at 53.0 deg.
inline constexpr double kDefaultWavePlateOffsetDeg = 8.0;

}  // namespace trapsim
