#pragma once

#include <complex>

#include "trapsim/polarization.hpp"

namespace trapsim {

// One focused Gaussian dipole beam. Units: mW, um, nm.
//
// waist_um and rayleigh_um are independent: a metalens focus is not a
// textbook Gaussian, so z_R is not tied to pi*w0^2/lambda.
struct BeamSpec {
  double power_mw = 0.0;
  double waist_um = 1.3;
  double rayleigh_um = 11.7;
  double wavelength_nm = 852.0;
  double zeta = 1.0;       // effective power fraction in the trapping region
  double amplitude = 1.0;  // field scale a
  JonesVector polarization{};
  int direction = +1;  // +1 or -1 along z

  double wavelength_um() const { return wavelength_nm * 1e-3; }
  double wavenumber_per_um() const;

  /// Throws std::invalid_argument when any invariant is violated.
  void validate() const;
};

/// w(z) = w0 sqrt(1 + (z/zR)^2)
double beam_waist_at(const BeamSpec& beam, double z_um);

/// Scalar field a w0/w(z) exp[-r^2/w^2 - i k (r^2/(2R) + z)]. The curvature
/// term is evaluated as r^2 z / (2 (z^2 + zR^2)), which is finite at z = 0.
/// The propagation sign flips the phase for direction = -1.
std::complex<double> beam_field(const BeamSpec& beam, double r_um, double z_um);

/// 2 zeta P / (pi w(z)^2) * exp(-2 r^2 / w(z)^2), in mW/um^2.
double intensity_density(const BeamSpec& beam, double r_um, double z_um);

}  // namespace trapsim
