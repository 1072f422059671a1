#include "trapsim/beam_optics.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace trapsim {

double BeamSpec::wavenumber_per_um() const { return 2.0 * std::numbers::pi / wavelength_um(); }

void BeamSpec::validate() const {
  if (!(power_mw >= 0.0)) throw std::invalid_argument("beam power must be >= 0");
  if (!(waist_um > 0.0)) throw std::invalid_argument("beam waist must be > 0");
  if (!(rayleigh_um > 0.0)) throw std::invalid_argument("Rayleigh length must be > 0");
  if (!(wavelength_nm > 0.0)) throw std::invalid_argument("wavelength must be > 0");
  if (!(zeta >= 0.0 && zeta <= 1.0)) throw std::invalid_argument("zeta must lie in [0, 1]");
  if (direction != 1 && direction != -1) throw std::invalid_argument("direction must be +1 or -1");
}

double beam_waist_at(const BeamSpec& beam, double z_um) {
  return beam.waist_um * std::hypot(1.0, z_um / beam.rayleigh_um);
}

std::complex<double> beam_field(const BeamSpec& beam, double r_um, double z_um) {
  const double w = beam_waist_at(beam, z_um);
  const double zr = beam.rayleigh_um;
  const double zs = beam.direction * z_um;
  const double r2 = r_um * r_um;
  // r^2 / (2R) with R = (z^2 + zR^2) / z
  const double curvature = r2 * zs / (2.0 * (zs * zs + zr * zr));
  const double phase = -beam.wavenumber_per_um() * (curvature + zs);
  return beam.amplitude * (beam.waist_um / w) * std::exp(-r2 / (w * w)) * std::polar(1.0, phase);
}

double intensity_density(const BeamSpec& beam, double r_um, double z_um) {
  const double w = beam_waist_at(beam, z_um);
  const double w2 = w * w;
  return 2.0 * beam.zeta * beam.power_mw / (std::numbers::pi * w2) * std::exp(-2.0 * r_um * r_um / w2);
}

}  // namespace trapsim
