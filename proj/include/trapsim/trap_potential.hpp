/**
 * @file trap_potential.hpp
 * @brief Axial potential of a tweezer dressed by a weak counter-propagating
 *        ancillary beam.
 *
 * On axis the two beams superpose as
 *
 *   rho(z) = rho_p(z) + rho_a(z) + 2 kappa sqrt(rho_p rho_a) cos(2 k z + phi)
 *
 * where rho_x(z) are the envelope densities of the individual beams and kappa
 * is the polarization visibility. Depth in mK is rho / kRho0. Gouy and
 * curvature phases are dropped; phi = 0 puts an antinode at the focus.
 */

#pragma once

#include <cstddef>
#include <vector>

#include "trapsim/beam_optics.hpp"

namespace trapsim {

// Density giving 1 mK of trap depth, mW/um^2.
inline constexpr double kRho0 = 2.17;
// k_B / h expressed in MHz per mK.
inline constexpr double kStarkMHzPerMK = 20.84;

struct TrapConfig {
  BeamSpec primary;
  BeamSpec ancillary;
  double kappa = 1.0;
  double phase_rad = 0.0;
  // false: zeta only scales the primary beam.
  // true: ancillary density is also scaled by ancillary.zeta.
  bool zeta_applies_to_ancillary = false;

  void validate() const;
};

struct PotentialProfile {
  std::vector<double> z_um;
  std::vector<double> depth_mk;
};

struct TrapSite {
  double z_center_um = 0.0;
  double local_depth_mk = 0.0;
};

/// The configuration used throughout: 852 nm, primary w0 = 1.3 um,
/// zR = 11.7 um, zeta = 0.33, ancillary w0 = 2.03 um with its Gaussian
/// Rayleigh length. Powers are zero.
TrapConfig default_trap_config();

/// Peak on-axis densities of each beam at z (mW/um^2), with the zeta
/// convention applied.
double primary_axial_density(const TrapConfig& cfg, double z_um);
double ancillary_axial_density(const TrapConfig& cfg, double z_um);

double axial_intensity(const TrapConfig& cfg, double z_um);

/// Maximum depth over [-zR, zR] of the primary beam: 2001-point grid plus
/// parabolic refinement around the best sample.
double trap_depth(const TrapConfig& cfg);

/// (1 + x)^2 - 1 with x = sqrt(rho_anc / rho_p) at the focus.
/// Throws std::invalid_argument when the primary power is zero.
double enhancement_ratio_exact(const TrapConfig& cfg);

/// Small-ancillary approximation 2x.
double enhancement_ratio_approx(double p_primary_mw, double p_anc_mw, double w_primary_um,
                                double w_anc_um, double zeta, bool zeta_applies_to_ancillary);

PotentialProfile potential_profile(const TrapConfig& cfg, double z_min_um, double z_max_um,
                                   std::size_t n_points);

/// d(depth)/dz in mK/um. Positive values push the atom towards +z, so the
/// force always points up the intensity gradient.
double axial_force(const TrapConfig& cfg, double z_um);

/// Local maxima of the depth over [z_lo, z_hi] with depth >= threshold,
/// sorted by z. The sample spacing resolves the lattice period.
std::vector<TrapSite> find_antinodes(const TrapConfig& cfg, double z_lo_um, double z_hi_um,
                                     double depth_threshold_mk);

double stark_shift(double depth_mk);

struct ZetaCalibration {
  double zeta = 0.0;
  bool clamped = false;  // raw estimate exceeded 1 and was clamped
  double raw = 0.0;
};

/// Inverts stark_shift(rho_p / kRho0) for zeta.
ZetaCalibration zeta_from_stark(double shift_mhz, double p_primary_mw, double w_primary_um);

}  // namespace trapsim
