#include "trapsim/trap_potential.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace trapsim {

namespace {

constexpr std::size_t kDepthGridPoints = 2001;
// Samples per standing-wave period when scanning for antinodes.
constexpr double kSamplesPerPeriod = 64.0;

BeamSpec effective_ancillary(const TrapConfig& cfg) {
  BeamSpec anc = cfg.ancillary;
  if (!cfg.zeta_applies_to_ancillary) anc.zeta = 1.0;
  return anc;
}

// d ln(rho)/dz of an on-axis envelope 1 / (1 + (z/zR)^2).
double log_slope(const BeamSpec& beam, double z) {
  const double zr = beam.rayleigh_um;
  return -2.0 * z / (zr * zr + z * z);
}

double standing_wave_k(const TrapConfig& cfg) { return cfg.primary.wavenumber_per_um(); }

// Vertex of the parabola through (x-h, fm), (x, f0), (x+h, fp).
double parabolic_vertex(double x, double h, double fm, double f0, double fp) {
  const double denom = fm - 2.0 * f0 + fp;
  if (denom >= 0.0) return x;
  const double shift = 0.5 * h * (fm - fp) / denom;
  return x + std::clamp(shift, -h, h);
}

}  // namespace

void TrapConfig::validate() const {
  primary.validate();
  ancillary.validate();
  if (!(kappa >= 0.0 && kappa <= 1.0)) throw std::invalid_argument("kappa must lie in [0, 1]");
  if (primary.wavelength_nm != ancillary.wavelength_nm)
    throw std::invalid_argument("primary and ancillary beams must share a wavelength");
  if (!std::isfinite(phase_rad)) throw std::invalid_argument("relative phase must be finite");
}

TrapConfig default_trap_config() {
  TrapConfig cfg;
  cfg.primary.waist_um = 1.3;
  cfg.primary.rayleigh_um = 11.7;
  cfg.primary.wavelength_nm = 852.0;
  cfg.primary.zeta = 0.33;
  cfg.primary.polarization = make_elliptical(1.0, kPrimaryLabHandedness);
  cfg.primary.direction = +1;

  cfg.ancillary.waist_um = 2.03;
  cfg.ancillary.wavelength_nm = 852.0;
  cfg.ancillary.rayleigh_um =
      std::numbers::pi * cfg.ancillary.waist_um * cfg.ancillary.waist_um / cfg.ancillary.wavelength_um();
  cfg.ancillary.zeta = 0.33;
  cfg.ancillary.direction = -1;
  return cfg;
}

double primary_axial_density(const TrapConfig& cfg, double z_um) {
  return intensity_density(cfg.primary, 0.0, z_um);
}

double ancillary_axial_density(const TrapConfig& cfg, double z_um) {
  return intensity_density(effective_ancillary(cfg), 0.0, z_um);
}

double axial_intensity(const TrapConfig& cfg, double z_um) {
  const double rp = primary_axial_density(cfg, z_um);
  const double ra = ancillary_axial_density(cfg, z_um);
  const double arg = 2.0 * standing_wave_k(cfg) * z_um + cfg.phase_rad;
  return rp + ra + 2.0 * cfg.kappa * std::sqrt(rp * ra) * std::cos(arg);
}

double trap_depth(const TrapConfig& cfg) {
  const double zr = cfg.primary.rayleigh_um;
  const double lo = -zr;
  const double span = 2.0 * zr;
  const auto n = kDepthGridPoints;
  const double h = span / static_cast<double>(n - 1);

  std::vector<double> rho(n);
  for (std::size_t i = 0; i < n; ++i)
    rho[i] = axial_intensity(cfg, lo + span * static_cast<double>(i) / static_cast<double>(n - 1));

  const auto best = static_cast<std::size_t>(std::max_element(rho.begin(), rho.end()) - rho.begin());
  double peak = rho[best];
  if (best > 0 && best + 1 < n) {
    const double zb = lo + span * static_cast<double>(best) / static_cast<double>(n - 1);
    const double zv = parabolic_vertex(zb, h, rho[best - 1], rho[best], rho[best + 1]);
    peak = std::max(peak, axial_intensity(cfg, zv));
  }
  return peak / kRho0;
}

double enhancement_ratio_exact(const TrapConfig& cfg) {
  const double rp = primary_axial_density(cfg, 0.0);
  if (!(cfg.primary.power_mw > 0.0) || !(rp > 0.0))
    throw std::invalid_argument("enhancement ratio needs a positive primary power");
  const double x = std::sqrt(ancillary_axial_density(cfg, 0.0) / rp);
  return (1.0 + x) * (1.0 + x) - 1.0;
}

double enhancement_ratio_approx(double p_primary_mw, double p_anc_mw, double w_primary_um,
                                double w_anc_um, double zeta, bool zeta_applies_to_ancillary) {
  if (!(p_primary_mw > 0.0)) throw std::invalid_argument("enhancement ratio needs a positive primary power");
  if (!(p_anc_mw >= 0.0) || !(w_primary_um > 0.0) || !(w_anc_um > 0.0))
    throw std::invalid_argument("invalid beam parameters");
  const double eff = zeta_applies_to_ancillary ? 1.0 : zeta;
  if (!(eff > 0.0 && eff <= 1.0)) throw std::invalid_argument("zeta must lie in (0, 1]");
  const double x = std::sqrt(p_anc_mw * w_primary_um * w_primary_um /
                             (eff * p_primary_mw * w_anc_um * w_anc_um));
  return 2.0 * x;
}

PotentialProfile potential_profile(const TrapConfig& cfg, double z_min_um, double z_max_um,
                                   std::size_t n_points) {
  if (!(z_min_um < z_max_um)) throw std::invalid_argument("profile range must satisfy z_min < z_max");
  if (n_points < 2) throw std::invalid_argument("profile needs at least two points");
  PotentialProfile out;
  out.z_um.resize(n_points);
  out.depth_mk.resize(n_points);
  const double span = z_max_um - z_min_um;
  for (std::size_t i = 0; i < n_points; ++i) {
    const double z = i + 1 == n_points
                         ? z_max_um
                         : z_min_um + span * static_cast<double>(i) / static_cast<double>(n_points - 1);
    out.z_um[i] = z;
    out.depth_mk[i] = axial_intensity(cfg, z) / kRho0;
  }
  return out;
}

double axial_force(const TrapConfig& cfg, double z_um) {
  const double rp = primary_axial_density(cfg, z_um);
  const double ra = ancillary_axial_density(cfg, z_um);
  const double gp = log_slope(cfg.primary, z_um);
  const double ga = log_slope(cfg.ancillary, z_um);
  const double k2 = 2.0 * standing_wave_k(cfg);
  const double arg = k2 * z_um + cfg.phase_rad;

  const double s = std::sqrt(rp * ra);
  const double ds = 0.5 * s * (gp + ga);
  const double d_rho = rp * gp + ra * ga + 2.0 * cfg.kappa * (ds * std::cos(arg) - k2 * s * std::sin(arg));
  return d_rho / kRho0;
}

std::vector<TrapSite> find_antinodes(const TrapConfig& cfg, double z_lo_um, double z_hi_um,
                                     double depth_threshold_mk) {
  if (!(depth_threshold_mk >= 0.0)) throw std::invalid_argument("depth threshold must be >= 0");
  if (!(z_lo_um < z_hi_um)) throw std::invalid_argument("antinode range must satisfy lo < hi");

  const double period = 0.5 * cfg.primary.wavelength_um();
  const double span = z_hi_um - z_lo_um;
  const auto n = std::max<std::size_t>(3, static_cast<std::size_t>(std::ceil(span / period * kSamplesPerPeriod)) + 1);
  const double h = span / static_cast<double>(n - 1);

  std::vector<double> depth(n);
  for (std::size_t i = 0; i < n; ++i)
    depth[i] = axial_intensity(cfg, z_lo_um + span * static_cast<double>(i) / static_cast<double>(n - 1)) / kRho0;

  std::vector<TrapSite> sites;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!(depth[i] > depth[i - 1] && depth[i] >= depth[i + 1])) continue;
    const double zi = z_lo_um + span * static_cast<double>(i) / static_cast<double>(n - 1);
    double zv = parabolic_vertex(zi, h, depth[i - 1], depth[i], depth[i + 1]);
    // The force changes sign across the maximum; bisect on it to pin the
    // stationary point well below the grid spacing.
    double a = zi - h, b = zi + h;
    if (axial_force(cfg, a) > 0.0 && axial_force(cfg, b) < 0.0) {
      for (int it = 0; it < 80 && b - a > 1e-15 * std::max(1.0, std::abs(zi)); ++it) {
        const double m = 0.5 * (a + b);
        (axial_force(cfg, m) > 0.0 ? a : b) = m;
      }
      zv = 0.5 * (a + b);
    }
    const double dv = axial_intensity(cfg, zv) / kRho0;
    TrapSite site = dv >= depth[i] ? TrapSite{zv, dv} : TrapSite{zi, depth[i]};
    if (site.local_depth_mk > 0.0 && site.local_depth_mk >= depth_threshold_mk) sites.push_back(site);
  }
  return sites;
}

double stark_shift(double depth_mk) {
  if (!(depth_mk >= 0.0)) throw std::invalid_argument("trap depth must be >= 0");
  return kStarkMHzPerMK * depth_mk;
}

ZetaCalibration zeta_from_stark(double shift_mhz, double p_primary_mw, double w_primary_um) {
  if (!(shift_mhz >= 0.0)) throw std::invalid_argument("Stark shift must be >= 0");
  if (!(p_primary_mw > 0.0)) throw std::invalid_argument("primary power must be > 0");
  if (!(w_primary_um > 0.0)) throw std::invalid_argument("primary waist must be > 0");
  const double density = shift_mhz / kStarkMHzPerMK * kRho0;
  const double raw = density * std::numbers::pi * w_primary_um * w_primary_um / (2.0 * p_primary_mw);
  return {std::min(raw, 1.0), raw > 1.0, raw};
}

}  // namespace trapsim
