#pragma once

#include <span>
#include <vector>

#include "plume/geometry.hpp"
#include "plume/windfield.hpp"

namespace plume {

struct ReleaseSpec {
  double mass_kg = 0.0;
  Vec3 position;            // z = release height above ground, meters
  double start_time_s = 0.0;
  double initial_sigma_m = 1.0;

  void validate() const;
};

/// One Gaussian puff. The concentration field is a 3D Gaussian centered at
/// `centroid` with horizontal width sigma_h and vertical width sigma_z,
/// reflected perfectly at the ground (z = 0).
struct Puff {
  double mass_kg = 0.0;
  Vec3 centroid;
  double sigma_h_m = 1.0;
  double sigma_z_m = 1.0;
  double age_s = 0.0;
  bool off_domain = false;  // left the wind grid; contributes zero dose
};

/// Simplified Fickian growth: sigma^2 grows linearly in time with rate
/// coeff^2, sigma_z capped by a mixing-layer proxy.
struct DiffusionSpec {
  double horizontal_coeff = 1.5;  // m s^-1/2
  double vertical_coeff = 0.3;    // m s^-1/2
  double sigma_z_cap_m = 500.0;

  void validate() const;
};

Puff release(const ReleaseSpec& spec);

/// One transport step: centroid advected by the local wind over dt, sigmas
/// grown per the diffusion spec, age advanced. A puff whose centroid leaves
/// the grid bounds is flagged off-domain and stays flagged.
Puff advect_diffuse_step(const Puff& puff, const WindGrid& grid,
                         const DiffusionSpec& diffusion, double dt_s);

/// Concentration in kg/m^3 at a receptor, ground reflection included.
/// Off-domain puffs contribute zero.
double concentration_at(const Puff& puff, const Vec3& receptor);

/// Superposition over a puff list.
double concentration_at(std::span<const Puff> puffs, const Vec3& receptor);

/// Uniformly sampled concentration time series at one receptor, in ppt.
struct ConcentrationSeries {
  double t0_s = 0.0;
  double dt_s = 0.0;
  std::vector<double> ppt;

  double t_end() const { return t0_s + (ppt.empty() ? 0.0 : (ppt.size() - 1) * dt_s); }
};

/// Trapezoidal time-integral of the series over [start, end], in ppt-hr.
/// Window endpoints may fall between samples (linear interpolation); the
/// window must be inside the series coverage.
double accumulate_dose(const ConcentrationSeries& series, double start_s,
                       double end_s);

}  // namespace plume
