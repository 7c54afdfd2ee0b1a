#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "plume/geometry.hpp"
#include "plume/rng.hpp"

namespace plume {

/// One station's timestamped surface wind reading. Direction uses the
/// meteorological convention: degrees the wind blows FROM, in [0, 360).
struct WindObservation {
  std::string station_id;
  Vec3 position;       // meters
  double time_s = 0.0;
  double speed_ms = 0.0;
  double dir_deg = 0.0;
};

/// Standard deviations of the wind data error model.
struct WindPerturbationSpec {
  double speed_sigma_ms = 0.5;
  double direction_sigma_deg = 5.0;

  bool is_zero() const { return speed_sigma_ms == 0.0 && direction_sigma_deg == 0.0; }
  void validate() const;
};

/// Cell-centered grid geometry. Cell (i, j) has its center at
/// (x0 + (i + 0.5) * cell_m, y0 + (j + 0.5) * cell_m).
struct GridSpec {
  double x0 = 0.0;
  double y0 = 0.0;
  double cell_m = 500.0;
  int nx = 2;
  int ny = 2;

  double x_max() const { return x0 + nx * cell_m; }
  double y_max() const { return y0 + ny * cell_m; }
  Vec2 cell_center(int i, int j) const {
    return {x0 + (i + 0.5) * cell_m, y0 + (j + 0.5) * cell_m};
  }
  bool contains(const Vec2& p) const {
    return p.x >= x0 && p.x <= x_max() && p.y >= y0 && p.y <= y_max();
  }
  void validate() const;
};

/// Gridded 2D horizontal wind field at one observation epoch.
struct WindGrid {
  GridSpec spec;
  double valid_time_s = 0.0;
  std::vector<double> u;  // m/s, nx * ny, index i + nx * j
  std::vector<double> v;

  double& at_u(int i, int j) { return u[static_cast<std::size_t>(i + spec.nx * j)]; }
  double& at_v(int i, int j) { return v[static_cast<std::size_t>(i + spec.nx * j)]; }
  double at_u(int i, int j) const { return u[static_cast<std::size_t>(i + spec.nx * j)]; }
  double at_v(int i, int j) const { return v[static_cast<std::size_t>(i + spec.nx * j)]; }
};

struct WindSample {
  double u = 0.0;
  double v = 0.0;
  bool clamped = false;  // query fell outside the grid bounds
};

struct AdjustDiagnostics {
  double divergence_before = 0.0;
  double divergence_after = 0.0;
  double l2_change = 0.0;  // L2 distance between adjusted and initial field
};

/// Normalizes an angle in degrees to [0, 360).
double normalize_direction_deg(double deg);

/// Meteorological (speed, direction-from) to (u, v) components.
/// u = -speed * sin(dir), v = -speed * cos(dir): a wind FROM the north
/// (0 deg) blows toward -y.
Vec2 wind_components(double speed_ms, double dir_deg);

/// Inverse of wind_components; direction is normalized to [0, 360).
/// Calm air (u = v = 0) reports direction 0.
void speed_direction(double u, double v, double& speed_ms, double& dir_deg);

/// Draws one independently perturbed copy of each observation:
/// speed' = max(0, speed + N(0, speed_sigma^2)),
/// dir' = (dir + N(0, direction_sigma^2)) mod 360.
std::vector<WindObservation> perturb_observations(
    const std::vector<WindObservation>& obs, const WindPerturbationSpec& spec,
    RngStream& rng);

/// Inverse-distance-squared interpolation of station (u, v) onto the grid.
/// A cell whose center lies within half a cell of a station takes that
/// station's value exactly. Throws ConfigError on an empty observation list.
WindGrid interpolate_field(const std::vector<WindObservation>& obs,
                           const GridSpec& spec);

/// L2 norm of the centered-difference divergence over interior cells.
double divergence_norm(const WindGrid& grid);

/// Iterative local relaxation toward a mass-consistent (divergence-free)
/// field. Each iteration applies a gradient-projection correction scaled so
/// the interior divergence norm can never increase; relaxation in (0, 2]
/// controls the step size (1.0 default). 0 iterations returns the input.
WindGrid adjust_mass_consistency(const WindGrid& grid, int iterations,
                                 double relaxation,
                                 AdjustDiagnostics* diag = nullptr);

/// Bilinear interpolation of cell-center values; exact at cell centers.
/// Queries outside the grid bounds are clamped to the nearest boundary cell
/// and flagged.
WindSample sample_wind_at(const WindGrid& grid, const Vec2& position);

/// Loads `station_id,x_m,y_m,z_m,time_s,speed_ms,dir_deg` rows. Directions
/// are normalized to [0, 360); negative speeds are rejected.
std::vector<WindObservation> load_wind_observations(
    const std::filesystem::path& path);

void write_wind_observations(const std::filesystem::path& path,
                             const std::vector<WindObservation>& obs);

/// Distinct observation epochs in ascending time order.
std::vector<double> observation_epochs(const std::vector<WindObservation>& obs);

/// Observations belonging to the latest epoch at or before `time_s`.
/// Throws ConfigError if no epoch covers the requested time.
std::vector<WindObservation> observations_at(
    const std::vector<WindObservation>& obs, double time_s);

}  // namespace plume
