#include "plume/windfield.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "plume/csv.hpp"
#include "plume/errors.hpp"

namespace plume {

void WindPerturbationSpec::validate() const {
  if (speed_sigma_ms < 0.0 || direction_sigma_deg < 0.0) {
    throw ConfigError("wind perturbation sigmas must be >= 0");
  }
}

void GridSpec::validate() const {
  if (nx < 2 || ny < 2) throw ConfigError("grid must be at least 2x2 cells");
  if (cell_m <= 0.0) throw ConfigError("grid cell size must be > 0");
}

double normalize_direction_deg(double deg) {
  double d = std::fmod(deg, 360.0);
  if (d < 0.0) d += 360.0;
  if (d == 360.0) d = 0.0;  // fmod can yield -0.0 -> 360 after the shift
  return d;
}

Vec2 wind_components(double speed_ms, double dir_deg) {
  const double rad = dir_deg * kDegToRad;
  return {-speed_ms * std::sin(rad), -speed_ms * std::cos(rad)};
}

void speed_direction(double u, double v, double& speed_ms, double& dir_deg) {
  speed_ms = std::hypot(u, v);
  if (speed_ms == 0.0) {
    dir_deg = 0.0;
    return;
  }
  dir_deg = normalize_direction_deg(std::atan2(-u, -v) * kRadToDeg);
}

std::vector<WindObservation> perturb_observations(
    const std::vector<WindObservation>& obs, const WindPerturbationSpec& spec,
    RngStream& rng) {
  spec.validate();
  if (obs.empty()) throw ConfigError("no wind data");
  std::vector<WindObservation> out;
  out.reserve(obs.size());
  for (const auto& o : obs) {
    WindObservation p = o;
    p.speed_ms = std::max(0.0, o.speed_ms + rng.normal(0.0, spec.speed_sigma_ms));
    p.dir_deg = normalize_direction_deg(o.dir_deg + rng.normal(0.0, spec.direction_sigma_deg));
    out.push_back(std::move(p));
  }
  return out;
}

WindGrid interpolate_field(const std::vector<WindObservation>& obs,
                           const GridSpec& spec) {
  spec.validate();
  if (obs.empty()) throw ConfigError("no wind data");

  std::vector<Vec2> station_uv;
  station_uv.reserve(obs.size());
  for (const auto& o : obs) station_uv.push_back(wind_components(o.speed_ms, o.dir_deg));

  WindGrid grid;
  grid.spec = spec;
  grid.valid_time_s = obs.front().time_s;
  grid.u.assign(static_cast<std::size_t>(spec.nx) * spec.ny, 0.0);
  grid.v.assign(static_cast<std::size_t>(spec.nx) * spec.ny, 0.0);

  const double snap_radius = 0.5 * spec.cell_m;
  for (int j = 0; j < spec.ny; ++j) {
    for (int i = 0; i < spec.nx; ++i) {
      const Vec2 c = spec.cell_center(i, j);
      double nearest = std::numeric_limits<double>::infinity();
      std::size_t nearest_idx = 0;
      double wsum = 0.0, usum = 0.0, vsum = 0.0;
      for (std::size_t s = 0; s < obs.size(); ++s) {
        const double d = distance2d(c, obs[s].position.xy());
        if (d < nearest) {
          nearest = d;
          nearest_idx = s;
        }
        const double w = 1.0 / std::max(d * d, 1e-12);
        wsum += w;
        usum += w * station_uv[s].x;
        vsum += w * station_uv[s].y;
      }
      if (nearest < snap_radius) {
        grid.at_u(i, j) = station_uv[nearest_idx].x;
        grid.at_v(i, j) = station_uv[nearest_idx].y;
      } else {
        grid.at_u(i, j) = usum / wsum;
        grid.at_v(i, j) = vsum / wsum;
      }
    }
  }
  return grid;
}

namespace {

// Centered-difference divergence at interior cell (i, j).
inline double divergence_at(const WindGrid& g, int i, int j) {
  const double inv2h = 1.0 / (2.0 * g.spec.cell_m);
  return (g.at_u(i + 1, j) - g.at_u(i - 1, j)) * inv2h +
         (g.at_v(i, j + 1) - g.at_v(i, j - 1)) * inv2h;
}

}  // namespace

double divergence_norm(const WindGrid& grid) {
  double sum = 0.0;
  for (int j = 1; j < grid.spec.ny - 1; ++j) {
    for (int i = 1; i < grid.spec.nx - 1; ++i) {
      const double d = divergence_at(grid, i, j);
      sum += d * d;
    }
  }
  return std::sqrt(sum);
}

WindGrid adjust_mass_consistency(const WindGrid& grid, int iterations,
                                 double relaxation, AdjustDiagnostics* diag) {
  if (iterations < 0) throw ConfigError("adjustment iterations must be >= 0");
  if (relaxation <= 0.0 || relaxation > 2.0) {
    throw ConfigError("adjustment relaxation must be in (0, 2]");
  }
  const double before = divergence_norm(grid);
  WindGrid out = grid;

  // Steepest descent on J = 1/2 * sum(div^2) over the velocity components.
  // Step bounded by ||D||_1 * ||D||_inf so J is non-increasing for any grid
  // when relaxation <= 2.
  const double h = grid.spec.cell_m;
  const double lipschitz = (2.0 / h) * (1.0 / h);
  const double alpha = relaxation / lipschitz;
  const int nx = grid.spec.nx, ny = grid.spec.ny;
  std::vector<double> div(static_cast<std::size_t>(nx) * ny, 0.0);

  for (int it = 0; it < iterations; ++it) {
    for (int j = 1; j < ny - 1; ++j) {
      for (int i = 1; i < nx - 1; ++i) {
        div[static_cast<std::size_t>(i + nx * j)] = divergence_at(out, i, j);
      }
    }
    const double inv2h = 1.0 / (2.0 * h);
    for (int j = 1; j < ny - 1; ++j) {
      for (int i = 1; i < nx - 1; ++i) {
        const double corr = alpha * div[static_cast<std::size_t>(i + nx * j)] * inv2h;
        out.at_u(i + 1, j) -= corr;
        out.at_u(i - 1, j) += corr;
        out.at_v(i, j + 1) -= corr;
        out.at_v(i, j - 1) += corr;
      }
    }
  }

  if (diag) {
    diag->divergence_before = before;
    diag->divergence_after = divergence_norm(out);
    double dist = 0.0;
    for (std::size_t n = 0; n < out.u.size(); ++n) {
      const double du = out.u[n] - grid.u[n];
      const double dv = out.v[n] - grid.v[n];
      dist += du * du + dv * dv;
    }
    diag->l2_change = std::sqrt(dist);
  }
  return out;
}

WindSample sample_wind_at(const WindGrid& grid, const Vec2& position) {
  const GridSpec& s = grid.spec;
  WindSample result;
  Vec2 p = position;
  if (!s.contains(p)) {
    result.clamped = true;
    p.x = std::clamp(p.x, s.x0, s.x_max());
    p.y = std::clamp(p.y, s.y0, s.y_max());
  }
  // Continuous cell-center coordinates; the outer half-cell ring clamps to
  // the boundary row/column of centers.
  double fx = (p.x - s.x0) / s.cell_m - 0.5;
  double fy = (p.y - s.y0) / s.cell_m - 0.5;
  fx = std::clamp(fx, 0.0, static_cast<double>(s.nx - 1));
  fy = std::clamp(fy, 0.0, static_cast<double>(s.ny - 1));
  const int i0 = std::min(static_cast<int>(fx), s.nx - 2);
  const int j0 = std::min(static_cast<int>(fy), s.ny - 2);
  const double tx = fx - i0;
  const double ty = fy - j0;

  const double u00 = grid.at_u(i0, j0), u10 = grid.at_u(i0 + 1, j0);
  const double u01 = grid.at_u(i0, j0 + 1), u11 = grid.at_u(i0 + 1, j0 + 1);
  const double v00 = grid.at_v(i0, j0), v10 = grid.at_v(i0 + 1, j0);
  const double v01 = grid.at_v(i0, j0 + 1), v11 = grid.at_v(i0 + 1, j0 + 1);
  result.u = (1 - tx) * (1 - ty) * u00 + tx * (1 - ty) * u10 +
             (1 - tx) * ty * u01 + tx * ty * u11;
  result.v = (1 - tx) * (1 - ty) * v00 + tx * (1 - ty) * v10 +
             (1 - tx) * ty * v01 + tx * ty * v11;
  return result;
}

static const std::string kWindHeader = "station_id,x_m,y_m,z_m,time_s,speed_ms,dir_deg";

std::vector<WindObservation> load_wind_observations(
    const std::filesystem::path& path) {
  const auto rows = csv::read_file(path, kWindHeader);
  std::vector<WindObservation> obs;
  obs.reserve(rows.size());
  for (const auto& row : rows) {
    WindObservation o;
    o.station_id = row.fields[0];
    o.position = {csv::parse_double(row, 1, path), csv::parse_double(row, 2, path),
                  csv::parse_double(row, 3, path)};
    o.time_s = csv::parse_double(row, 4, path);
    o.speed_ms = csv::parse_double(row, 5, path);
    if (o.speed_ms < 0.0) {
      throw ConfigError(path.string() + ":" + std::to_string(row.line_number) +
                        ": negative wind speed");
    }
    o.dir_deg = normalize_direction_deg(csv::parse_double(row, 6, path));
    obs.push_back(std::move(o));
  }
  if (obs.empty()) throw ConfigError(path.string() + ": no wind data");
  return obs;
}

void write_wind_observations(const std::filesystem::path& path,
                             const std::vector<WindObservation>& obs) {
  csv::Writer w(path, kWindHeader);
  for (const auto& o : obs) {
    w.row({o.station_id, csv::format_double(o.position.x),
           csv::format_double(o.position.y), csv::format_double(o.position.z),
           csv::format_double(o.time_s), csv::format_double(o.speed_ms),
           csv::format_double(o.dir_deg)});
  }
}

std::vector<double> observation_epochs(const std::vector<WindObservation>& obs) {
  std::vector<double> epochs;
  for (const auto& o : obs) epochs.push_back(o.time_s);
  std::sort(epochs.begin(), epochs.end());
  epochs.erase(std::unique(epochs.begin(), epochs.end()), epochs.end());
  return epochs;
}

std::vector<WindObservation> observations_at(
    const std::vector<WindObservation>& obs, double time_s) {
  double best = -std::numeric_limits<double>::infinity();
  bool found = false;
  for (const auto& o : obs) {
    if (o.time_s <= time_s && o.time_s > best) {
      best = o.time_s;
      found = true;
    }
  }
  if (!found) {
    throw ConfigError("no wind data at or before t=" + std::to_string(time_s) + " s");
  }
  std::vector<WindObservation> out;
  for (const auto& o : obs) {
    if (o.time_s == best) out.push_back(o);
  }
  return out;
}

}  // namespace plume
