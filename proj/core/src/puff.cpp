#include "plume/puff.hpp"

#include <algorithm>
#include <cmath>

#include "plume/errors.hpp"

namespace plume {

namespace {
constexpr double kTwoPi = 2.0 * 3.14159265358979323846;
const double kTwoPiPow32 = std::pow(kTwoPi, 1.5);
}  // namespace

void ReleaseSpec::validate() const {
  if (mass_kg <= 0.0) throw ConfigError("release mass must be > 0");
  if (position.z < 0.0) throw ConfigError("release height must be >= 0");
  if (initial_sigma_m <= 0.0) throw ConfigError("initial sigma must be > 0");
}

void DiffusionSpec::validate() const {
  if (horizontal_coeff <= 0.0 || vertical_coeff <= 0.0) {
    throw ConfigError("diffusion coefficients must be > 0");
  }
  if (sigma_z_cap_m <= 0.0) throw ConfigError("sigma_z cap must be > 0");
}

Puff release(const ReleaseSpec& spec) {
  spec.validate();
  Puff p;
  p.mass_kg = spec.mass_kg;
  p.centroid = spec.position;
  p.sigma_h_m = spec.initial_sigma_m;
  p.sigma_z_m = spec.initial_sigma_m;
  p.age_s = 0.0;
  return p;
}

Puff advect_diffuse_step(const Puff& puff, const WindGrid& grid,
                         const DiffusionSpec& diffusion, double dt_s) {
  if (dt_s <= 0.0) throw ConfigError("transport step dt must be > 0");
  Puff out = puff;
  const WindSample wind = sample_wind_at(grid, puff.centroid.xy());
  out.centroid.x += wind.u * dt_s;
  out.centroid.y += wind.v * dt_s;
  out.sigma_h_m = std::sqrt(puff.sigma_h_m * puff.sigma_h_m +
                            diffusion.horizontal_coeff * diffusion.horizontal_coeff * dt_s);
  out.sigma_z_m = std::min(diffusion.sigma_z_cap_m,
                           std::sqrt(puff.sigma_z_m * puff.sigma_z_m +
                                     diffusion.vertical_coeff * diffusion.vertical_coeff * dt_s));
  out.age_s += dt_s;
  if (!grid.spec.contains(out.centroid.xy())) out.off_domain = true;
  return out;
}

double concentration_at(const Puff& puff, const Vec3& receptor) {
  if (puff.off_domain || puff.mass_kg == 0.0) return 0.0;
  const double sh2 = puff.sigma_h_m * puff.sigma_h_m;
  const double sz = puff.sigma_z_m;
  const double dx = receptor.x - puff.centroid.x;
  const double dy = receptor.y - puff.centroid.y;
  const double horizontal = std::exp(-(dx * dx + dy * dy) / (2.0 * sh2));
  const double dz1 = receptor.z - puff.centroid.z;
  const double dz2 = receptor.z + puff.centroid.z;  // image puff below ground
  const double vertical = std::exp(-dz1 * dz1 / (2.0 * sz * sz)) +
                          std::exp(-dz2 * dz2 / (2.0 * sz * sz));
  return puff.mass_kg / (kTwoPiPow32 * sh2 * sz) * horizontal * vertical;
}

double concentration_at(std::span<const Puff> puffs, const Vec3& receptor) {
  double sum = 0.0;
  for (const auto& p : puffs) sum += concentration_at(p, receptor);
  return sum;
}

double accumulate_dose(const ConcentrationSeries& series, double start_s,
                       double end_s) {
  if (series.ppt.size() < 2 || series.dt_s <= 0.0) {
    throw ConfigError("concentration series needs at least two samples");
  }
  if (end_s < start_s) throw ConfigError("dose window end before start");
  const double eps = 1e-9 * series.dt_s;
  if (start_s < series.t0_s - eps || end_s > series.t_end() + eps) {
    throw ConfigError("dose window outside series coverage");
  }

  // Integrate the piecewise-linear reconstruction of the samples.
  auto value_at = [&](double t) {
    double f = (t - series.t0_s) / series.dt_s;
    f = std::clamp(f, 0.0, static_cast<double>(series.ppt.size() - 1));
    const std::size_t i = std::min(static_cast<std::size_t>(f), series.ppt.size() - 2);
    const double w = f - static_cast<double>(i);
    return (1.0 - w) * series.ppt[i] + w * series.ppt[i + 1];
  };

  double integral = 0.0;  // ppt * seconds
  double t = start_s;
  double ft = value_at(t);
  while (t < end_s) {
    // next sample boundary after t, not exceeding the window end
    const double idx = std::floor((t - series.t0_s) / series.dt_s + 1.0 + 1e-12);
    const double t_next = std::min(end_s, series.t0_s + idx * series.dt_s);
    const double f_next = value_at(t_next);
    integral += 0.5 * (ft + f_next) * (t_next - t);
    t = t_next;
    ft = f_next;
  }
  return integral / 3600.0;  // ppt-hr
}

}  // namespace plume
