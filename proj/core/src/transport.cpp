#include "plume/transport.hpp"

#include <cmath>

#include "plume/errors.hpp"

namespace plume {

namespace {

void fire_due_releases(std::vector<Puff>& puffs,
                       const std::vector<ReleaseSpec>& releases, double t) {
  while (puffs.size() < releases.size() &&
         releases[puffs.size()].start_time_s <= t) {
    puffs.push_back(release(releases[puffs.size()]));
  }
}

void sample_receptors(const std::vector<Puff>& puffs,
                      const TransportContext& ctx,
                      std::vector<ConcentrationSeries>& series) {
  for (std::size_t r = 0; r < ctx.receptors.size(); ++r) {
    const double c = concentration_at(std::span<const Puff>(puffs), ctx.receptors[r]);
    series[r].ppt.push_back(c * ctx.ppt_per_kgm3);
  }
}

}  // namespace

void advance_window(std::vector<Puff>& puffs,
                    const std::vector<WindObservation>& obs,
                    const TransportContext& ctx, double t0, double t1,
                    std::vector<ConcentrationSeries>& series) {
  if (t1 <= t0) throw ConfigError("window end must be after start");
  const double dt = ctx.model_dt_s;
  if (dt <= 0.0) throw ConfigError("model dt must be > 0");
  const double n_steps_d = (t1 - t0) / dt;
  const int n_steps = static_cast<int>(std::lround(n_steps_d));
  if (std::abs(n_steps_d - n_steps) > 1e-9 || n_steps < 1) {
    throw ConfigError("model dt must divide the window length");
  }

  WindGrid grid = interpolate_field(obs, ctx.grid);
  grid = adjust_mass_consistency(grid, ctx.adjust_iterations, ctx.adjust_relaxation);

  if (series.empty()) {
    series.assign(ctx.receptors.size(), ConcentrationSeries{t0, dt, {}});
  }
  // First window starts the series with the state at t0.
  if (series.empty() || series.front().ppt.empty()) {
    fire_due_releases(puffs, ctx.releases, t0);
    sample_receptors(puffs, ctx, series);
  }

  double t = t0;
  for (int step = 0; step < n_steps; ++step) {
    for (auto& p : puffs) p = advect_diffuse_step(p, grid, ctx.diffusion, dt);
    t = t0 + (step + 1) * dt;
    fire_due_releases(puffs, ctx.releases, t);
    sample_receptors(puffs, ctx, series);
  }
}

std::vector<double> window_doses(const std::vector<ConcentrationSeries>& series,
                                 double t0, double t1) {
  std::vector<double> doses;
  doses.reserve(series.size());
  for (const auto& s : series) doses.push_back(accumulate_dose(s, t0, t1));
  return doses;
}

}  // namespace plume
