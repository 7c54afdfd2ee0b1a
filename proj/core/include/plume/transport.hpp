#pragma once

#include <vector>

#include "plume/puff.hpp"
#include "plume/windfield.hpp"

namespace plume {

/// Everything one model replicate needs to advance over an assimilation
/// window: grid geometry, diffusion law, mass-consistency settings, receptor
/// locations, sub-cycling step, and the unit conversion to ppt.
struct TransportContext {
  GridSpec grid;
  DiffusionSpec diffusion;
  int adjust_iterations = 50;
  double adjust_relaxation = 1.0;
  std::vector<Vec3> receptors;
  std::vector<ReleaseSpec> releases;  // fired in order as start times pass
  double model_dt_s = 60.0;
  double ppt_per_kgm3 = 1.0;
};

/// Advances one replicate's puff list from t0 to t1 under the given wind
/// observations (already perturbed, or nominal for the process model):
/// builds the interpolated mass-consistent field, fires due releases, and
/// sub-cycles transport at model_dt_s. Appends the sampled concentration
/// series (ppt) per receptor to `series`; series[i] must already cover up to
/// t0 or be empty.
void advance_window(std::vector<Puff>& puffs,
                    const std::vector<WindObservation>& obs,
                    const TransportContext& ctx, double t0, double t1,
                    std::vector<ConcentrationSeries>& series);

/// Dose over [t0, t1] at every receptor from the accumulated series.
std::vector<double> window_doses(const std::vector<ConcentrationSeries>& series,
                                 double t0, double t1);

}  // namespace plume
