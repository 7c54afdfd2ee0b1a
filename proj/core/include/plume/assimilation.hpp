#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "plume/puff.hpp"
#include "plume/rng.hpp"
#include "plume/sensors.hpp"
#include "plume/transport.hpp"
#include "plume/windfield.hpp"

namespace plume {

/// One full model replicate: its puff set, the wind inputs sampled for the
/// current cycle, an importance weight, and a private random substream.
struct Particle {
  std::vector<Puff> puffs;
  std::vector<WindObservation> perturbed_obs;
  double weight = 0.0;
  RngStream rng;
  std::vector<double> window_dose_ppt_hr;  // per receptor, last completed window
};

/// Weighted particle set approximating the posterior over dispersion states.
struct Ensemble {
  std::vector<Particle> particles;
  int cycle = 0;  // completed assimilation cycles
  std::uint64_t master_seed = 0;
  std::uint64_t next_stream = 0;  // next unused particle substream id
  RngStream resample_rng;

  std::size_t size() const { return particles.size(); }
  double weight_sum() const;
  std::vector<double> weights() const;
};

/// Training observations whose bag windows end at one assimilation cycle.
/// Construction resolves receptor indices and enforces that only training
/// lines can ever reach the weight update.
struct ObservationBatch {
  int window_k = 0;
  struct Entry {
    std::string sampler_id;
    int receptor = 0;  // index into TransportContext::receptors
    double observed_ppt_hr = 0.0;
  };
  std::vector<Entry> entries;
};

ObservationBatch make_observation_batch(const std::vector<DoseRecord>& observed,
                                        const SamplerArray& array,
                                        const std::set<int>& train_lines,
                                        int window_k);

/// Gaussian observation likelihood settings. The variance is recomputed
/// every cycle from the ensemble itself (pooled over all particle/sensor
/// residuals by default) and floored so agreement cannot degenerate it.
struct LikelihoodSpec {
  enum class VarianceMode { pooled, per_sensor, fixed };
  VarianceMode mode = VarianceMode::pooled;
  double fixed_variance = 0.0;   // (ppt-hr)^2, used when mode == fixed
  double variance_floor = 1.0;   // (1 ppt-hr)^2

  void validate() const;
};

struct UpdateDiagnostics {
  bool underflow = false;   // all likelihoods vanished; fell back to uniform
  int pairs_used = 0;       // surviving (sensor) pairs per particle
  double pooled_variance = 0.0;
};

struct CycleDiagnostics {
  int window_k = 0;
  double ess = 0.0;  // before resampling
  bool resampled = false;
  bool underflow = false;
  double min_weight = 0.0;
  double max_weight = 0.0;
};

struct CycleResult {
  std::vector<double> estimates_ppt_hr;  // per receptor, post-update weights
  CycleDiagnostics diagnostics;
};

/// N particles holding the initial release state, uniform weights, and
/// deterministically derived substreams. N < 2 is rejected.
Ensemble init_ensemble(int n_particles, const TransportContext& ctx,
                       std::uint64_t master_seed);

/// Bootstrap proposal: each particle independently redraws its wind inputs
/// from the data-error model and advances its puffs over the window
/// [cycle * dt_window, (cycle+1) * dt_window]. Weights are untouched
/// (proposal equals transition). Per-receptor window doses are recorded on
/// each particle. Parallel over particles; bit-identical for any thread
/// count.
void propagate(Ensemble& ens, const std::vector<WindObservation>& nominal_obs,
               const WindPerturbationSpec& spec, double dt_window,
               const TransportContext& ctx, unsigned threads = 1);

/// Multiplies weights by the Gaussian observation likelihood of the batch,
/// in log space with max-subtraction. Sensors are independent; the variance
/// comes from the likelihood settings (pooled sample variance of
/// observed-minus-predicted residuals by default). An empty batch leaves
/// weights unchanged.
UpdateDiagnostics update_weights(Ensemble& ens, const ObservationBatch& batch,
                                 const LikelihoodSpec& lik,
                                 const ThresholdPolicy& thresholds);

void normalize_weights(Ensemble& ens);

/// 1 / sum(w_i^2): N for uniform weights, 1 for a degenerate ensemble.
double effective_sample_size(const Ensemble& ens);

/// Systematic resampling over the weight CDF. Offspring are copies with
/// fresh substreams and uniform weights 1/N.
void resample(Ensemble& ens, RngStream& rng);

/// Weighted posterior dose estimate at one receptor (post-update weights).
double estimate_dose(const Ensemble& ens, int receptor);

/// One full filter cycle: propagate, update, normalize, record estimates,
/// then resample when ESS drops below threshold_fraction * N.
CycleResult run_cycle(Ensemble& ens, const std::vector<WindObservation>& nominal_obs,
                      const ObservationBatch& batch,
                      const WindPerturbationSpec& pert_spec,
                      const LikelihoodSpec& lik, const ThresholdPolicy& thresholds,
                      double dt_window, const TransportContext& ctx,
                      double resample_threshold_fraction, unsigned threads = 1);

}  // namespace plume
