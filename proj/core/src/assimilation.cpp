#include "plume/assimilation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "plume/errors.hpp"
#include "plume/parallel.hpp"

namespace plume {

namespace {
constexpr double kLogTwoPi = 1.8378770664093454836;
}

double Ensemble::weight_sum() const {
  double sum = 0.0;
  for (const auto& p : particles) sum += p.weight;
  return sum;
}

std::vector<double> Ensemble::weights() const {
  std::vector<double> w;
  w.reserve(particles.size());
  for (const auto& p : particles) w.push_back(p.weight);
  return w;
}

void LikelihoodSpec::validate() const {
  if (variance_floor <= 0.0) throw ConfigError("likelihood variance floor must be > 0");
  if (mode == VarianceMode::fixed && fixed_variance <= 0.0) {
    throw ConfigError("fixed likelihood variance must be > 0");
  }
}

ObservationBatch make_observation_batch(const std::vector<DoseRecord>& observed,
                                        const SamplerArray& array,
                                        const std::set<int>& train_lines,
                                        int window_k) {
  ObservationBatch batch;
  batch.window_k = window_k;
  for (const auto& r : observed) {
    if (r.window_k != window_k) continue;
    if (r.kind != DoseKind::observed) {
      throw ConfigError("observation batch requires observed-kind records");
    }
    if (!train_lines.count(r.line)) {
      throw ConfigError("record from line " + std::to_string(r.line) +
                        " is not in the training set; refusing to assimilate it");
    }
    int receptor = -1;
    for (std::size_t i = 0; i < array.samplers.size(); ++i) {
      if (array.samplers[i].id == r.sampler_id) {
        receptor = static_cast<int>(i);
        break;
      }
    }
    if (receptor < 0) throw ConfigError("unknown sampler id: " + r.sampler_id);
    if (!array.samplers[receptor].active_in_window(window_k)) {
      throw ConfigError("sampler " + r.sampler_id + " has no bag in window " +
                        std::to_string(window_k));
    }
    batch.entries.push_back({r.sampler_id, receptor, r.dose_ppt_hr});
  }
  return batch;
}

Ensemble init_ensemble(int n_particles, const TransportContext& ctx,
                       std::uint64_t master_seed) {
  if (n_particles < 2) throw ConfigError("ensemble needs at least 2 particles");
  for (const auto& r : ctx.releases) r.validate();

  Ensemble ens;
  ens.master_seed = master_seed;
  ens.resample_rng = RngStream(master_seed, kResampleStream);
  ens.particles.resize(static_cast<std::size_t>(n_particles));
  for (int i = 0; i < n_particles; ++i) {
    Particle& p = ens.particles[static_cast<std::size_t>(i)];
    p.weight = 1.0 / n_particles;
    p.rng = RngStream(master_seed, static_cast<std::uint64_t>(i));
    for (const auto& r : ctx.releases) {
      if (r.start_time_s <= 0.0) p.puffs.push_back(release(r));
      else break;  // releases fire in order as the trial advances
    }
  }
  ens.next_stream = static_cast<std::uint64_t>(n_particles);
  return ens;
}

void propagate(Ensemble& ens, const std::vector<WindObservation>& nominal_obs,
               const WindPerturbationSpec& spec, double dt_window,
               const TransportContext& ctx, unsigned threads) {
  if (ens.size() == 0) throw ConfigError("empty ensemble");
  spec.validate();
  const double t0 = ens.cycle * dt_window;
  const double t1 = t0 + dt_window;

  std::vector<std::string> failures(ens.size());
  parallel_for(ens.size(), threads, [&](std::size_t i) {
    Particle& p = ens.particles[i];
    try {
      p.perturbed_obs = perturb_observations(nominal_obs, spec, p.rng);
      std::vector<ConcentrationSeries> series;
      advance_window(p.puffs, p.perturbed_obs, ctx, t0, t1, series);
      p.window_dose_ppt_hr = window_doses(series, t0, t1);
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < failures.size(); ++i) {
    if (!failures[i].empty()) {
      throw std::runtime_error("particle " + std::to_string(i) +
                               " failed to propagate: " + failures[i]);
    }
  }
}

namespace {

// Per-particle floored predictions for the batch entries that survive the
// observed cutoff; layout pred[particle][entry].
struct PairTable {
  std::vector<double> observed;             // per surviving entry
  std::vector<std::vector<double>> pred;    // per particle, per entry
};

PairTable build_pair_table(const Ensemble& ens, const ObservationBatch& batch,
                           const ThresholdPolicy& thresholds) {
  PairTable table;
  std::vector<int> receptors;
  for (const auto& e : batch.entries) {
    if (e.observed_ppt_hr < thresholds.observed_cutoff_ppt_hr) continue;
    table.observed.push_back(e.observed_ppt_hr);
    receptors.push_back(e.receptor);
  }
  table.pred.resize(ens.size());
  for (std::size_t i = 0; i < ens.size(); ++i) {
    const Particle& p = ens.particles[i];
    table.pred[i].reserve(receptors.size());
    for (int r : receptors) {
      if (r < 0 || static_cast<std::size_t>(r) >= p.window_dose_ppt_hr.size()) {
        throw ConfigError("particle has no predicted dose for receptor " +
                          std::to_string(r) + "; propagate first");
      }
      table.pred[i].push_back(
          std::max(p.window_dose_ppt_hr[static_cast<std::size_t>(r)],
                   thresholds.predicted_floor_ppt_hr));
    }
  }
  return table;
}

}  // namespace

UpdateDiagnostics update_weights(Ensemble& ens, const ObservationBatch& batch,
                                 const LikelihoodSpec& lik,
                                 const ThresholdPolicy& thresholds) {
  lik.validate();
  thresholds.validate();
  UpdateDiagnostics diag;
  if (ens.size() == 0) throw ConfigError("empty ensemble");

  const PairTable table = build_pair_table(ens, batch, thresholds);
  const std::size_t n_pairs = table.observed.size();
  diag.pairs_used = static_cast<int>(n_pairs);
  if (n_pairs == 0) return diag;  // vacuous product; weights unchanged

  // Per-entry likelihood variance v(k).
  std::vector<double> variance(n_pairs);
  if (lik.mode == LikelihoodSpec::VarianceMode::fixed) {
    std::fill(variance.begin(), variance.end(),
              std::max(lik.fixed_variance, lik.variance_floor));
  } else if (lik.mode == LikelihoodSpec::VarianceMode::per_sensor) {
    for (std::size_t j = 0; j < n_pairs; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < ens.size(); ++i) {
        mean += table.observed[j] - table.pred[i][j];
      }
      mean /= static_cast<double>(ens.size());
      double var = 0.0;
      for (std::size_t i = 0; i < ens.size(); ++i) {
        const double r = table.observed[j] - table.pred[i][j] - mean;
        var += r * r;
      }
      var /= std::max<double>(1.0, static_cast<double>(ens.size()) - 1.0);
      variance[j] = std::max(var, lik.variance_floor);
    }
  } else {
    // Pooled sample variance of residuals over all particles and sensors.
    double mean = 0.0;
    const double count = static_cast<double>(ens.size() * n_pairs);
    for (std::size_t i = 0; i < ens.size(); ++i) {
      for (std::size_t j = 0; j < n_pairs; ++j) {
        mean += table.observed[j] - table.pred[i][j];
      }
    }
    mean /= count;
    double var = 0.0;
    for (std::size_t i = 0; i < ens.size(); ++i) {
      for (std::size_t j = 0; j < n_pairs; ++j) {
        const double r = table.observed[j] - table.pred[i][j] - mean;
        var += r * r;
      }
    }
    var /= std::max(1.0, count - 1.0);
    std::fill(variance.begin(), variance.end(), std::max(var, lik.variance_floor));
  }
  diag.pooled_variance = variance.front();

  // Log-space weight update with max-subtraction.
  std::vector<double> log_weight(ens.size());
  double max_lw = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ens.size(); ++i) {
    const Particle& p = ens.particles[i];
    double ll = 0.0;
    for (std::size_t j = 0; j < n_pairs; ++j) {
      const double r = table.observed[j] - table.pred[i][j];
      ll += -0.5 * (kLogTwoPi + std::log(variance[j])) - r * r / (2.0 * variance[j]);
    }
    const double lw = (p.weight > 0.0 ? std::log(p.weight)
                                      : -std::numeric_limits<double>::infinity()) + ll;
    log_weight[i] = lw;
    if (lw > max_lw) max_lw = lw;
  }

  if (!std::isfinite(max_lw)) {
    // Every particle underflowed; keep the filter alive with uniform weights.
    diag.underflow = true;
    for (auto& p : ens.particles) p.weight = 1.0 / static_cast<double>(ens.size());
    return diag;
  }

  for (std::size_t i = 0; i < ens.size(); ++i) {
    ens.particles[i].weight = std::exp(log_weight[i] - max_lw);
  }
  return diag;
}

void normalize_weights(Ensemble& ens) {
  const double sum = ens.weight_sum();
  if (!(sum > 0.0) || !std::isfinite(sum)) {
    throw std::runtime_error("cannot normalize: weight sum is " + std::to_string(sum));
  }
  for (auto& p : ens.particles) p.weight /= sum;
}

double effective_sample_size(const Ensemble& ens) {
  double sq = 0.0;
  for (const auto& p : ens.particles) sq += p.weight * p.weight;
  if (sq <= 0.0) throw std::runtime_error("effective_sample_size: all weights zero");
  return 1.0 / sq;
}

void resample(Ensemble& ens, RngStream& rng) {
  const std::size_t n = ens.size();
  if (n == 0) throw ConfigError("empty ensemble");
  const double u = rng.uniform01();

  std::vector<std::size_t> pick(n);
  std::size_t j = 0;
  double cum = ens.particles[0].weight;
  for (std::size_t i = 0; i < n; ++i) {
    const double pos = (static_cast<double>(i) + u) / static_cast<double>(n);
    while (pos >= cum && j + 1 < n) {
      ++j;
      cum += ens.particles[j].weight;
    }
    pick[i] = j;
  }

  std::vector<Particle> offspring;
  offspring.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Particle child = ens.particles[pick[i]];
    child.weight = 1.0 / static_cast<double>(n);
    child.rng = RngStream(ens.master_seed, ens.next_stream + i);
    offspring.push_back(std::move(child));
  }
  ens.next_stream += n;
  ens.particles = std::move(offspring);
}

double estimate_dose(const Ensemble& ens, int receptor) {
  double est = 0.0;
  for (const auto& p : ens.particles) {
    est += p.weight * p.window_dose_ppt_hr.at(static_cast<std::size_t>(receptor));
  }
  return est;
}

CycleResult run_cycle(Ensemble& ens, const std::vector<WindObservation>& nominal_obs,
                      const ObservationBatch& batch,
                      const WindPerturbationSpec& pert_spec,
                      const LikelihoodSpec& lik, const ThresholdPolicy& thresholds,
                      double dt_window, const TransportContext& ctx,
                      double resample_threshold_fraction, unsigned threads) {
  propagate(ens, nominal_obs, pert_spec, dt_window, ctx, threads);
  const UpdateDiagnostics update = update_weights(ens, batch, lik, thresholds);
  normalize_weights(ens);

  CycleResult result;
  result.estimates_ppt_hr.resize(ctx.receptors.size());
  for (std::size_t r = 0; r < ctx.receptors.size(); ++r) {
    result.estimates_ppt_hr[r] = estimate_dose(ens, static_cast<int>(r));
  }

  CycleDiagnostics& d = result.diagnostics;
  d.window_k = ens.cycle + 1;
  d.ess = effective_sample_size(ens);
  d.underflow = update.underflow;
  const auto w = ens.weights();
  d.min_weight = *std::min_element(w.begin(), w.end());
  d.max_weight = *std::max_element(w.begin(), w.end());

  if (d.ess < resample_threshold_fraction * static_cast<double>(ens.size())) {
    resample(ens, ens.resample_rng);
    d.resampled = true;
  }
  ens.cycle += 1;
  return result;
}

}  // namespace plume
