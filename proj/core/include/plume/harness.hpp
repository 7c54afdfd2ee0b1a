#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "plume/assimilation.hpp"
#include "plume/metrics.hpp"
#include "plume/scenario.hpp"

namespace plume {

/// Dosage output of one trial run: a predicted record for every sampler and
/// every window of that sampler's recording span, ordered window-major, plus
/// per-cycle filter diagnostics when assimilation ran.
struct RunResult {
  std::vector<DoseRecord> doses;
  std::vector<CycleDiagnostics> diagnostics;
};

/// Loads the scenario's nominal wind readings and rejects stations outside
/// the domain or series starting after the trial does.
std::vector<WindObservation> load_nominal_wind(const Scenario& s);

/// Single deterministic model trajectory under the unperturbed readings.
RunResult run_forecast(const Scenario& s, const std::vector<WindObservation>& nominal);

struct TruthRun {
  std::vector<WindObservation> truth_wind;  // the hidden wind realization
  std::vector<DoseRecord> observed;         // noisy bagged doses, all samplers
};

/// Twin-experiment truth: applies the configured bias to every nominal
/// reading (or samples one realization from the perturbation model), runs
/// the dispersion model under that hidden wind, and bags noisy observations.
TruthRun generate_twin_truth(const Scenario& s, std::uint64_t truth_seed);

/// Full particle-filter run over every assimilation window. Observations
/// from the training lines steer the weights; estimates cover all samplers.
RunResult run_assimilation(const Scenario& s, const std::vector<WindObservation>& nominal,
                           const std::vector<DoseRecord>& observed,
                           std::uint64_t master_seed, unsigned threads = 1);

/// Joins observed and predicted records on (sampler id, window), keeps the
/// given lines, and applies the threshold policy. Pair order follows the
/// observed records. Predicted records with no observed partner are ignored;
/// a joined pair whose line fields disagree is an error.
std::vector<DosePair> pair_doses(const std::vector<DoseRecord>& observed,
                                 const std::vector<DoseRecord>& predicted,
                                 const std::set<int>& lines,
                                 const ThresholdPolicy& policy);

std::vector<PairedSample> to_samples(const std::vector<DosePair>& pairs);

struct MonteCarloRun {
  std::uint64_t seed = 0;
  MetricReport test;  // filter vs observed on the test split
};

struct MonteCarloResult {
  MetricReport forecast_test;          // process-model comparison column
  std::vector<MonteCarloRun> runs;
  std::vector<double> mean;            // per metric, metric_names() order
  std::vector<ConfidenceInterval> ci;  // per metric, 95% by default
};

/// `runs` independent filter runs with seeds derived from `master_seed`,
/// all against the same fixed observation set. Parallel across runs; output
/// is bit-identical for any worker count.
MonteCarloResult run_monte_carlo(const Scenario& s, int runs,
                                 const std::vector<WindObservation>& nominal,
                                 const std::vector<DoseRecord>& observed,
                                 std::uint64_t master_seed, unsigned threads = 1);

/// Self-test: the forecast must match a replicate pushed through the
/// ensemble transport path with perturbations zeroed and weighting disabled.
/// Returns the largest relative dose difference over all sampler/windows.
double forecast_replicate_divergence(const Scenario& s,
                                     const std::vector<WindObservation>& nominal);

void write_diagnostics_csv(const std::filesystem::path& path,
                           const std::vector<CycleDiagnostics>& diags);

/// Scatter rows for external plotting, one block per source column value
/// ("process_model", then "particle_filter").
void write_scatter_csv(const std::filesystem::path& path,
                       const std::vector<DosePair>& process_model,
                       const std::vector<DosePair>& particle_filter);

/// Six rows (metric_names() order) with train/test values for both models.
/// FAC2/FAC3 are rendered as percentages here and in every report file.
void write_metrics_csv(const std::filesystem::path& path,
                       const MetricReport& forecast_train, const MetricReport& forecast_test,
                       const MetricReport& pf_train, const MetricReport& pf_test);

void write_report_csv(const std::filesystem::path& path, const MonteCarloResult& mc);

void write_runs_csv(const std::filesystem::path& path, const MonteCarloResult& mc);

/// Reproducibility manifest: tool version, config hash, seeds and sizes.
/// Deliberately carries nothing volatile (no timestamps, no worker counts).
struct ManifestInfo {
  std::string command;
  std::uint64_t master_seed = 0;
  int particles = 0;
  int runs = 0;                      // mc only; 0 elsewhere
  std::uint64_t observations_hash = 0;  // 0 when no observation file is used
};

void write_manifest(const std::filesystem::path& path, const Scenario& s,
                    const ManifestInfo& info);

}  // namespace plume
