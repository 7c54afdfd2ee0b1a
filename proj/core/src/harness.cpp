#include "plume/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <utility>

#include "json.hpp"
#include "plume/csv.hpp"
#include "plume/errors.hpp"
#include "plume/parallel.hpp"
#include "plume/version.hpp"

namespace plume {

namespace {

// Monte Carlo run seeds live far above the per-particle stream ids and clear
// of the reserved singleton streams.
constexpr std::uint64_t kMonteCarloRunStream = 0xFFFFFFFF00000100ull;

void append_window_records(const SamplerArray& array, int window_k,
                           const std::vector<double>& doses,
                           std::vector<DoseRecord>& out) {
  for (std::size_t i = 0; i < array.samplers.size(); ++i) {
    const Sampler& sam = array.samplers[i];
    if (!sam.active_in_window(window_k)) continue;
    out.push_back({sam.id, sam.line, window_k, doses[i], DoseKind::predicted});
  }
}

// FAC2/FAC3 are fractions internally but every file renders percentages.
double rendered(const std::string& metric, double value) {
  return metric.rfind("FAC", 0) == 0 ? value * 100.0 : value;
}

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::vector<WindObservation> load_nominal_wind(const Scenario& s) {
  std::vector<WindObservation> obs = load_wind_observations(s.resolve(s.wind_file));
  if (obs.empty()) throw ConfigError("wind file has no observations");
  const GridSpec grid = s.domain.grid();
  for (const auto& o : obs) {
    if (!grid.contains(o.position.xy())) {
      throw ConfigError("wind station " + o.station_id + " outside the domain");
    }
  }
  if (observation_epochs(obs).front() > 0.0) {
    throw ConfigError("wind observations start after the trial does");
  }
  return obs;
}

RunResult run_forecast(const Scenario& s, const std::vector<WindObservation>& nominal) {
  const TransportContext ctx = s.transport_context();
  const SamplerArray array = s.build_samplers();
  std::vector<Puff> puffs;
  std::vector<ConcentrationSeries> series;
  RunResult result;
  for (int k = 1; k <= s.trial.window_count(); ++k) {
    const double t0 = (k - 1) * s.trial.cadence_s;
    const double t1 = k * s.trial.cadence_s;
    advance_window(puffs, observations_at(nominal, t0), ctx, t0, t1, series);
    append_window_records(array, k, window_doses(series, t0, t1), result.doses);
  }
  return result;
}

TruthRun generate_twin_truth(const Scenario& s, std::uint64_t truth_seed) {
  const std::vector<WindObservation> nominal = load_nominal_wind(s);
  TruthRun out;
  if (s.truth.mode == TruthSpec::Mode::bias) {
    out.truth_wind = nominal;
    for (auto& o : out.truth_wind) {
      o.speed_ms = std::max(0.0, o.speed_ms + s.truth.speed_bias_ms);
      o.dir_deg = normalize_direction_deg(o.dir_deg + s.truth.direction_bias_deg);
    }
  } else {
    RngStream wind_rng(truth_seed, kTruthWindStream);
    out.truth_wind = perturb_observations(nominal, s.perturbation, wind_rng);
  }

  const TransportContext ctx = s.transport_context();
  const SamplerArray array = s.build_samplers();
  std::vector<Puff> puffs;
  std::vector<ConcentrationSeries> series;
  for (int k = 1; k <= s.trial.window_count(); ++k) {
    const double t0 = (k - 1) * s.trial.cadence_s;
    advance_window(puffs, observations_at(out.truth_wind, t0), ctx, t0,
                   k * s.trial.cadence_s, series);
  }
  RngStream noise_rng(truth_seed, kObservationNoiseStream);
  out.observed = observe(series, array, s.truth.observation_noise_sigma, noise_rng);
  return out;
}

RunResult run_assimilation(const Scenario& s, const std::vector<WindObservation>& nominal,
                           const std::vector<DoseRecord>& observed,
                           std::uint64_t master_seed, unsigned threads) {
  const TransportContext ctx = s.transport_context();
  const SamplerArray array = s.build_samplers();

  for (const auto& rec : observed) {
    const Sampler* sam = array.find(rec.sampler_id);
    if (sam == nullptr) {
      throw ConfigError("observation for unknown sampler " + rec.sampler_id);
    }
    if (!sam->active_in_window(rec.window_k)) {
      throw ConfigError("observation for sampler " + rec.sampler_id +
                        " falls outside its recording span (window " +
                        std::to_string(rec.window_k) + ")");
    }
  }
  std::vector<DoseRecord> train_obs;
  std::vector<DoseRecord> test_obs;
  split_train_test(observed, s.train_lines, s.test_lines, train_obs, test_obs);

  Ensemble ens = init_ensemble(s.filter.particles, ctx, master_seed);
  RunResult result;
  for (int k = 1; k <= s.trial.window_count(); ++k) {
    const double t0 = (k - 1) * s.trial.cadence_s;
    const ObservationBatch batch = make_observation_batch(train_obs, array, s.train_lines, k);
    CycleResult cr = run_cycle(ens, observations_at(nominal, t0), batch, s.perturbation,
                               s.likelihood, s.thresholds, s.trial.cadence_s, ctx,
                               s.filter.resample_threshold, threads);
    cr.diagnostics.window_k = k;
    append_window_records(array, k, cr.estimates_ppt_hr, result.doses);
    result.diagnostics.push_back(cr.diagnostics);
  }
  return result;
}

std::vector<DosePair> pair_doses(const std::vector<DoseRecord>& observed,
                                 const std::vector<DoseRecord>& predicted,
                                 const std::set<int>& lines,
                                 const ThresholdPolicy& policy) {
  std::map<std::pair<std::string, int>, const DoseRecord*> by_key;
  for (const auto& p : predicted) by_key[{p.sampler_id, p.window_k}] = &p;

  std::vector<DosePair> joined;
  for (const auto& o : observed) {
    if (lines.count(o.line) == 0) continue;
    const auto it = by_key.find({o.sampler_id, o.window_k});
    if (it == by_key.end()) continue;
    if (it->second->line != o.line) {
      throw ConfigError("sampler " + o.sampler_id + " has conflicting line assignments");
    }
    joined.push_back({o.sampler_id, o.line, o.window_k, o.dose_ppt_hr,
                      it->second->dose_ppt_hr});
  }
  return apply_thresholds(joined, policy);
}

std::vector<PairedSample> to_samples(const std::vector<DosePair>& pairs) {
  std::vector<PairedSample> samples;
  samples.reserve(pairs.size());
  for (const auto& p : pairs) samples.push_back({p.observed, p.predicted});
  return samples;
}

MonteCarloResult run_monte_carlo(const Scenario& s, int runs,
                                 const std::vector<WindObservation>& nominal,
                                 const std::vector<DoseRecord>& observed,
                                 std::uint64_t master_seed, unsigned threads) {
  if (runs < 2) throw ConfigError("mc needs at least 2 runs");

  MonteCarloResult out;
  const RunResult forecast = run_forecast(s, nominal);
  out.forecast_test = compute_metrics(
      to_samples(pair_doses(observed, forecast.doses, s.test_lines, s.thresholds)));

  out.runs.assign(static_cast<std::size_t>(runs), {});
  parallel_for(static_cast<std::size_t>(runs), threads, [&](std::size_t r) {
    const std::uint64_t seed = derive_seed(master_seed, kMonteCarloRunStream + r);
    const RunResult pf = run_assimilation(s, nominal, observed, seed, 1);
    out.runs[r].seed = seed;
    out.runs[r].test = compute_metrics(
        to_samples(pair_doses(observed, pf.doses, s.test_lines, s.thresholds)));
  });

  for (const std::string& name : metric_names()) {
    std::vector<double> samples;
    samples.reserve(out.runs.size());
    for (const auto& run : out.runs) samples.push_back(metric_value(run.test, name));
    out.mean.push_back(std::accumulate(samples.begin(), samples.end(), 0.0) /
                       static_cast<double>(samples.size()));
    out.ci.push_back(confidence_interval(name, samples));
  }
  return out;
}

double forecast_replicate_divergence(const Scenario& s,
                                     const std::vector<WindObservation>& nominal) {
  const RunResult forecast = run_forecast(s, nominal);
  const TransportContext ctx = s.transport_context();
  const SamplerArray array = s.build_samplers();

  WindPerturbationSpec zero;
  zero.speed_sigma_ms = 0.0;
  zero.direction_sigma_deg = 0.0;

  // The smallest ensemble stands in for the single replicate; with zero
  // perturbation and no weighting its members stay identical to the
  // forecast trajectory.
  Ensemble ens = init_ensemble(2, ctx, s.filter.master_seed);
  std::vector<DoseRecord> doses;
  for (int k = 1; k <= s.trial.window_count(); ++k) {
    const double t0 = (k - 1) * s.trial.cadence_s;
    propagate(ens, observations_at(nominal, t0), zero, s.trial.cadence_s, ctx, 1);
    append_window_records(array, k, ens.particles[0].window_dose_ppt_hr, doses);
    ens.cycle += 1;
  }

  if (doses.size() != forecast.doses.size()) {
    throw std::runtime_error("replicate self-test produced a different record count");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < doses.size(); ++i) {
    const double a = forecast.doses[i].dose_ppt_hr;
    const double b = doses[i].dose_ppt_hr;
    const double denom = std::max(std::abs(a), std::abs(b));
    if (denom > 0.0) worst = std::max(worst, std::abs(a - b) / denom);
  }
  return worst;
}

void write_diagnostics_csv(const std::filesystem::path& path,
                           const std::vector<CycleDiagnostics>& diags) {
  csv::Writer w(path, "window_k,ess,resampled,underflow,min_weight,max_weight");
  for (const auto& d : diags) {
    w.row({std::to_string(d.window_k), csv::format_double(d.ess),
           d.resampled ? "1" : "0", d.underflow ? "1" : "0",
           csv::format_double(d.min_weight), csv::format_double(d.max_weight)});
  }
}

void write_scatter_csv(const std::filesystem::path& path,
                       const std::vector<DosePair>& process_model,
                       const std::vector<DosePair>& particle_filter) {
  csv::Writer w(path,
                "sampler_id,line,window_k,observed_ppt_hr,predicted_ppt_hr,source");
  for (const auto& p : process_model) {
    w.row({p.sampler_id, std::to_string(p.line), std::to_string(p.window_k),
           csv::format_double(p.observed), csv::format_double(p.predicted),
           "process_model"});
  }
  for (const auto& p : particle_filter) {
    w.row({p.sampler_id, std::to_string(p.line), std::to_string(p.window_k),
           csv::format_double(p.observed), csv::format_double(p.predicted),
           "particle_filter"});
  }
}

void write_metrics_csv(const std::filesystem::path& path,
                       const MetricReport& forecast_train, const MetricReport& forecast_test,
                       const MetricReport& pf_train, const MetricReport& pf_test) {
  csv::Writer w(path,
                "metric,process_model_train,process_model_test,"
                "particle_filter_train,particle_filter_test");
  for (const std::string& name : metric_names()) {
    w.row({name, csv::format_double(rendered(name, metric_value(forecast_train, name))),
           csv::format_double(rendered(name, metric_value(forecast_test, name))),
           csv::format_double(rendered(name, metric_value(pf_train, name))),
           csv::format_double(rendered(name, metric_value(pf_test, name)))});
  }
}

void write_report_csv(const std::filesystem::path& path, const MonteCarloResult& mc) {
  csv::Writer w(path, "metric,process_model,particle_filter,ci_lower,ci_upper");
  const auto& names = metric_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const std::string& name = names[i];
    w.row({name, csv::format_double(rendered(name, metric_value(mc.forecast_test, name))),
           csv::format_double(rendered(name, mc.mean[i])),
           csv::format_double(rendered(name, mc.ci[i].lower)),
           csv::format_double(rendered(name, mc.ci[i].upper))});
  }
}

void write_runs_csv(const std::filesystem::path& path, const MonteCarloResult& mc) {
  csv::Writer w(path, "run,seed,FB,MG,NMSE,VG,FAC2,FAC3");
  for (std::size_t r = 0; r < mc.runs.size(); ++r) {
    const MetricReport& m = mc.runs[r].test;
    w.row({std::to_string(r + 1), std::to_string(mc.runs[r].seed),
           csv::format_double(m.fb), csv::format_double(m.mg),
           csv::format_double(m.nmse), csv::format_double(m.vg),
           csv::format_double(m.fac2 * 100.0), csv::format_double(m.fac3 * 100.0)});
  }
}

void write_manifest(const std::filesystem::path& path, const Scenario& s,
                    const ManifestInfo& info) {
  nlohmann::ordered_json m;
  m["tool"] = "plume";
  m["version"] = kVersion;
  m["command"] = info.command;
  m["scenario_hash"] = hex64(s.config_hash);
  if (info.observations_hash != 0) m["observations_hash"] = hex64(info.observations_hash);
  m["master_seed"] = info.master_seed;
  if (info.particles > 0) m["particles"] = info.particles;
  if (info.runs > 0) m["runs"] = info.runs;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << m.dump(2) << "\n";
}

}  // namespace plume
