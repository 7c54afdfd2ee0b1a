#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "plume/errors.hpp"
#include "plume/harness.hpp"
#include "plume/scenario.hpp"
#include "plume/version.hpp"

namespace fs = std::filesystem;

namespace {

void print_metric(const std::string& name, double value) {
  if (name.rfind("FAC", 0) == 0) {
    std::printf("  %-5s %12.4f %%\n", name.c_str(), value * 100.0);
  } else {
    std::printf("  %-5s %12.4f\n", name.c_str(), value);
  }
}

void print_metric_pair(const std::string& name, double a, double b) {
  const double scale = name.rfind("FAC", 0) == 0 ? 100.0 : 1.0;
  std::printf("  %-5s %12.4f  %12.4f\n", name.c_str(), a * scale, b * scale);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-puff dispersion with bootstrap particle-filter assimilation"};
  app.set_version_flag("--version", std::string("plume ") + plume::kVersion);
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  int particles = 0;
  std::string out_dir = "out";
  unsigned threads = 1;
  auto* seed_opt = app.add_option("--seed", seed, "Master seed (default: the scenario's)");
  auto* particles_opt =
      app.add_option("--particles", particles, "Ensemble size override (>= 2)");
  app.add_option("--out-dir", out_dir, "Output directory (default: out)");
  app.add_option("--threads", threads, "Worker threads (default: 1)");

  std::string scenario_path;
  std::string observations_path;
  std::string observed_path;
  std::string predicted_path;
  std::vector<int> line_filter;
  plume::ThresholdPolicy eval_policy;
  int runs = 50;

  auto* cmd_validate =
      app.add_subcommand("validate", "Check a scenario file and its referenced data");
  cmd_validate->add_option("scenario", scenario_path, "Scenario JSON file")
      ->required()
      ->check(CLI::ExistingFile);

  auto* cmd_forecast =
      app.add_subcommand("forecast", "Run the process model under nominal winds");
  cmd_forecast->add_option("scenario", scenario_path, "Scenario JSON file")
      ->required()
      ->check(CLI::ExistingFile);

  auto* cmd_truth = app.add_subcommand(
      "truth", "Generate a hidden truth wind and noisy twin-experiment observations");
  cmd_truth->add_option("scenario", scenario_path, "Scenario JSON file")
      ->required()
      ->check(CLI::ExistingFile);

  auto* cmd_assimilate =
      app.add_subcommand("assimilate", "Run the particle filter against observations");
  cmd_assimilate->add_option("scenario", scenario_path, "Scenario JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_assimilate->add_option("observations", observations_path, "Observed dose CSV")
      ->required()
      ->check(CLI::ExistingFile);

  auto* cmd_mc = app.add_subcommand(
      "mc", "Monte Carlo batch of filter runs with aggregated test metrics");
  cmd_mc->add_option("scenario", scenario_path, "Scenario JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_mc->add_option("observations", observations_path, "Observed dose CSV")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_mc->add_option("--runs", runs, "Independent filter runs (default: 50)");

  auto* cmd_evaluate =
      app.add_subcommand("evaluate", "Compute the six metrics over two dose CSV files");
  cmd_evaluate->add_option("observed", observed_path, "Observed dose CSV")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_evaluate->add_option("predicted", predicted_path, "Predicted dose CSV")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_evaluate->add_option("--lines", line_filter, "Restrict to these sensor lines");
  cmd_evaluate->add_option("--floor", eval_policy.predicted_floor_ppt_hr,
                           "Predicted floor, ppt-hr (default: 1)");
  cmd_evaluate->add_option("--cutoff", eval_policy.observed_cutoff_ppt_hr,
                           "Observed cutoff, ppt-hr (default: 10)");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (threads == 0) throw plume::ConfigError("--threads must be >= 1");

    auto load = [&]() {
      plume::Scenario s = plume::load_scenario(scenario_path);
      if (particles_opt->count() > 0) {
        if (particles < 2) throw plume::ConfigError("--particles must be at least 2");
        s.filter.particles = particles;
      }
      return s;
    };
    auto effective_seed = [&](const plume::Scenario& s) {
      return seed_opt->count() > 0 ? seed : s.filter.master_seed;
    };
    auto out_path = [&]() {
      fs::create_directories(out_dir);
      return fs::path(out_dir);
    };

    if (app.got_subcommand(cmd_validate)) {
      const plume::Scenario s = load();
      const auto nominal = plume::load_nominal_wind(s);
      const auto array = s.build_samplers();
      std::printf("ok: %s\n", scenario_path.c_str());
      std::printf("  samplers: %zu on %zu lines\n", array.samplers.size(),
                  array.lines().size());
      std::printf("  trial: %d windows x %.0f s\n", s.trial.window_count(),
                  s.trial.cadence_s);
      std::printf("  wind: %zu stations, %zu epochs\n",
                  plume::observations_at(nominal, 0.0).size(),
                  plume::observation_epochs(nominal).size());
      std::printf("  filter: %d particles, master seed %llu\n", s.filter.particles,
                  static_cast<unsigned long long>(s.filter.master_seed));
      return 0;
    }

    if (app.got_subcommand(cmd_forecast)) {
      const plume::Scenario s = load();
      const auto nominal = plume::load_nominal_wind(s);
      const plume::RunResult result = plume::run_forecast(s, nominal);
      const fs::path out = out_path();
      plume::write_dose_records(out / "forecast.csv", result.doses);
      plume::ManifestInfo info;
      info.command = "forecast";
      info.master_seed = effective_seed(s);
      plume::write_manifest(out / "manifest.json", s, info);
      std::printf("forecast: %zu dose records -> %s\n", result.doses.size(),
                  (out / "forecast.csv").c_str());
      return 0;
    }

    if (app.got_subcommand(cmd_truth)) {
      const plume::Scenario s = load();
      const std::uint64_t use_seed = effective_seed(s);
      const plume::TruthRun truth = plume::generate_twin_truth(s, use_seed);
      const fs::path out = out_path();
      plume::write_dose_records(out / "observations.csv", truth.observed);
      plume::write_wind_observations(out / "truth_wind.csv", truth.truth_wind);
      plume::ManifestInfo info;
      info.command = "truth";
      info.master_seed = use_seed;
      plume::write_manifest(out / "manifest.json", s, info);
      std::printf("truth: %zu observations -> %s\n", truth.observed.size(),
                  (out / "observations.csv").c_str());
      return 0;
    }

    if (app.got_subcommand(cmd_assimilate)) {
      const plume::Scenario s = load();
      const auto nominal = plume::load_nominal_wind(s);
      const auto observed = plume::load_dose_records(observations_path);
      const std::uint64_t use_seed = effective_seed(s);

      const plume::RunResult forecast = plume::run_forecast(s, nominal);
      const plume::RunResult pf =
          plume::run_assimilation(s, nominal, observed, use_seed, threads);

      const fs::path out = out_path();
      plume::write_dose_records(out / "forecast.csv", forecast.doses);
      plume::write_dose_records(out / "estimates.csv", pf.doses);
      plume::write_diagnostics_csv(out / "diagnostics.csv", pf.diagnostics);

      const auto fc_train =
          plume::pair_doses(observed, forecast.doses, s.train_lines, s.thresholds);
      const auto fc_test =
          plume::pair_doses(observed, forecast.doses, s.test_lines, s.thresholds);
      const auto pf_train =
          plume::pair_doses(observed, pf.doses, s.train_lines, s.thresholds);
      const auto pf_test = plume::pair_doses(observed, pf.doses, s.test_lines, s.thresholds);
      const auto m_fc_train = plume::compute_metrics(plume::to_samples(fc_train));
      const auto m_fc_test = plume::compute_metrics(plume::to_samples(fc_test));
      const auto m_pf_train = plume::compute_metrics(plume::to_samples(pf_train));
      const auto m_pf_test = plume::compute_metrics(plume::to_samples(pf_test));
      plume::write_metrics_csv(out / "metrics.csv", m_fc_train, m_fc_test, m_pf_train,
                               m_pf_test);

      std::set<int> all_lines = s.train_lines;
      all_lines.insert(s.test_lines.begin(), s.test_lines.end());
      plume::write_scatter_csv(
          out / "scatter.csv",
          plume::pair_doses(observed, forecast.doses, all_lines, s.thresholds),
          plume::pair_doses(observed, pf.doses, all_lines, s.thresholds));

      plume::ManifestInfo info;
      info.command = "assimilate";
      info.master_seed = use_seed;
      info.particles = s.filter.particles;
      info.observations_hash = plume::fnv1a_file_hash(observations_path);
      plume::write_manifest(out / "manifest.json", s, info);

      std::printf("assimilate: %d particles, %d windows -> %s\n", s.filter.particles,
                  s.trial.window_count(), out.c_str());
      std::printf("test-split metrics (process model, particle filter), n=%d:\n",
                  m_pf_test.n);
      for (const std::string& name : plume::metric_names()) {
        print_metric_pair(name, plume::metric_value(m_fc_test, name),
                          plume::metric_value(m_pf_test, name));
      }
      return 0;
    }

    if (app.got_subcommand(cmd_mc)) {
      const plume::Scenario s = load();
      const auto nominal = plume::load_nominal_wind(s);
      const auto observed = plume::load_dose_records(observations_path);
      const std::uint64_t use_seed = effective_seed(s);

      const plume::MonteCarloResult mc =
          plume::run_monte_carlo(s, runs, nominal, observed, use_seed, threads);

      const fs::path out = out_path();
      plume::write_report_csv(out / "report.csv", mc);
      plume::write_runs_csv(out / "runs.csv", mc);
      plume::ManifestInfo info;
      info.command = "mc";
      info.master_seed = use_seed;
      info.particles = s.filter.particles;
      info.runs = runs;
      info.observations_hash = plume::fnv1a_file_hash(observations_path);
      plume::write_manifest(out / "manifest.json", s, info);

      std::printf("mc: %d runs, %d particles -> %s\n", runs, s.filter.particles,
                  (out / "report.csv").c_str());
      std::printf("test-split means (process model, particle filter):\n");
      const auto& names = plume::metric_names();
      for (std::size_t i = 0; i < names.size(); ++i) {
        print_metric_pair(names[i], plume::metric_value(mc.forecast_test, names[i]),
                          mc.mean[i]);
      }
      return 0;
    }

    if (app.got_subcommand(cmd_evaluate)) {
      eval_policy.validate();
      const auto observed = plume::load_dose_records(observed_path);
      const auto predicted = plume::load_dose_records(predicted_path);
      std::set<int> lines(line_filter.begin(), line_filter.end());
      if (lines.empty()) {
        for (const auto& r : observed) lines.insert(r.line);
      }
      const auto pairs = plume::pair_doses(observed, predicted, lines, eval_policy);
      const plume::MetricReport report = plume::compute_metrics(plume::to_samples(pairs));
      std::printf("pairs: %d\n", report.n);
      for (const std::string& name : plume::metric_names()) {
        print_metric(name, plume::metric_value(report, name));
      }
      return 0;
    }
  } catch (const plume::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
