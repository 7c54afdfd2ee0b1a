#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "plume/assimilation.hpp"
#include "plume/puff.hpp"
#include "plume/sensors.hpp"
#include "plume/windfield.hpp"

namespace plume {

struct DomainSpec {
  double x_min = 0.0, y_min = 0.0;
  double x_max = 1000.0, y_max = 1000.0;
  double grid_cell_m = 500.0;

  GridSpec grid() const;
  void validate() const;
};

/// How the hidden "true" wind realization of a twin experiment is produced.
/// `bias` applies fixed offsets to every nominal reading; `sample` draws one
/// realization from the perturbation distribution.
struct TruthSpec {
  enum class Mode { bias, sample };
  Mode mode = Mode::bias;
  double direction_bias_deg = 10.0;
  double speed_bias_ms = 0.0;
  double observation_noise_sigma = 0.1;  // relative
};

struct TrialSpec {
  double duration_s = 12600.0;  // 3.5 hr
  double cadence_s = 900.0;     // 15 min assimilation windows
  double model_dt_s = 60.0;

  int window_count() const { return static_cast<int>(duration_s / cadence_s); }
  void validate() const;
};

struct FilterSpec {
  int particles = 100;
  double resample_threshold = 0.5;  // resample when ESS < threshold * N
  std::uint64_t master_seed = 1;
};

/// Constants converting kernel output (kg/m^3) to parts-per-trillion by
/// volume for an SF6-like tracer.
struct UnitsSpec {
  double tracer_molar_mass_g_mol = 146.055;  // SF6
  double air_molar_mass_g_mol = 28.9647;
  double air_density_kg_m3 = 1.225;

  double ppt_per_kgm3() const {
    return 1e12 * air_molar_mass_g_mol / (tracer_molar_mass_g_mol * air_density_kg_m3);
  }
};

struct MassConsistencySpec {
  int iterations = 50;
  double relaxation = 1.0;
};

/// Full experiment description, loaded from a JSON file. Relative file
/// references resolve against the scenario file's directory.
struct Scenario {
  DomainSpec domain;
  std::vector<ReleaseSpec> releases;
  DiffusionSpec diffusion;
  SamplerGeometryConfig samplers;
  std::filesystem::path wind_file;
  WindPerturbationSpec perturbation;
  MassConsistencySpec mass_consistency;
  LikelihoodSpec likelihood;
  ThresholdPolicy thresholds;
  TruthSpec truth;
  TrialSpec trial;
  FilterSpec filter;
  UnitsSpec units;
  std::set<int> train_lines = {1, 2};
  std::set<int> test_lines = {3};

  std::filesystem::path base_dir;  // directory of the scenario file
  std::uint64_t config_hash = 0;   // FNV-1a of the scenario file bytes

  void validate() const;
  SamplerArray build_samplers() const;
  TransportContext transport_context() const;
  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

Scenario load_scenario(const std::filesystem::path& path);

/// Writes the bundled trial setup (release geometry, sampler lines, station
/// layout, nominal wind readings) into `dir` as scenario.json + wind.csv and
/// returns the loaded scenario.
Scenario write_default_scenario(const std::filesystem::path& dir);

std::uint64_t fnv1a_file_hash(const std::filesystem::path& path);

}  // namespace plume
