#include "plume/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "plume/errors.hpp"

using nlohmann::json;

namespace plume {

GridSpec DomainSpec::grid() const {
  GridSpec g;
  g.x0 = x_min;
  g.y0 = y_min;
  g.cell_m = grid_cell_m;
  g.nx = static_cast<int>(std::lround((x_max - x_min) / grid_cell_m));
  g.ny = static_cast<int>(std::lround((y_max - y_min) / grid_cell_m));
  return g;
}

void DomainSpec::validate() const {
  if (x_max <= x_min || y_max <= y_min) throw ConfigError("domain extents are empty");
  if (grid_cell_m <= 0.0) throw ConfigError("grid cell size must be > 0");
  const double fx = (x_max - x_min) / grid_cell_m;
  const double fy = (y_max - y_min) / grid_cell_m;
  if (std::abs(fx - std::lround(fx)) > 1e-9 || std::abs(fy - std::lround(fy)) > 1e-9) {
    throw ConfigError("grid cell size must divide the domain extents");
  }
  grid().validate();
}

void TrialSpec::validate() const {
  if (duration_s <= 0.0 || cadence_s <= 0.0 || model_dt_s <= 0.0) {
    throw ConfigError("trial durations must be > 0");
  }
  const double windows = duration_s / cadence_s;
  if (std::abs(windows - std::lround(windows)) > 1e-9) {
    throw ConfigError("assimilation cadence must divide the trial duration");
  }
  const double steps = cadence_s / model_dt_s;
  if (std::abs(steps - std::lround(steps)) > 1e-9) {
    throw ConfigError("model dt must divide the assimilation cadence");
  }
}

void Scenario::validate() const {
  domain.validate();
  trial.validate();
  diffusion.validate();
  perturbation.validate();
  thresholds.validate();
  likelihood.validate();
  if (releases.empty()) throw ConfigError("scenario has no releases");
  const GridSpec g = domain.grid();
  for (const auto& r : releases) {
    r.validate();
    if (!g.contains(r.position.xy())) {
      throw ConfigError("release position outside the domain");
    }
  }
  for (std::size_t i = 1; i < releases.size(); ++i) {
    if (releases[i].start_time_s < releases[i - 1].start_time_s) {
      throw ConfigError("releases must be listed in start-time order");
    }
  }
  if (wind_file.empty()) throw ConfigError("scenario has no wind observations file");
  if (filter.particles < 2) throw ConfigError("filter needs at least 2 particles");
  if (filter.resample_threshold < 0.0 || filter.resample_threshold > 1.0) {
    throw ConfigError("resample threshold must be in [0, 1]");
  }
  if (mass_consistency.iterations < 0) throw ConfigError("adjustment iterations must be >= 0");
  if (mass_consistency.relaxation <= 0.0 || mass_consistency.relaxation > 2.0) {
    throw ConfigError("adjustment relaxation must be in (0, 2]");
  }
  if (truth.observation_noise_sigma < 0.0) {
    throw ConfigError("observation noise sigma must be >= 0");
  }
  for (int line : train_lines) {
    if (test_lines.count(line)) {
      throw ConfigError("line " + std::to_string(line) + " appears in both splits");
    }
  }
  if (std::fmod(samplers.bag_seconds, trial.model_dt_s) != 0.0) {
    throw ConfigError("model dt must divide the bag window");
  }
  if (samplers.bag_seconds != trial.cadence_s) {
    throw ConfigError("bag windows must match the assimilation cadence");
  }
  const SamplerArray array = build_samplers();  // placement and overlap checks
  if (array.samplers.empty()) throw ConfigError("scenario has no samplers");
  for (const auto& sam : array.samplers) {
    if (!g.contains(sam.position.xy())) {
      throw ConfigError("sampler " + sam.id + " outside the domain");
    }
  }
  if (array.max_window() > trial.window_count()) {
    throw ConfigError("sampler bags extend past the end of the trial");
  }
  for (int line : array.lines()) {
    if (!train_lines.count(line) && !test_lines.count(line)) {
      throw ConfigError("line " + std::to_string(line) +
                        " belongs to neither the training nor the test split");
    }
  }
}

SamplerArray Scenario::build_samplers() const {
  SamplerGeometryConfig cfg = samplers;
  if (!cfg.coordinates_file.empty()) cfg.coordinates_file = resolve(cfg.coordinates_file);
  return build_sampler_lines(cfg);
}

TransportContext Scenario::transport_context() const {
  TransportContext ctx;
  ctx.grid = domain.grid();
  ctx.diffusion = diffusion;
  ctx.adjust_iterations = mass_consistency.iterations;
  ctx.adjust_relaxation = mass_consistency.relaxation;
  const SamplerArray array = build_samplers();
  ctx.receptors.reserve(array.samplers.size());
  for (const auto& s : array.samplers) ctx.receptors.push_back(s.position);
  ctx.releases = releases;
  ctx.model_dt_s = trial.model_dt_s;
  ctx.ppt_per_kgm3 = units.ppt_per_kgm3();
  return ctx;
}

std::filesystem::path Scenario::resolve(const std::filesystem::path& p) const {
  if (p.is_absolute()) return p;
  return base_dir / p;
}

namespace {

double num(const json& j, const std::string& key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) throw ConfigError("config key '" + key + "' must be a number");
  return j.at(key).get<double>();
}

double num_req(const json& j, const std::string& key, const std::string& section) {
  if (!j.contains(key)) {
    throw ConfigError("config section '" + section + "' is missing key '" + key + "'");
  }
  if (!j.at(key).is_number()) throw ConfigError("config key '" + key + "' must be a number");
  return j.at(key).get<double>();
}

}  // namespace

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file: " + path.string());
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }

  Scenario s;
  s.base_dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  s.config_hash = fnv1a_file_hash(path);

  try {
    const json& dom = root.at("domain");
    s.domain.x_min = num_req(dom, "x_min", "domain");
    s.domain.y_min = num_req(dom, "y_min", "domain");
    s.domain.x_max = num_req(dom, "x_max", "domain");
    s.domain.y_max = num_req(dom, "y_max", "domain");
    s.domain.grid_cell_m = num_req(dom, "grid_cell_m", "domain");

    s.releases.clear();
    for (const json& rel : root.at("releases")) {
      ReleaseSpec r;
      r.mass_kg = num_req(rel, "mass_kg", "releases");
      r.position = {num_req(rel, "x_m", "releases"), num_req(rel, "y_m", "releases"),
                    num_req(rel, "z_m", "releases")};
      r.start_time_s = num(rel, "start_time_s", 0.0);
      r.initial_sigma_m = num(rel, "initial_sigma_m", 10.0);
      s.releases.push_back(r);
    }

    if (root.contains("diffusion")) {
      const json& d = root.at("diffusion");
      s.diffusion.horizontal_coeff = num(d, "horizontal_coeff", s.diffusion.horizontal_coeff);
      s.diffusion.vertical_coeff = num(d, "vertical_coeff", s.diffusion.vertical_coeff);
      s.diffusion.sigma_z_cap_m = num(d, "sigma_z_cap_m", s.diffusion.sigma_z_cap_m);
    }

    const json& sam = root.at("samplers");
    s.samplers.z_m = num(sam, "z_m", 1.5);
    s.samplers.bags = static_cast<int>(num(sam, "bags", 12));
    s.samplers.bag_seconds = num(sam, "bag_seconds", 900.0);
    if (sam.contains("coordinates_file")) {
      s.samplers.coordinates_file = sam.at("coordinates_file").get<std::string>();
    }
    if (sam.contains("lines")) {
      for (const json& line : sam.at("lines")) {
        SamplerLineConfig lc;
        lc.line = static_cast<int>(num_req(line, "line", "samplers.lines"));
        lc.anchor = {num_req(line, "anchor_x_m", "samplers.lines"),
                     num_req(line, "anchor_y_m", "samplers.lines")};
        lc.heading_deg = num(line, "heading_deg", 90.0);
        lc.count = static_cast<int>(num(line, "count", 30));
        lc.spacing_m = num(line, "spacing_m", 250.0);
        lc.delay_s = num(line, "delay_s", 0.0);
        s.samplers.lines.push_back(lc);
      }
    }

    const json& wind = root.at("wind");
    s.wind_file = wind.at("observations_file").get<std::string>();
    if (wind.contains("perturbation")) {
      const json& p = wind.at("perturbation");
      s.perturbation.speed_sigma_ms = num(p, "speed_sigma_ms", 0.5);
      s.perturbation.direction_sigma_deg = num(p, "direction_sigma_deg", 5.0);
    }
    if (wind.contains("mass_consistency")) {
      const json& m = wind.at("mass_consistency");
      s.mass_consistency.iterations = static_cast<int>(num(m, "iterations", 50));
      s.mass_consistency.relaxation = num(m, "relaxation", 1.0);
    }

    if (root.contains("likelihood")) {
      const json& l = root.at("likelihood");
      const std::string mode = l.value("variance_mode", "pooled");
      if (mode == "pooled") s.likelihood.mode = LikelihoodSpec::VarianceMode::pooled;
      else if (mode == "per_sensor") s.likelihood.mode = LikelihoodSpec::VarianceMode::per_sensor;
      else if (mode == "fixed") s.likelihood.mode = LikelihoodSpec::VarianceMode::fixed;
      else throw ConfigError("unknown likelihood variance_mode: " + mode);
      s.likelihood.fixed_variance = num(l, "fixed_variance", 0.0);
      s.likelihood.variance_floor = num(l, "variance_floor", 1.0);
    }

    if (root.contains("thresholds")) {
      const json& t = root.at("thresholds");
      s.thresholds.predicted_floor_ppt_hr = num(t, "predicted_floor_ppt_hr", 1.0);
      s.thresholds.observed_cutoff_ppt_hr = num(t, "observed_cutoff_ppt_hr", 10.0);
    }

    if (root.contains("truth")) {
      const json& t = root.at("truth");
      const std::string mode = t.value("mode", "bias");
      if (mode == "bias") s.truth.mode = TruthSpec::Mode::bias;
      else if (mode == "sample") s.truth.mode = TruthSpec::Mode::sample;
      else throw ConfigError("unknown truth mode: " + mode);
      s.truth.direction_bias_deg = num(t, "direction_bias_deg", 10.0);
      s.truth.speed_bias_ms = num(t, "speed_bias_ms", 0.0);
      s.truth.observation_noise_sigma = num(t, "observation_noise_sigma", 0.1);
    }

    if (root.contains("trial")) {
      const json& t = root.at("trial");
      s.trial.duration_s = num(t, "duration_s", 12600.0);
      s.trial.cadence_s = num(t, "cadence_s", 900.0);
      s.trial.model_dt_s = num(t, "model_dt_s", 60.0);
    }

    if (root.contains("filter")) {
      const json& f = root.at("filter");
      s.filter.particles = static_cast<int>(num(f, "particles", 100));
      s.filter.resample_threshold = num(f, "resample_threshold", 0.5);
      s.filter.master_seed = static_cast<std::uint64_t>(num(f, "master_seed", 1));
    }

    if (root.contains("units")) {
      const json& u = root.at("units");
      s.units.tracer_molar_mass_g_mol = num(u, "tracer_molar_mass_g_mol", 146.055);
      s.units.air_molar_mass_g_mol = num(u, "air_molar_mass_g_mol", 28.9647);
      s.units.air_density_kg_m3 = num(u, "air_density_kg_m3", 1.225);
    }

    if (root.contains("split")) {
      const json& sp = root.at("split");
      s.train_lines.clear();
      s.test_lines.clear();
      for (const json& l : sp.at("train_lines")) s.train_lines.insert(l.get<int>());
      for (const json& l : sp.at("test_lines")) s.test_lines.insert(l.get<int>());
    }
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }

  s.validate();
  return s;
}

std::uint64_t fnv1a_file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file for hashing: " + path.string());
  std::uint64_t hash = 0xCBF29CE484222325ull;
  char c;
  while (in.get(c)) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 0x100000001B3ull;
  }
  return hash;
}

Scenario write_default_scenario(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);

  json root;
  root["domain"] = {{"x_min", 0.0},   {"y_min", 0.0}, {"x_max", 12000.0},
                    {"y_max", 14000.0}, {"grid_cell_m", 500.0}};
  root["releases"] = json::array({{{"mass_kg", 11.6},
                                   {"x_m", 6000.0},
                                   {"y_m", 12600.0},
                                   {"z_m", 6.0},
                                   {"start_time_s", 0.0},
                                   {"initial_sigma_m", 10.0}}});
  root["diffusion"] = {{"horizontal_coeff", 8.0},
                       {"vertical_coeff", 0.3},
                       {"sigma_z_cap_m", 500.0}};
  root["samplers"] = {
      {"z_m", 1.5},
      {"bags", 12},
      {"bag_seconds", 900.0},
      {"lines",
       json::array({{{"line", 1}, {"anchor_x_m", 2375.0}, {"anchor_y_m", 11100.0},
                     {"heading_deg", 90.0}, {"count", 30}, {"spacing_m", 250.0},
                     {"delay_s", 0.0}},
                    {{"line", 2}, {"anchor_x_m", 2375.0}, {"anchor_y_m", 9600.0},
                     {"heading_deg", 90.0}, {"count", 30}, {"spacing_m", 250.0},
                     {"delay_s", 0.0}},
                    {{"line", 3}, {"anchor_x_m", 2375.0}, {"anchor_y_m", 8100.0},
                     {"heading_deg", 90.0}, {"count", 30}, {"spacing_m", 250.0},
                     {"delay_s", 1800.0}}})}};
  root["wind"] = {{"observations_file", "wind.csv"},
                  {"perturbation", {{"speed_sigma_ms", 0.5}, {"direction_sigma_deg", 5.0}}},
                  {"mass_consistency", {{"iterations", 50}, {"relaxation", 1.0}}}};
  root["likelihood"] = {{"variance_mode", "pooled"}, {"variance_floor", 1.0}};
  root["thresholds"] = {{"predicted_floor_ppt_hr", 1.0}, {"observed_cutoff_ppt_hr", 10.0}};
  root["truth"] = {{"mode", "bias"},
                   {"direction_bias_deg", 10.0},
                   {"speed_bias_ms", 0.0},
                   {"observation_noise_sigma", 0.1}};
  root["trial"] = {{"duration_s", 12600.0}, {"cadence_s", 900.0}, {"model_dt_s", 60.0}};
  root["filter"] = {{"particles", 100}, {"resample_threshold", 0.5}, {"master_seed", 1}};
  root["units"] = {{"tracer_molar_mass_g_mol", 146.055},
                   {"air_molar_mass_g_mol", 28.9647},
                   {"air_density_kg_m3", 1.225}};
  root["split"] = {{"train_lines", {1, 2}}, {"test_lines", {3}}};

  {
    std::ofstream out(dir / "scenario.json");
    if (!out) throw ConfigError("cannot write " + (dir / "scenario.json").string());
    out << root.dump(2) << "\n";
  }

  // Nominal MEDA-style readings: eight stations at 15-min cadence, wind from
  // the north with mild station-to-station and epoch-to-epoch variety. Four
  // stations track the release-to-line corridor, four sit on the periphery.
  const Vec3 stations[8] = {{5800, 11800, 10}, {6200, 10300, 10}, {5800, 8800, 10},
                            {6200, 7300, 10},  {2000, 12500, 10}, {10000, 11500, 10},
                            {2500, 5000, 10},  {9500, 4000, 10}};
  std::vector<WindObservation> obs;
  for (int epoch = 0; epoch <= 14; ++epoch) {
    for (int st = 0; st < 8; ++st) {
      WindObservation o;
      o.station_id = "MEDA" + std::to_string(st + 1);
      o.position = stations[st];
      o.time_s = epoch * 900.0;
      o.speed_ms = 1.5 + 0.1 * std::sin(1.7 * st + 0.6 * epoch);
      o.dir_deg = normalize_direction_deg(2.0 * std::sin(2.3 * st + 0.4 * epoch));
      obs.push_back(std::move(o));
    }
  }
  write_wind_observations(dir / "wind.csv", obs);

  return load_scenario(dir / "scenario.json");
}

}  // namespace plume
