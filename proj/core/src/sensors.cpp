#include "plume/sensors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "plume/csv.hpp"
#include "plume/errors.hpp"

namespace plume {

void ThresholdPolicy::validate() const {
  if (predicted_floor_ppt_hr <= 0.0) throw ConfigError("predicted floor must be > 0");
  if (observed_cutoff_ppt_hr <= predicted_floor_ppt_hr) {
    throw ConfigError("observed cutoff must exceed the predicted floor");
  }
}

const Sampler* SamplerArray::find(const std::string& id) const {
  for (const auto& s : samplers) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

std::set<int> SamplerArray::lines() const {
  std::set<int> out;
  for (const auto& s : samplers) out.insert(s.line);
  return out;
}

int SamplerArray::max_window() const {
  int k = 0;
  for (const auto& s : samplers) k = std::max(k, s.last_window());
  return k;
}

namespace {

std::string sampler_id(int line, int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "L%dS%02d", line, index);
  return buf;
}

void check_no_overlap(const std::vector<Sampler>& samplers) {
  for (std::size_t a = 0; a < samplers.size(); ++a) {
    for (std::size_t b = a + 1; b < samplers.size(); ++b) {
      const double dx = samplers[a].position.x - samplers[b].position.x;
      const double dy = samplers[a].position.y - samplers[b].position.y;
      if (std::hypot(dx, dy) < 1e-6) {
        throw ConfigError("samplers " + samplers[a].id + " and " + samplers[b].id +
                          " overlap");
      }
    }
  }
}

}  // namespace

SamplerArray build_sampler_lines(const SamplerGeometryConfig& config) {
  if (config.bags < 1) throw ConfigError("bag count must be >= 1");
  if (config.bag_seconds <= 0.0) throw ConfigError("bag window must be > 0 s");

  SamplerArray array;
  if (!config.coordinates_file.empty()) {
    array.samplers = load_sampler_coordinates(config.coordinates_file, config.bags,
                                              config.bag_seconds, config.lines);
  } else {
    if (config.lines.empty()) throw ConfigError("no sampler lines configured");
    for (const auto& line : config.lines) {
      if (line.count < 1) throw ConfigError("sampler line count must be >= 1");
      if (std::fmod(line.delay_s, config.bag_seconds) != 0.0) {
        throw ConfigError("line delay must be a multiple of the bag window");
      }
      const double rad = line.heading_deg * kDegToRad;
      const Vec2 step{std::sin(rad) * line.spacing_m, std::cos(rad) * line.spacing_m};
      for (int i = 0; i < line.count; ++i) {
        Sampler s;
        s.id = sampler_id(line.line, i + 1);
        s.line = line.line;
        s.position = {line.anchor.x + step.x * i, line.anchor.y + step.y * i,
                      config.z_m};
        s.delay_s = line.delay_s;
        s.bag_count = config.bags;
        s.bag_seconds = config.bag_seconds;
        array.samplers.push_back(std::move(s));
      }
    }
  }
  check_no_overlap(array.samplers);
  return array;
}

std::vector<DoseRecord> observe(const std::vector<ConcentrationSeries>& series,
                                const SamplerArray& array, double noise_sigma,
                                RngStream& rng) {
  if (series.size() != array.samplers.size()) {
    throw ConfigError("concentration series count does not match sampler count");
  }
  if (noise_sigma < 0.0) throw ConfigError("observation noise sigma must be >= 0");
  std::vector<DoseRecord> records;
  for (std::size_t i = 0; i < array.samplers.size(); ++i) {
    const Sampler& s = array.samplers[i];
    for (int b = 0; b < s.bag_count; ++b) {
      const double start = s.delay_s + b * s.bag_seconds;
      const double end = start + s.bag_seconds;
      double dose = accumulate_dose(series[i], start, end);
      dose = std::max(0.0, dose * (1.0 + rng.normal(0.0, noise_sigma)));
      DoseRecord r;
      r.sampler_id = s.id;
      r.line = s.line;
      r.window_k = s.first_window() + b;
      r.dose_ppt_hr = dose;
      r.kind = DoseKind::observed;
      records.push_back(std::move(r));
    }
  }
  return records;
}

std::vector<DosePair> apply_thresholds(const std::vector<DosePair>& pairs,
                                       const ThresholdPolicy& policy) {
  policy.validate();
  std::vector<DosePair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.observed < policy.observed_cutoff_ppt_hr) continue;
    DosePair kept = p;
    kept.predicted = std::max(kept.predicted, policy.predicted_floor_ppt_hr);
    out.push_back(std::move(kept));
  }
  return out;
}

void split_train_test(const std::vector<DoseRecord>& records,
                      const std::set<int>& train_lines,
                      const std::set<int>& test_lines,
                      std::vector<DoseRecord>& train,
                      std::vector<DoseRecord>& test) {
  train.clear();
  test.clear();
  for (const auto& r : records) {
    if (train_lines.count(r.line)) {
      train.push_back(r);
    } else if (test_lines.count(r.line)) {
      test.push_back(r);
    } else {
      throw ConfigError("record from unknown sensor line " + std::to_string(r.line));
    }
  }
}

static const std::string kDoseHeader = "sampler_id,line,window_k,dose_ppt_hr";

std::vector<DoseRecord> load_dose_records(const std::filesystem::path& path) {
  const auto rows = csv::read_file(path, kDoseHeader);
  std::vector<DoseRecord> records;
  records.reserve(rows.size());
  for (const auto& row : rows) {
    DoseRecord r;
    r.sampler_id = row.fields[0];
    r.line = csv::parse_int(row, 1, path);
    r.window_k = csv::parse_int(row, 2, path);
    r.dose_ppt_hr = csv::parse_double(row, 3, path);
    if (r.dose_ppt_hr < 0.0) {
      throw ConfigError(path.string() + ":" + std::to_string(row.line_number) +
                        ": negative dosage");
    }
    records.push_back(std::move(r));
  }
  return records;
}

void write_dose_records(const std::filesystem::path& path,
                        const std::vector<DoseRecord>& records) {
  csv::Writer w(path, kDoseHeader);
  for (const auto& r : records) {
    w.row({r.sampler_id, std::to_string(r.line), std::to_string(r.window_k),
           csv::format_double(r.dose_ppt_hr)});
  }
}

std::vector<Sampler> load_sampler_coordinates(
    const std::filesystem::path& path, int bags, double bag_seconds,
    const std::vector<SamplerLineConfig>& lines) {
  std::map<int, double> line_delay;
  for (const auto& l : lines) line_delay[l.line] = l.delay_s;

  const auto rows = csv::read_file(path, "sampler_id,line,x_m,y_m,z_m");
  std::vector<Sampler> samplers;
  for (const auto& row : rows) {
    Sampler s;
    s.id = row.fields[0];
    s.line = csv::parse_int(row, 1, path);
    s.position = {csv::parse_double(row, 2, path), csv::parse_double(row, 3, path),
                  csv::parse_double(row, 4, path)};
    auto it = line_delay.find(s.line);
    s.delay_s = it != line_delay.end() ? it->second : 0.0;
    s.bag_count = bags;
    s.bag_seconds = bag_seconds;
    samplers.push_back(std::move(s));
  }
  if (samplers.empty()) throw ConfigError(path.string() + ": no samplers");
  return samplers;
}

}  // namespace plume
