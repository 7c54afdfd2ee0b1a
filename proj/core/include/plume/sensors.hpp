#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "plume/geometry.hpp"
#include "plume/puff.hpp"
#include "plume/rng.hpp"

namespace plume {

/// One sequential bag sampler. Bag b (1-based) integrates over the window
/// [delay + (b-1)*bag_seconds, delay + b*bag_seconds). Window indices are
/// global: window k covers [(k-1)*bag_seconds, k*bag_seconds) from trial
/// start, so a delayed line simply starts at a higher k.
struct Sampler {
  std::string id;
  int line = 0;
  Vec3 position;
  double delay_s = 0.0;
  int bag_count = 12;
  double bag_seconds = 900.0;

  int first_window() const { return static_cast<int>(delay_s / bag_seconds) + 1; }
  int last_window() const { return first_window() + bag_count - 1; }
  bool active_in_window(int k) const { return k >= first_window() && k <= last_window(); }
};

struct SamplerArray {
  std::vector<Sampler> samplers;

  const Sampler* find(const std::string& id) const;
  std::set<int> lines() const;
  /// Highest window index any sampler records.
  int max_window() const;
};

struct SamplerLineConfig {
  int line = 0;
  Vec2 anchor;             // first sampler position
  double heading_deg = 90.0;  // compass heading along the line (90 = +x)
  int count = 30;
  double spacing_m = 250.0;
  double delay_s = 0.0;
};

struct SamplerGeometryConfig {
  std::vector<SamplerLineConfig> lines;
  double z_m = 1.5;
  int bags = 12;
  double bag_seconds = 900.0;
  std::filesystem::path coordinates_file;  // optional explicit placement
};

enum class DoseKind { observed, predicted };

struct DoseRecord {
  std::string sampler_id;
  int line = 0;
  int window_k = 0;
  double dose_ppt_hr = 0.0;
  DoseKind kind = DoseKind::observed;
};

/// Dosage comparison thresholds: predictions below the floor are raised to
/// the floor; pairs whose observed value is below the cutoff are dropped.
struct ThresholdPolicy {
  double predicted_floor_ppt_hr = 1.0;
  double observed_cutoff_ppt_hr = 10.0;

  void validate() const;
};

struct DosePair {
  std::string sampler_id;
  int line = 0;
  int window_k = 0;
  double observed = 0.0;
  double predicted = 0.0;
};

/// Deterministic sampler placement from per-line configs (or an explicit
/// coordinates file when set). Throws on duplicate positions.
SamplerArray build_sampler_lines(const SamplerGeometryConfig& config);

/// Twin-experiment observation generator: integrates each sampler's truth
/// concentration series over its bag windows and applies multiplicative
/// Gaussian noise, dose' = max(0, dose * (1 + N(0, noise_sigma^2))).
/// series[i] must correspond to array.samplers[i].
std::vector<DoseRecord> observe(const std::vector<ConcentrationSeries>& series,
                                const SamplerArray& array, double noise_sigma,
                                RngStream& rng);

std::vector<DosePair> apply_thresholds(const std::vector<DosePair>& pairs,
                                       const ThresholdPolicy& policy);

/// Exact partition of records by sensor line. A record from a line in
/// neither set is an error.
void split_train_test(const std::vector<DoseRecord>& records,
                      const std::set<int>& train_lines,
                      const std::set<int>& test_lines,
                      std::vector<DoseRecord>& train,
                      std::vector<DoseRecord>& test);

std::vector<DoseRecord> load_dose_records(const std::filesystem::path& path);
void write_dose_records(const std::filesystem::path& path,
                        const std::vector<DoseRecord>& records);

/// Loads explicit sampler coordinates: `sampler_id,line,x_m,y_m,z_m`.
std::vector<Sampler> load_sampler_coordinates(const std::filesystem::path& path,
                                              int bags, double bag_seconds,
                                              const std::vector<SamplerLineConfig>& lines);

}  // namespace plume
