// Sampler and dosage handling tests: line geometry construction, global
// window indexing for delayed lines, bagged observation generation with
// multiplicative noise, the comparison threshold rules, the train/test
// line split, and the dose record file round trip.

#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "plume/errors.hpp"
#include "plume/sensors.hpp"

using namespace plume;
namespace fs = std::filesystem;

namespace {

SamplerGeometryConfig three_line_config() {
  SamplerGeometryConfig cfg;
  cfg.z_m = 1.5;
  cfg.bags = 12;
  cfg.bag_seconds = 900.0;
  cfg.lines = {
      {1, {0.0, 10000.0}, 90.0, 30, 250.0, 0.0},
      {2, {0.0, 7000.0}, 90.0, 30, 250.0, 0.0},
      {3, {0.0, 4000.0}, 90.0, 30, 250.0, 1800.0},
  };
  return cfg;
}

ConcentrationSeries constant_series(double t0, double dt, int n, double value) {
  return {t0, dt, std::vector<double>(static_cast<std::size_t>(n), value)};
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("line geometry: heading 90 walks +x, 30 samplers span 7250 m") {
  auto array = build_sampler_lines(three_line_config());
  REQUIRE(array.samplers.size() == 90);
  CHECK(array.lines() == std::set<int>{1, 2, 3});

  const Sampler* first = array.find("L1S01");
  const Sampler* last = array.find("L1S30");
  REQUIRE(first != nullptr);
  REQUIRE(last != nullptr);
  CHECK(first->position.x == doctest::Approx(0.0));
  CHECK(last->position.x == doctest::Approx(7250.0));  // (30 - 1) * 250
  CHECK(last->position.y == doctest::Approx(10000.0));
  CHECK(first->position.z == doctest::Approx(1.5));

  CHECK(array.find("L9S01") == nullptr);
}

TEST_CASE("global window indices: a delayed line starts at a higher k") {
  auto array = build_sampler_lines(three_line_config());
  const Sampler* prompt = array.find("L1S05");
  const Sampler* delayed = array.find("L3S05");
  REQUIRE(prompt != nullptr);
  REQUIRE(delayed != nullptr);

  CHECK(prompt->first_window() == 1);
  CHECK(prompt->last_window() == 12);
  CHECK(delayed->first_window() == 3);  // 1800 s delay = two 900 s windows
  CHECK(delayed->last_window() == 14);
  CHECK(array.max_window() == 14);

  CHECK(!delayed->active_in_window(2));
  CHECK(delayed->active_in_window(3));
  CHECK(delayed->active_in_window(14));
  CHECK(!delayed->active_in_window(15));
  CHECK(prompt->active_in_window(1));
  CHECK(!prompt->active_in_window(13));
}

TEST_CASE("geometry validation") {
  auto cfg = three_line_config();

  SUBCASE("coincident samplers are rejected") {
    cfg.lines[1] = cfg.lines[0];
    cfg.lines[1].line = 2;
    CHECK_THROWS_AS(build_sampler_lines(cfg), ConfigError);
  }

  SUBCASE("delay must align with the bag window") {
    cfg.lines[2].delay_s = 1000.0;
    CHECK_THROWS_AS(build_sampler_lines(cfg), ConfigError);
  }

  SUBCASE("empty configuration is rejected") {
    cfg.lines.clear();
    CHECK_THROWS_AS(build_sampler_lines(cfg), ConfigError);
  }
}

TEST_CASE("observe bags the series over each sampler's own windows") {
  SamplerGeometryConfig cfg;
  cfg.bags = 2;
  cfg.bag_seconds = 900.0;
  cfg.lines = {{1, {0.0, 0.0}, 90.0, 1, 250.0, 0.0},
               {3, {0.0, 500.0}, 90.0, 1, 250.0, 900.0}};
  auto array = build_sampler_lines(cfg);
  REQUIRE(array.samplers.size() == 2);

  // Constant 100 ppt everywhere: every 900 s bag integrates to 25 ppt-hr.
  std::vector<ConcentrationSeries> series = {constant_series(0, 60, 46, 100.0),
                                             constant_series(0, 60, 46, 100.0)};
  RngStream rng(1, kObservationNoiseStream);
  auto records = observe(series, array, 0.0, rng);
  REQUIRE(records.size() == 4);

  CHECK(records[0].sampler_id == "L1S01");
  CHECK(records[0].window_k == 1);
  CHECK(records[0].dose_ppt_hr == doctest::Approx(25.0).epsilon(1e-12));
  CHECK(records[1].window_k == 2);
  CHECK(records[0].kind == DoseKind::observed);

  // The delayed sampler's first bag is global window 2.
  CHECK(records[2].sampler_id == "L3S01");
  CHECK(records[2].window_k == 2);
  CHECK(records[3].window_k == 3);
  CHECK(records[2].dose_ppt_hr == doctest::Approx(25.0).epsilon(1e-12));
}

TEST_CASE("observation noise is multiplicative, clamped, and seedable") {
  SamplerGeometryConfig cfg;
  cfg.bags = 1;
  cfg.bag_seconds = 900.0;
  cfg.lines = {{1, {0.0, 0.0}, 90.0, 1, 250.0, 0.0}};
  auto array = build_sampler_lines(cfg);
  std::vector<ConcentrationSeries> series = {constant_series(0, 60, 16, 100.0)};

  SUBCASE("zero dose stays exactly zero under noise") {
    std::vector<ConcentrationSeries> silent = {constant_series(0, 60, 16, 0.0)};
    RngStream rng(5, 0);
    auto records = observe(silent, array, 0.5, rng);
    CHECK(records[0].dose_ppt_hr == 0.0);
  }

  SUBCASE("draws stay non-negative and have the configured spread") {
    RngStream rng(5, 0);
    const int n = 4000;
    double sum = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
      auto records = observe(series, array, 0.1, rng);
      double d = records[0].dose_ppt_hr;
      CHECK(d >= 0.0);
      sum += d;
      sq += d * d;
    }
    double mean = sum / n;
    double sd = std::sqrt(sq / n - mean * mean);
    CHECK(mean == doctest::Approx(25.0).epsilon(0.01));
    CHECK(sd == doctest::Approx(2.5).epsilon(0.1));  // 10% of the clean dose
  }

  SUBCASE("same stream, same records") {
    RngStream a(77, 0), b(77, 0);
    auto ra = observe(series, array, 0.3, a);
    auto rb = observe(series, array, 0.3, b);
    CHECK(ra[0].dose_ppt_hr == rb[0].dose_ppt_hr);
  }

  RngStream rng(5, 0);
  CHECK_THROWS_AS(observe(series, array, -0.1, rng), ConfigError);
  std::vector<ConcentrationSeries> short_list;
  CHECK_THROWS_AS(observe(short_list, array, 0.0, rng), ConfigError);
}

TEST_CASE("threshold policy: floor predictions, drop faint observations") {
  ThresholdPolicy policy{1.0, 10.0};
  policy.validate();

  std::vector<DosePair> pairs = {
      {"a", 1, 1, 9.9, 500.0},    // observed below cutoff: dropped
      {"b", 1, 1, 10.0, 500.0},   // exactly at cutoff: kept
      {"c", 1, 2, 120.0, 0.0},    // prediction floored to 1.0
      {"d", 2, 3, 55.0, 1.0},     // already at the floor: unchanged
      {"e", 2, 4, 300.0, 42.5},   // untouched
  };
  auto out = apply_thresholds(pairs, policy);
  REQUIRE(out.size() == 4);
  CHECK(out[0].sampler_id == "b");
  CHECK(out[0].observed == 10.0);
  CHECK(out[0].predicted == 500.0);
  CHECK(out[1].sampler_id == "c");
  CHECK(out[1].predicted == 1.0);
  CHECK(out[2].predicted == 1.0);
  CHECK(out[3].predicted == 42.5);

  SUBCASE("idempotent and never grows the list") {
    RngStream rng(13, 0);
    std::vector<DosePair> random_pairs;
    for (int i = 0; i < 500; ++i) {
      double obs = std::pow(10.0, -2.0 + 5.0 * rng.uniform01());
      double pred = std::pow(10.0, -2.0 + 5.0 * rng.uniform01());
      random_pairs.push_back({"s" + std::to_string(i), 1, 1, obs, pred});
    }
    auto once = apply_thresholds(random_pairs, policy);
    auto twice = apply_thresholds(once, policy);
    CHECK(once.size() <= random_pairs.size());
    REQUIRE(twice.size() == once.size());
    for (std::size_t i = 0; i < once.size(); ++i) {
      CHECK(twice[i].observed == once[i].observed);
      CHECK(twice[i].predicted == once[i].predicted);
    }
    for (const auto& p : once) {
      CHECK(p.observed >= policy.observed_cutoff_ppt_hr);
      CHECK(p.predicted >= policy.predicted_floor_ppt_hr);
    }
  }

  SUBCASE("observed values are never modified, order is preserved") {
    auto kept = apply_thresholds(pairs, policy);
    std::vector<std::string> ids;
    for (const auto& p : kept) ids.push_back(p.sampler_id);
    CHECK(ids == std::vector<std::string>{"b", "c", "d", "e"});
    for (const auto& p : kept) {
      for (const auto& q : pairs) {
        if (q.sampler_id == p.sampler_id) CHECK(p.observed == q.observed);
      }
    }
  }

  CHECK_THROWS_AS((ThresholdPolicy{0.0, 10.0}.validate()), ConfigError);
  CHECK_THROWS_AS((ThresholdPolicy{10.0, 10.0}.validate()), ConfigError);
}

TEST_CASE("train/test split partitions records exactly by line") {
  std::vector<DoseRecord> records = {
      {"L1S01", 1, 1, 10.0, DoseKind::observed},
      {"L3S01", 3, 3, 20.0, DoseKind::observed},
      {"L2S01", 2, 1, 30.0, DoseKind::observed},
      {"L1S02", 1, 2, 40.0, DoseKind::observed},
  };
  std::vector<DoseRecord> train, test;
  split_train_test(records, {1, 2}, {3}, train, test);
  REQUIRE(train.size() == 3);
  REQUIRE(test.size() == 1);
  CHECK(train[0].sampler_id == "L1S01");
  CHECK(train[1].sampler_id == "L2S01");
  CHECK(train[2].sampler_id == "L1S02");
  CHECK(test[0].sampler_id == "L3S01");

  SUBCASE("a record from an unassigned line is an error") {
    records.push_back({"L7S01", 7, 1, 5.0, DoseKind::observed});
    CHECK_THROWS_AS(split_train_test(records, {1, 2}, {3}, train, test), ConfigError);
  }
}

TEST_CASE("dose record files round-trip exactly") {
  fs::path dir = fresh_dir("plume_test_dose_io");
  fs::path file = dir / "doses.csv";

  std::vector<DoseRecord> records = {
      {"L1S01", 1, 1, 123.456789012345, DoseKind::observed},
      {"L3S17", 3, 14, 0.0, DoseKind::predicted},
      {"L2S30", 2, 12, 9876.5, DoseKind::observed},
  };
  write_dose_records(file, records);
  auto back = load_dose_records(file);
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(back[i].sampler_id == records[i].sampler_id);
    CHECK(back[i].line == records[i].line);
    CHECK(back[i].window_k == records[i].window_k);
    CHECK(back[i].dose_ppt_hr == records[i].dose_ppt_hr);
    // The file format carries no kind column; a loaded record is observed
    // until the caller says otherwise.
    CHECK(back[i].kind == DoseKind::observed);
  }

  SUBCASE("negative doses are rejected on load") {
    std::ofstream out(file);
    out << "sampler_id,line,window_k,dose_ppt_hr\n";
    out << "L1S01,1,1,-4.0\n";
    out.close();
    CHECK_THROWS_AS(load_dose_records(file), ConfigError);
  }

  SUBCASE("malformed numeric fields are rejected") {
    std::ofstream out(file);
    out << "sampler_id,line,window_k,dose_ppt_hr\n";
    out << "L1S01,1,second,4.0\n";
    out.close();
    CHECK_THROWS_AS(load_dose_records(file), ConfigError);
  }

  SUBCASE("a stray header is rejected") {
    std::ofstream out(file);
    out << "sampler_id,line,window_k,dose_ppt_hr,kind\n";
    out << "L1S01,1,1,4.0,observed\n";
    out.close();
    CHECK_THROWS_AS(load_dose_records(file), ConfigError);
  }

  CHECK_THROWS_AS(load_dose_records(dir / "absent.csv"), ConfigError);
}

TEST_CASE("explicit coordinate files override generated placement") {
  fs::path dir = fresh_dir("plume_test_coords");
  fs::path file = dir / "samplers.csv";
  std::ofstream out(file);
  out << "sampler_id,line,x_m,y_m,z_m\n";
  out << "P1,1,100,200,1.5\n";
  out << "P2,1,350,200,1.5\n";
  out << "Q1,3,100,900,1.5\n";
  out.close();

  SamplerGeometryConfig cfg;
  cfg.bags = 12;
  cfg.bag_seconds = 900.0;
  cfg.coordinates_file = file;
  cfg.lines = {{1, {}, 90.0, 0, 250.0, 0.0}, {3, {}, 90.0, 0, 250.0, 1800.0}};
  auto array = build_sampler_lines(cfg);
  REQUIRE(array.samplers.size() == 3);
  const Sampler* q = array.find("Q1");
  REQUIRE(q != nullptr);
  CHECK(q->line == 3);
  CHECK(q->delay_s == 1800.0);  // delay comes from the line config
  CHECK(q->first_window() == 3);
  const Sampler* p = array.find("P2");
  REQUIRE(p != nullptr);
  CHECK(p->position.x == 350.0);
  CHECK(p->delay_s == 0.0);
}
