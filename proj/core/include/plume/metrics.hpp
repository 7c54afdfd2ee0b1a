#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace plume {

/// One (observed, predicted) dosage pair, thresholds already applied so both
/// values are strictly positive and logarithms are defined.
struct PairedSample {
  double observed = 0.0;   // Do, ppt-hr
  double predicted = 0.0;  // Dp, ppt-hr
};

/// The six-statistic dispersion-model evaluation suite.
///   FB   = (mean Do - mean Dp) / (0.5 (mean Do + mean Dp))
///   MG   = exp(mean ln Do - mean ln Dp)
///   NMSE = mean((Do - Dp)^2) / (mean Do * mean Dp)
///   VG   = exp(mean((ln Do - ln Dp)^2))
///   FAC2 = fraction with Dp/Do in [1/2, 2], endpoints included
///   FAC3 = fraction with Dp/Do in [1/3, 3], endpoints included
/// FAC2/FAC3 are stored as fractions; report writers render percentages.
struct MetricReport {
  double fb = 0.0;
  double mg = 1.0;
  double nmse = 0.0;
  double vg = 1.0;
  double fac2 = 1.0;
  double fac3 = 1.0;
  int n = 0;
};

enum class CiMethod { normal, bootstrap_percentile };

struct ConfidenceInterval {
  std::string statistic;
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

MetricReport compute_metrics(std::span<const PairedSample> pairs);

/// Interval over per-run metric values at the given level (default 95%).
/// `normal` uses mean +/- z * s/sqrt(n); `bootstrap_percentile` resamples
/// the run values (2000 replicates, seeded deterministically).
ConfidenceInterval confidence_interval(const std::string& statistic,
                                       std::span<const double> samples,
                                       double level = 0.95,
                                       CiMethod method = CiMethod::normal,
                                       std::uint64_t bootstrap_seed = 0);

/// Inverse standard normal CDF (Acklam's rational approximation, refined by
/// one Halley step; |error| < 1e-12 over (0, 1)).
double normal_quantile(double p);

/// Ordered metric names as reported: FB, MG, NMSE, VG, FAC2, FAC3.
const std::vector<std::string>& metric_names();
double metric_value(const MetricReport& report, const std::string& name);

}  // namespace plume
