#include "plume/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "plume/errors.hpp"
#include "plume/rng.hpp"

namespace plume {

MetricReport compute_metrics(std::span<const PairedSample> pairs) {
  if (pairs.empty()) throw ConfigError("compute_metrics: empty pair list");
  const double n = static_cast<double>(pairs.size());

  double sum_o = 0.0, sum_p = 0.0, sum_sq = 0.0;
  double sum_ln_o = 0.0, sum_ln_p = 0.0, sum_ln_sq = 0.0;
  int in_fac2 = 0, in_fac3 = 0;
  for (const auto& pair : pairs) {
    if (pair.observed <= 0.0 || pair.predicted <= 0.0) {
      throw ConfigError("compute_metrics: nonpositive dosage (thresholds not applied?)");
    }
    sum_o += pair.observed;
    sum_p += pair.predicted;
    const double diff = pair.observed - pair.predicted;
    sum_sq += diff * diff;
    const double ln_o = std::log(pair.observed);
    const double ln_p = std::log(pair.predicted);
    sum_ln_o += ln_o;
    sum_ln_p += ln_p;
    sum_ln_sq += (ln_o - ln_p) * (ln_o - ln_p);
    const double ratio = pair.predicted / pair.observed;
    if (ratio >= 0.5 && ratio <= 2.0) ++in_fac2;
    if (ratio >= 1.0 / 3.0 && ratio <= 3.0) ++in_fac3;
  }

  MetricReport r;
  r.n = static_cast<int>(pairs.size());
  const double mean_o = sum_o / n;
  const double mean_p = sum_p / n;
  r.fb = (mean_o - mean_p) / (0.5 * (mean_o + mean_p));
  r.mg = std::exp(sum_ln_o / n - sum_ln_p / n);
  r.nmse = (sum_sq / n) / (mean_o * mean_p);
  r.vg = std::exp(sum_ln_sq / n);
  r.fac2 = in_fac2 / n;
  r.fac3 = in_fac3 / n;
  return r;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("normal_quantile: p must be in (0, 1)");

  // Acklam's rational approximation.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00, 2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  // One Halley refinement against the exact CDF.
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * 3.14159265358979323846) * std::exp(x * x / 2.0);
  x = x - u / (1.0 + x * u / 2.0);
  return x;
}

ConfidenceInterval confidence_interval(const std::string& statistic,
                                       std::span<const double> samples,
                                       double level, CiMethod method,
                                       std::uint64_t bootstrap_seed) {
  if (samples.size() < 2) throw ConfigError("confidence_interval: need >= 2 samples");
  if (!(level > 0.0 && level < 1.0)) {
    throw ConfigError("confidence_interval: level must be in (0, 1)");
  }
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= n;

  ConfidenceInterval ci;
  ci.statistic = statistic;
  ci.point = mean;

  if (method == CiMethod::normal) {
    double var = 0.0;
    for (double s : samples) var += (s - mean) * (s - mean);
    var /= (n - 1.0);
    const double z = normal_quantile(0.5 + level / 2.0);
    const double half = z * std::sqrt(var / n);
    ci.lower = mean - half;
    ci.upper = mean + half;
    return ci;
  }

  constexpr int kReplicates = 2000;
  RngStream rng(bootstrap_seed, 0);
  std::vector<double> means(kReplicates);
  for (int r = 0; r < kReplicates; ++r) {
    double sum = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const std::size_t pick = static_cast<std::size_t>(rng.uniform01() * n);
      sum += samples[std::min(pick, samples.size() - 1)];
    }
    means[r] = sum / n;
  }
  std::sort(means.begin(), means.end());
  const double alpha = (1.0 - level) / 2.0;
  const auto pick_quantile = [&](double q) {
    const double idx = q * (kReplicates - 1);
    const std::size_t lo = static_cast<std::size_t>(idx);
    const std::size_t hi = std::min<std::size_t>(lo + 1, kReplicates - 1);
    const double w = idx - lo;
    return (1.0 - w) * means[lo] + w * means[hi];
  };
  ci.lower = std::min(pick_quantile(alpha), ci.point);
  ci.upper = std::max(pick_quantile(1.0 - alpha), ci.point);
  return ci;
}

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {"FB", "MG", "NMSE", "VG", "FAC2", "FAC3"};
  return names;
}

double metric_value(const MetricReport& report, const std::string& name) {
  if (name == "FB") return report.fb;
  if (name == "MG") return report.mg;
  if (name == "NMSE") return report.nmse;
  if (name == "VG") return report.vg;
  if (name == "FAC2") return report.fac2;
  if (name == "FAC3") return report.fac3;
  throw ConfigError("unknown metric: " + name);
}

}  // namespace plume
