#pragma once

// LLN / CLT / rate diagnostics for scalar path functionals. Every statistic
// sorts its samples before summing, so results do not depend on sample order.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace mfje {

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

// Least squares on (log x, log y). Needs at least 3 points and y > 0.
RateFit rate_fit(std::span<const double> xs, std::span<const double> ys);

struct LlnSamples {
  std::size_t n = 0;
  // Cohort averages (1/n) sum_l f(X^l), one per replication.
  std::vector<double> averages;
};

struct LlnRow {
  std::size_t n = 0;
  double l2_error = 0.0;  // mean of (average - target)^2
  double ci_low = 0.0;    // jackknife 95% interval
  double ci_high = 0.0;
  std::size_t samples = 0;
};

struct LlnReport {
  std::vector<LlnRow> rows;
  // log-log slope of l2_error against n; present with >= 3 rows, all errors > 0.
  std::optional<RateFit> fit;
};

LlnReport lln_check(std::span<const LlnSamples> samples, double target);

struct CltThresholds {
  // |mean| sqrt(N) and |var - 1| / sqrt(2/N) are compared with this z value.
  double z = 3.29;
  double skewness = 0.15;
  double excess_kurtosis = 0.3;
  // KS statistic limit is ks_coefficient / sqrt(N).
  double ks_coefficient = 1.63;
};

struct CltReport {
  std::size_t samples = 0;
  double mean = 0.0;
  double variance = 0.0;
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
  double ks = 0.0;
  bool degenerate = false;
  bool mean_ok = false;
  bool variance_ok = false;
  bool skewness_ok = false;
  bool kurtosis_ok = false;
  bool ks_ok = false;

  bool passed() const noexcept { return !degenerate && mean_ok && variance_ok && skewness_ok && kurtosis_ok && ks_ok; }
};

// Moments and the Kolmogorov-Smirnov distance to N(0,1). Needs >= 200
// samples; zero variance sets `degenerate` and clears every flag.
CltReport clt_check(std::span<const double> standardized, const CltThresholds& thresholds = {});

double standard_normal_cdf(double x);

// Mean and standard error of the mean (sample standard deviation / sqrt(N)).
struct MeanEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t count = 0;
};
MeanEstimate mean_estimate(std::span<const double> xs);

// Sum after sorting; used wherever a total must be order independent.
double stable_sum(std::span<const double> xs);

}  // namespace mfje
