#include "mfje/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mfje/error.hpp"

namespace mfje {

namespace {

[[noreturn]] void fail(const std::string& what) { throw InvalidArgument("stats", what); }

std::vector<double> sorted(std::span<const double> xs) {
  std::vector<double> v(xs.begin(), xs.end());
  std::sort(v.begin(), v.end());
  return v;
}

// Neumaier-compensated sum of an already sorted vector.
double compensated(const std::vector<double>& v) {
  double s = 0.0, c = 0.0;
  for (double x : v) {
    const double t = s + x;
    c += std::abs(s) >= std::abs(x) ? (s - t) + x : (x - t) + s;
    s = t;
  }
  return s + c;
}

}  // namespace

double stable_sum(std::span<const double> xs) { return compensated(sorted(xs)); }

MeanEstimate mean_estimate(std::span<const double> xs) {
  MeanEstimate e;
  e.count = xs.size();
  if (xs.empty()) return e;
  const auto v = sorted(xs);
  const double n = static_cast<double>(v.size());
  e.mean = compensated(v) / n;
  if (v.size() > 1) {
    std::vector<double> sq(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - e.mean) * (v[i] - e.mean);
    std::sort(sq.begin(), sq.end());
    e.std_error = std::sqrt(compensated(sq) / (n - 1.0) / n);
  }
  return e;
}

double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

RateFit rate_fit(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) fail("rate_fit: xs and ys differ in length");
  if (xs.size() < 3) fail("rate_fit needs at least 3 points");
  const std::size_t n = xs.size();
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(xs[i] > 0.0)) fail("rate_fit: x values must be positive");
    if (!(ys[i] > 0.0)) fail("rate_fit: y values must be positive");
    lx[i] = std::log(xs[i]);
    ly[i] = std::log(ys[i]);
  }
  // Order the pairs so the fit is permutation invariant bit for bit.
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return lx[a] != lx[b] ? lx[a] < lx[b] : ly[a] < ly[b];
  });
  double mx = 0.0, my = 0.0;
  for (std::size_t i : idx) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i : idx) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (sxx == 0.0) fail("rate_fit: x values must not all be equal");
  RateFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy == 0.0 ? 1.0 : sxy * sxy / (sxx * syy);
  return f;
}

LlnReport lln_check(std::span<const LlnSamples> samples, double target) {
  LlnReport report;
  for (const auto& s : samples) {
    if (s.averages.empty()) fail("lln_check: no samples for n = " + std::to_string(s.n));
    const std::size_t m = s.averages.size();
    std::vector<double> sq(m);
    for (std::size_t i = 0; i < m; ++i) sq[i] = (s.averages[i] - target) * (s.averages[i] - target);
    std::sort(sq.begin(), sq.end());
    const double total = compensated(sq);
    LlnRow row;
    row.n = s.n;
    row.samples = m;
    row.l2_error = total / static_cast<double>(m);
    // Jackknife: leave-one-out means and their spread.
    if (m > 1) {
      const double md = static_cast<double>(m);
      double acc = 0.0;
      for (double v : sq) {
        const double loo = (total - v) / (md - 1.0);
        acc += (loo - row.l2_error) * (loo - row.l2_error);
      }
      const double se = std::sqrt((md - 1.0) / md * acc);
      row.ci_low = std::max(0.0, row.l2_error - 1.959963984540054 * se);
      row.ci_high = row.l2_error + 1.959963984540054 * se;
    } else {
      row.ci_low = row.ci_high = row.l2_error;
    }
    report.rows.push_back(row);
  }
  std::sort(report.rows.begin(), report.rows.end(), [](const LlnRow& a, const LlnRow& b) { return a.n < b.n; });
  if (report.rows.size() >= 3) {
    std::vector<double> xs, ys;
    bool positive = true;
    for (const auto& r : report.rows) {
      xs.push_back(static_cast<double>(r.n));
      ys.push_back(r.l2_error);
      positive = positive && r.l2_error > 0.0;
    }
    if (positive) report.fit = rate_fit(xs, ys);
  }
  return report;
}

CltReport clt_check(std::span<const double> standardized, const CltThresholds& th) {
  const std::size_t n = standardized.size();
  if (n < 200) fail("clt_check needs at least 200 samples");
  const auto v = sorted(standardized);
  const double nd = static_cast<double>(n);
  CltReport r;
  r.samples = n;
  r.mean = compensated(v) / nd;
  std::vector<double> c2(n), c3(n), c4(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = v[i] - r.mean;
    c2[i] = d * d;
    c3[i] = d * d * d;
    c4[i] = d * d * d * d;
  }
  std::sort(c2.begin(), c2.end());
  std::sort(c3.begin(), c3.end());
  std::sort(c4.begin(), c4.end());
  const double m2 = compensated(c2) / nd;
  r.variance = compensated(c2) / (nd - 1.0);
  if (!(m2 > 0.0)) {
    r.degenerate = true;
    return r;
  }
  r.skewness = compensated(c3) / nd / std::pow(m2, 1.5);
  r.excess_kurtosis = compensated(c4) / nd / (m2 * m2) - 3.0;
  double ks = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = standard_normal_cdf(v[i]);
    ks = std::max({ks, static_cast<double>(i + 1) / nd - f, f - static_cast<double>(i) / nd});
  }
  r.ks = ks;
  r.mean_ok = std::abs(r.mean) * std::sqrt(nd) < th.z;
  r.variance_ok = std::abs(r.variance - 1.0) < th.z * std::sqrt(2.0 / nd);
  r.skewness_ok = std::abs(r.skewness) < th.skewness;
  r.kurtosis_ok = std::abs(r.excess_kurtosis) < th.excess_kurtosis;
  r.ks_ok = r.ks < th.ks_coefficient / std::sqrt(nd);
  return r;
}

}  // namespace mfje
