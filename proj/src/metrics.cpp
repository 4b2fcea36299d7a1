#include "mfje/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mfje/error.hpp"
#include "mfje/simulate.hpp"

namespace mfje {

namespace {

[[noreturn]] void fail(const std::string& what) { throw InvalidArgument("metrics", what); }

struct Weighted {
  double x;
  double w;
};

std::vector<Weighted> normalised(std::span<const double> xs, std::span<const double> ws) {
  if (xs.empty()) fail("w1_1d: empty sample");
  if (!ws.empty() && ws.size() != xs.size()) fail("w1_1d: weights and samples differ in length");
  std::vector<Weighted> out(xs.size());
  double total = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double w = ws.empty() ? 1.0 : ws[i];
    if (!(w >= 0.0)) fail("w1_1d: negative weight");
    out[i] = {xs[i], w};
    total += w;
  }
  if (!(total > 0.0)) fail("w1_1d: zero total weight");
  for (auto& p : out) p.w /= total;
  std::sort(out.begin(), out.end(), [](const Weighted& a, const Weighted& b) { return a.x < b.x; });
  return out;
}

}  // namespace

CostMatrix CostMatrix::l1(std::span<const double> a, std::span<const double> b, std::size_t dim) {
  const std::size_t na = a.size() / dim, nb = b.size() / dim;
  CostMatrix c(na, nb);
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < nb; ++j) c(i, j) = l1_distance(a.subspan(i * dim, dim), b.subspan(j * dim, dim));
  return c;
}

double w1_1d(std::span<const double> a, std::span<const double> b, std::span<const double> weights_a,
             std::span<const double> weights_b) {
  const auto pa = normalised(a, weights_a);
  const auto pb = normalised(b, weights_b);
  // Integrate |F_a - F_b| over the merged breakpoints.
  std::size_t i = 0, j = 0;
  double fa = 0.0, fb = 0.0, total = 0.0;
  double x = std::min(pa.front().x, pb.front().x);
  while (i < pa.size() || j < pb.size()) {
    const double next = j == pb.size() || (i < pa.size() && pa[i].x <= pb[j].x) ? pa[i].x : pb[j].x;
    total += std::abs(fa - fb) * (next - x);
    x = next;
    while (i < pa.size() && pa[i].x == x) fa += pa[i++].w;
    while (j < pb.size() && pb[j].x == x) fb += pb[j++].w;
  }
  return total;
}

TransportPlan w1_discrete_plan(std::span<const double> pmf_a, std::span<const double> pmf_b, const CostMatrix& cost) {
  const std::size_t m = pmf_a.size();
  if (m == 0) fail("w1_discrete: empty pmf");
  if (m > 256) fail("w1_discrete: supports are limited to 256 points");
  if (pmf_b.size() != m || cost.rows() != m || cost.cols() != m) fail("w1_discrete: pmf and cost shapes differ");
  for (std::size_t i = 0; i < m; ++i) {
    if (cost(i, i) != 0.0) fail("w1_discrete: cost matrix must have a zero diagonal");
    for (std::size_t j = 0; j < m; ++j)
      if (cost(i, j) < 0.0) fail("w1_discrete: cost matrix must be nonnegative");
  }
  return solve_transport(pmf_a, pmf_b, cost);
}

double w1_discrete(std::span<const double> pmf_a, std::span<const double> pmf_b, const CostMatrix& cost) {
  return w1_discrete_plan(pmf_a, pmf_b, cost).cost;
}

namespace {

std::vector<double> weights_of(const MeasureSnapshot& s) {
  std::vector<double> w(s.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = s.weight(i);
  return w;
}

}  // namespace

double w1_empirical_rd(const MeasureSnapshot& a, const MeasureSnapshot& b, std::size_t cap) {
  if (a.is_pmf() || b.is_pmf()) fail("w1_empirical_rd expects particle clouds");
  if (a.dim() != b.dim()) fail("w1_empirical_rd: clouds differ in dimension");
  if (a.size() > cap || b.size() > cap) {
    std::ostringstream os;
    os << "w1_empirical_rd: cloud sizes " << a.size() << " and " << b.size() << " exceed the cap " << cap
       << "; subsample with subsample_cloud first";
    fail(os.str());
  }
  const auto cost = CostMatrix::l1(a.coordinates(), b.coordinates(), a.dim());
  auto wa = weights_of(a), wb = weights_of(b);
  // Common total mass: renormalise the (already normalised) weights exactly.
  const double sa = std::accumulate(wa.begin(), wa.end(), 0.0), sb = std::accumulate(wb.begin(), wb.end(), 0.0);
  for (double& w : wb) w *= sa / sb;
  return solve_transport(wa, wb, cost).cost;
}

MeasureSnapshot subsample_cloud(const MeasureSnapshot& cloud, std::size_t size, std::uint64_t seed) {
  if (cloud.is_pmf()) fail("subsample_cloud expects a particle cloud");
  const std::size_t n = cloud.size();
  if (size == 0) fail("subsample_cloud: size must be positive");
  if (size >= n) return cloud;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = Rng::stream(seed, {0x5ab5});
  for (std::size_t k = 0; k < size; ++k) {
    const std::size_t j = k + static_cast<std::size_t>(rng.uniform() * static_cast<double>(n - k));
    std::swap(idx[k], idx[std::min(j, n - 1)]);
  }
  idx.resize(size);
  std::sort(idx.begin(), idx.end());
  const std::size_t d = cloud.dim();
  std::vector<double> coords;
  coords.reserve(size * d);
  std::vector<double> w;
  double total = 0.0;
  for (std::size_t i : idx) {
    auto p = cloud.particle(i);
    coords.insert(coords.end(), p.begin(), p.end());
    w.push_back(cloud.weight(i));
    total += cloud.weight(i);
  }
  if (cloud.uniform_weights()) return MeasureSnapshot::cloud(d, std::move(coords), {}, cloud.time());
  for (double& v : w) v /= total;
  return MeasureSnapshot::cloud(d, std::move(coords), std::move(w), cloud.time());
}

double snapshot_distance(const StateSpace& space, const MeasureSnapshot& a, const MeasureSnapshot& b, std::size_t cap,
                         std::uint64_t seed) {
  if (a.is_pmf() != b.is_pmf()) fail("snapshot_distance: cannot compare a pmf with a particle cloud");
  if (a.is_pmf()) {
    if (!space.is_finite() || space.size() != a.size() || b.size() != a.size())
      fail("snapshot_distance: pmf does not match the finite state space");
    std::vector<double> coords;
    for (std::size_t i = 0; i < space.size(); ++i)
      coords.insert(coords.end(), space.point(i).begin(), space.point(i).end());
    const auto cost = CostMatrix::l1(coords, coords, space.dim());
    if (space.size() <= 256) return w1_discrete(a.probabilities(), b.probabilities(), cost);
    return solve_transport(a.probabilities(), b.probabilities(), cost).cost;
  }
  if (a.dim() == 1) {
    auto wa = weights_of(a), wb = weights_of(b);
    return w1_1d(a.coordinates(), b.coordinates(), wa, wb);
  }
  const auto sa = subsample_cloud(a, cap, seed);
  const auto sb = subsample_cloud(b, cap, seed + 1);
  return w1_empirical_rd(sa, sb, cap);
}

double kr_dual_lower_bound(std::span<const double> coords_a, std::span<const double> weights_a,
                           std::span<const double> coords_b, std::span<const double> weights_b, std::size_t dim,
                           std::size_t functions, std::uint64_t seed, std::size_t knots) {
  if (dim == 0 || coords_a.empty() || coords_b.empty()) fail("kr_dual_lower_bound: empty input");
  if (knots < 2) knots = 2;
  const std::size_t na = coords_a.size() / dim, nb = coords_b.size() / dim;
  auto wa = [&](std::size_t i) { return weights_a.empty() ? 1.0 / static_cast<double>(na) : weights_a[i]; };
  auto wb = [&](std::size_t i) { return weights_b.empty() ? 1.0 / static_cast<double>(nb) : weights_b[i]; };

  std::vector<double> lo(dim, INFINITY), hi(dim, -INFINITY);
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t k = 0; k < dim; ++k) {
      lo[k] = std::min(lo[k], coords_a[i * dim + k]);
      hi[k] = std::max(hi[k], coords_a[i * dim + k]);
    }
  for (std::size_t i = 0; i < nb; ++i)
    for (std::size_t k = 0; k < dim; ++k) {
      lo[k] = std::min(lo[k], coords_b[i * dim + k]);
      hi[k] = std::max(hi[k], coords_b[i * dim + k]);
    }

  Rng rng = Rng::stream(seed, {0x4b52});
  std::vector<double> slopes(dim * (knots - 1));
  // g_k(x) = integral of the piecewise-constant slope from lo[k] to x.
  auto eval = [&](std::span<const double> x) {
    double f = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      const double width = hi[k] - lo[k];
      if (width <= 0.0) continue;
      const double h = width / static_cast<double>(knots - 1);
      double pos = x[k] - lo[k];
      for (std::size_t s = 0; s + 1 < knots && pos > 0.0; ++s) {
        const double step = std::min(pos, h);
        f += slopes[k * (knots - 1) + s] * step;
        pos -= step;
      }
    }
    return f;
  };
  double best = 0.0;
  for (std::size_t f = 0; f < functions; ++f) {
    for (double& s : slopes) s = rng.uniform() < 0.5 ? -1.0 : 1.0;
    double ia = 0.0, ib = 0.0;
    for (std::size_t i = 0; i < na; ++i) ia += wa(i) * eval(coords_a.subspan(i * dim, dim));
    for (std::size_t i = 0; i < nb; ++i) ib += wb(i) * eval(coords_b.subspan(i * dim, dim));
    best = std::max(best, std::abs(ia - ib));
  }
  return best;
}

double fournier_rate(double n, unsigned d, double q) {
  if (!(n >= 1.0)) fail("fournier_rate: n must be >= 1");
  if (d == 0) fail("fournier_rate: dimension must be >= 1");
  if (!(q > 1.0)) fail("fournier_rate: the empirical-measure rate requires a moment order q > 1");
  if (d <= 2 && q == 2.0) fail("fournier_rate: q = 2 is excluded for d <= 2 by the empirical-measure rate lemma");
  if (d > 2 && q == static_cast<double>(d) / static_cast<double>(d - 1))
    fail("fournier_rate: q = d/(d-1) is excluded for d > 2 by the empirical-measure rate lemma");
  const double moment_term = std::pow(n, -(q - 1.0) / q);
  if (d == 1) return std::pow(n, -0.5) + moment_term;
  if (d == 2) return std::log1p(n) / std::sqrt(n) + moment_term;
  return std::pow(n, -1.0 / static_cast<double>(d)) + moment_term;
}

GapSummary chaos_gap(std::span<const double> sup_distances) {
  GapSummary g;
  g.pairs = sup_distances.size();
  if (g.pairs < 2) fail("chaos_gap needs at least two pairs");
  double sum = 0.0;
  for (double v : sup_distances) sum += v;
  g.mean = sum / static_cast<double>(g.pairs);
  double ss = 0.0;
  for (double v : sup_distances) ss += (v - g.mean) * (v - g.mean);
  const double var = ss / static_cast<double>(g.pairs - 1);
  g.std_error = std::sqrt(var / static_cast<double>(g.pairs));
  g.ci_low = std::max(0.0, g.mean - 1.959963984540054 * g.std_error);
  g.ci_high = g.mean + 1.959963984540054 * g.std_error;
  return g;
}

GapSummary chaos_gap(std::span<const CoupledPair> pairs) {
  std::vector<double> d(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) d[i] = pairs[i].sup_distance;
  return chaos_gap(d);
}

}  // namespace mfje
