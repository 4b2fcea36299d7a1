#pragma once

// Wasserstein-1 distances under the l1 ground metric, a Kantorovich-Rubinstein
// dual estimator, the empirical-measure convergence rate beta(n), and the
// coupling gap summary used by the chaos experiments.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mfje/kernel.hpp"

namespace mfje {

struct CoupledPair;

// Row-major dense cost matrix.
class CostMatrix {
 public:
  CostMatrix() = default;
  CostMatrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), c_(rows * cols, fill) {}
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double& operator()(std::size_t i, std::size_t j) { return c_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return c_[i * cols_ + j]; }
  std::span<const double> data() const noexcept { return c_; }

  // l1 distances between two point sets in R^d (flat row-major coordinates).
  static CostMatrix l1(std::span<const double> a, std::span<const double> b, std::size_t dim);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> c_;
};

struct TransportPlan {
  double cost = 0.0;
  // Dense rows x cols flow matrix.
  std::vector<double> flow;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t pivots = 0;
};

// Exact transportation problem: supplies a, demands b (equal totals within
// 1e-9), solved by a primal network simplex on the bipartite graph with an
// artificial root and strongly feasible spanning-tree bases.
TransportPlan solve_transport(std::span<const double> supply, std::span<const double> demand, const CostMatrix& cost);

// Exact 1-D W1 between two weighted samples (each normalised to a probability
// measure) by a merged sweep of the two CDFs. Inputs need not be sorted.
// Empty weights mean uniform.
double w1_1d(std::span<const double> a, std::span<const double> b, std::span<const double> weights_a = {},
             std::span<const double> weights_b = {});

// Exact W1 between two pmfs on a common support of at most 256 points.
double w1_discrete(std::span<const double> pmf_a, std::span<const double> pmf_b, const CostMatrix& cost);
TransportPlan w1_discrete_plan(std::span<const double> pmf_a, std::span<const double> pmf_b, const CostMatrix& cost);

inline constexpr std::size_t kDefaultTransportCap = 2048;

// Exact W1 between two weighted clouds in R^d under the l1 metric. Clouds with
// more than `cap` particles are rejected; see subsample_cloud.
double w1_empirical_rd(const MeasureSnapshot& a, const MeasureSnapshot& b, std::size_t cap = kDefaultTransportCap);

// Deterministic seeded subsample of `size` particles (without replacement),
// reweighted proportionally to the original weights.
MeasureSnapshot subsample_cloud(const MeasureSnapshot& cloud, std::size_t size, std::uint64_t seed);

// W1 between two snapshots on `space`: pmfs via w1_discrete with l1 costs
// between state coordinates; 1-D clouds via w1_1d; clouds in R^d via
// w1_empirical_rd after subsampling to `cap`.
double snapshot_distance(const StateSpace& space, const MeasureSnapshot& a, const MeasureSnapshot& b,
                         std::size_t cap = kDefaultTransportCap, std::uint64_t seed = 0);

// Lower bound on W1 from the dual side: the largest |int f da - int f db| over
// a family of random functions f(x) = sum_k g_k(x_k), each g_k piecewise-linear
// with slopes in [-1, 1] on a uniform knot grid spanning both supports. Such f
// are 1-Lipschitz for the l1 norm.
double kr_dual_lower_bound(std::span<const double> coords_a, std::span<const double> weights_a,
                           std::span<const double> coords_b, std::span<const double> weights_b, std::size_t dim,
                           std::size_t functions, std::uint64_t seed, std::size_t knots = 64);

// Empirical-measure rate: d=1: n^-1/2 + n^-(q-1)/q; d=2: log(1+n)/sqrt(n) + n^-(q-1)/q;
// d>2: n^-1/d + n^-(q-1)/q. Requires q > 1 and excludes q = 2 for d <= 2 and
// q = d/(d-1) for d > 2.
double fournier_rate(double n, unsigned d, double q);

struct GapSummary {
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double std_error = 0.0;
  std::size_t pairs = 0;
};

// Mean of sup_t |X_t - Xbar_t| with a normal-approximation 95% interval. This
// bounds the path-law distance between the interacting and mean-field systems
// from above.
GapSummary chaos_gap(std::span<const CoupledPair> pairs);
GapSummary chaos_gap(std::span<const double> sup_distances);

}  // namespace mfje
