#include <cmath>

#include "doctest.h"
#include "mfje/error.hpp"
#include "mfje/forward.hpp"
#include "mfje/insurance_life.hpp"
#include "mfje/insurance_nonlife.hpp"
#include "mfje/meanfield.hpp"

using namespace mfje;

namespace {

double sup_diff(const MarginalFlow& a, const MarginalFlow& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t i = 0; i < a[k].size(); ++i) d = std::max(d, std::abs(a[k].probability(i) - b[k].probability(i)));
  return d;
}

}  // namespace

TEST_CASE("measure-independent kernel: Picard stops at the second iterate") {
  const auto k = two_state_kernel(0.5, 0.2);
  const auto grid = uniform_grid(0, 1, 201);
  const auto law = MeasureSnapshot::pmf({0.7, 0.3});
  const auto r = picard_solve(k, law, grid);
  CHECK(r.converged);
  REQUIRE(r.log.size() == 2);
  CHECK(r.log[0].sup_w1_change > 0.0);
  CHECK(r.log[1].sup_w1_change == 0.0);
  const auto direct = solve_linear_forward(k, nullptr, law.probabilities(), grid).flow;
  CHECK(sup_diff(r.flow, direct) == 0.0);
}

TEST_CASE("SIRD Picard limit agrees with the direct non-linear solve") {
  const SirdSpec spec;
  const auto k = sird_kernel(spec);
  const auto grid = uniform_grid(0, 1, 201);
  PicardOptions opt;
  opt.tol = 1e-6;
  const auto r = picard_solve(k, sird_initial_law(spec), grid, opt);
  CHECK(r.converged);
  const auto direct = solve_nonlinear_forward(k, spec.initial_pmf, grid).flow;
  CHECK(sup_diff(r.flow, direct) <= 2e-6);
  for (std::size_t i = 2; i < r.log.size(); ++i) CHECK(r.log[i].sup_w1_change < r.log[i - 1].sup_w1_change);
  // Fixed-point residual: one more frozen solve moves the flow by at most tol.
  const auto again = solve_linear_forward(k, &r.flow, spec.initial_pmf, grid).flow;
  CHECK(flow_distance(k.space, again, r.flow) <= opt.tol);
}

TEST_CASE("chained Picard matches the single-segment solve") {
  const SirdSpec spec;
  const auto k = sird_kernel(spec);
  const auto grid = uniform_grid(0, 1, 201);
  const std::vector<double> splits{0.5};
  const auto chained = picard_solve_chained(k, sird_initial_law(spec), grid, splits);
  const auto whole = picard_solve(k, sird_initial_law(spec), grid);
  CHECK(chained.flow.size() == grid.size());
  CHECK(sup_diff(chained.flow, whole.flow) <= 5e-6);
}

TEST_CASE("contraction guidance") {
  CHECK(picard_contraction_bound(0.5, 1.0) == doctest::Approx(0.5 * std::exp(0.5)));
}

TEST_CASE("linearised transitions mix back to the mean-field flow") {
  const SirdSpec spec;
  const auto k = sird_kernel(spec);
  const auto grid = uniform_grid(0, 1, 201);
  const auto flow = solve_nonlinear_forward(k, spec.initial_pmf, grid).flow;
  std::vector<MarginalFlow> parts;
  for (std::size_t x = 0; x < 4; ++x) parts.push_back(linearised_transition(k, flow, k.space.point(x), grid));
  double worst = 0.0;
  for (std::size_t g = 0; g < grid.size(); ++g)
    for (std::size_t y = 0; y < 4; ++y) {
      double s = 0.0;
      for (std::size_t x = 0; x < 4; ++x) s += spec.initial_pmf[x] * parts[x][g].probability(y);
      worst = std::max(worst, std::abs(s - flow[g].probability(y)));
    }
  CHECK(worst <= 1e-6);
  for (std::size_t g = 0; g < grid.size(); ++g) CHECK(parts[3][g].probability(3) == 1.0);
  CHECK_THROWS_AS(linearised_transition(k, flow, Point{2.5}, grid), InvalidArgument);
}

TEST_CASE("first-order infection from S") {
  const SirdSpec spec;
  const auto k = sird_kernel(spec);
  const auto grid = uniform_grid(0, 1, 1001);
  const auto flow = solve_nonlinear_forward(k, spec.initial_pmf, grid).flow;
  const auto from_s = linearised_transition(k, flow, Point{1.0}, grid);
  const double expected = 1e-3 * 3.0 * 0.1;
  CHECK(std::abs(from_s[1].probability(1) - expected) <= 0.1 * expected);
}

TEST_CASE("Picard on a continuous space uses particles") {
  const auto k = poisson_counting_kernel(2.0);
  PicardOptions opt;
  opt.particles = 2000;
  opt.workers = 2;
  const auto r = picard_solve(k, MeasureSnapshot::dirac(Point{0.0}), uniform_grid(0, 1, 11), opt);
  CHECK(r.converged);
  REQUIRE(r.log.size() == 2);
  CHECK(r.log[1].sup_w1_change == 0.0);
}

TEST_CASE("Gamma fixed point without collective weight") {
  GammaClaimsSpec spec;
  const auto grid = uniform_grid(0, 1, 51);
  const auto fp = scalar_fixed_point_gamma(spec, grid, 1e-9, 20, 20000, 5, 2);
  CHECK(fp.converged);
  REQUIRE(fp.log.size() == 2);
  CHECK(fp.log[1].sup_w1_change == 0.0);
  for (double th : fp.theta) CHECK(th == spec.theta_star);
}

TEST_CASE("Gamma scale stays within its clamp") {
  GammaClaimsSpec spec;
  spec.weight_fn = PiecewiseLinear({0.0, 1.0}, {0.0, 1.0});
  spec.cap_K = 50.0;
  const auto fp = scalar_fixed_point_gamma(spec, uniform_grid(0, 1, 51), 1e-9, 50, 20000, 6, 2);
  for (double th : fp.theta) {
    CHECK(th >= spec.theta_min);
    CHECK(th <= spec.theta_max);
  }
}

TEST_CASE("particle flows do not depend on the worker count") {
  GammaClaimsSpec spec;
  spec.weight_fn = PiecewiseLinear(0.5);
  const auto grid = uniform_grid(0, 1, 21);
  const auto a = scalar_fixed_point_gamma(spec, grid, 1e-9, 30, 5000, 9, 1);
  const auto b = scalar_fixed_point_gamma(spec, grid, 1e-9, 30, 5000, 9, 4);
  CHECK(a.mbar == b.mbar);
  CHECK(a.log.size() == b.log.size());
}
