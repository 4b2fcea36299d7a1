#include <cmath>
#include <sstream>

#include "doctest.h"
#include "mfje/error.hpp"
#include "mfje/forward.hpp"
#include "mfje/insurance_life.hpp"
#include "oracles.hpp"

using namespace mfje;

namespace {

double max_error_two_state(double h) {
  const auto grid = uniform_grid(0.0, 1.0, static_cast<std::size_t>(std::lround(1.0 / h)) + 1);
  const auto r = solve_linear_forward(two_state_kernel(0.5), nullptr, std::vector<double>{1.0, 0.0}, grid);
  double err = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k)
    err = std::max(err, std::abs(r.flow[k].probability(0) - std::exp(-0.5 * grid[k])));
  return err;
}

SirdSpec si_spec() {
  SirdSpec s;
  s.beta1 = PiecewiseLinear(1.0);
  s.recovery_rate = PiecewiseLinear(0.0);
  s.death_rates = {PiecewiseLinear{0.0}, PiecewiseLinear{0.0}, PiecewiseLinear{0.0}};
  s.initial_pmf = {0.9, 0.1, 0.0, 0.0};
  s.horizon = {0.0, 2.0};
  return s;
}

}  // namespace

TEST_CASE("zero kernel keeps a point mass") {
  auto k = two_state_kernel(0.0);
  const auto r = solve_linear_forward(k, nullptr, std::vector<double>{0.0, 1.0}, uniform_grid(0, 1, 11));
  for (std::size_t i = 0; i < r.flow.size(); ++i) CHECK(r.flow[i].probability(1) == 1.0);
}

TEST_CASE("two-state exponential decay") {
  const auto grid = uniform_grid(0.0, 1.0, 1001);
  const auto r = solve_linear_forward(two_state_kernel(0.5), nullptr, std::vector<double>{1.0, 0.0}, grid);
  CHECK(std::abs(r.flow[1000].probability(0) - oracle::kExpHalf) <= 1e-8);
}

TEST_CASE("RK4 error falls by about 16 when the step halves") {
  const double ratio = max_error_two_state(0.1) / max_error_two_state(0.05);
  CHECK(ratio >= 8.0);
  CHECK(ratio <= 32.0);
}

TEST_CASE("linear solve from zeta is the zeta-mixture of solves from points") {
  const SirdSpec spec;
  const auto k = sird_kernel(spec);
  const auto grid = uniform_grid(0.0, 1.0, 201);
  const auto frozen = solve_nonlinear_forward(k, spec.initial_pmf, grid).flow;
  const std::vector<double> zeta{0.5, 0.3, 0.15, 0.05};
  const auto mixed = solve_linear_forward(k, &frozen, zeta, grid).flow;
  std::vector<MarginalFlow> parts;
  for (std::size_t x = 0; x < 4; ++x) parts.push_back(solve_linear_forward(k, &frozen, MeasureSnapshot::dirac_pmf(4, x).probabilities(), grid).flow);
  double worst = 0.0;
  for (std::size_t g = 0; g < grid.size(); ++g)
    for (std::size_t y = 0; y < 4; ++y) {
      double s = 0.0;
      for (std::size_t x = 0; x < 4; ++x) s += zeta[x] * parts[x][g].probability(y);
      worst = std::max(worst, std::abs(s - mixed[g].probability(y)));
    }
  CHECK(worst <= 1e-9);
}

TEST_CASE("without infection the non-linear solve equals the linear one") {
  SirdSpec spec;
  spec.beta1 = PiecewiseLinear(0.0);
  const auto k = sird_kernel(spec);
  const auto grid = uniform_grid(0.0, 1.0, 501);
  const auto a = solve_nonlinear_forward(k, spec.initial_pmf, grid).flow;
  const auto b = solve_linear_forward(k, &a, spec.initial_pmf, grid).flow;
  for (std::size_t g = 0; g < grid.size(); ++g)
    for (std::size_t y = 0; y < 4; ++y) CHECK(std::abs(a[g].probability(y) - b[g].probability(y)) <= 1e-10);
}

TEST_CASE("SI reduction follows the logistic curve") {
  const auto spec = si_spec();
  const auto grid = uniform_grid(0.0, 2.0, 2001);
  const auto r = solve_nonlinear_forward(sird_kernel(spec), spec.initial_pmf, grid);
  CHECK(std::abs(r.flow[2000].probability(1) - oracle::kLogisticAt2) <= 1e-6);
  for (std::size_t g = 0; g < grid.size(); g += 100)
    CHECK(std::abs(r.flow[g].probability(1) - oracle::logistic(0.1, 1.0, grid[g])) <= 1e-6);
}

TEST_CASE("flows conserve mass and stay in [0, 1]") {
  const SirdSpec spec;
  const auto k = sird_kernel(spec);
  const auto grid = uniform_grid(0.0, 1.0, 101);
  const auto r = solve_nonlinear_forward(k, spec.initial_pmf, grid);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double s = 0.0;
    for (double p : r.flow[g].probabilities()) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
      s += p;
    }
    CHECK(std::abs(s - 1.0) <= 1e-8);
  }
  CHECK(r.renormalized_steps == 0);
}

TEST_CASE("stability guard refuses coarse steps and suggests one") {
  auto k = two_state_kernel(10.0);
  try {
    solve_linear_forward(k, nullptr, std::vector<double>{1.0, 0.0}, uniform_grid(0, 1, 5));
    FAIL("expected StabilityError");
  } catch (const StabilityError& e) {
    CHECK(std::string(e.what()).find("0.045") != std::string::npos);
  }
}

TEST_CASE("measure-dependent kernel without a frozen flow is rejected") {
  const auto k = sird_kernel(SirdSpec{});
  CHECK_THROWS_AS(solve_linear_forward(k, nullptr, std::vector<double>{1, 0, 0, 0}, uniform_grid(0, 1, 11)),
                  InvalidArgument);
}

TEST_CASE("flow csv") {
  const auto k = two_state_kernel(0.5);
  const auto r = solve_linear_forward(k, nullptr, std::vector<double>{1.0, 0.0}, uniform_grid(0, 1, 3));
  std::ostringstream os;
  write_flow_csv(os, k.space, r.flow);
  const std::string s = os.str();
  CHECK(s.rfind("t,state_label,probability\n0,1,1\n0,2,0\n0.5,1,", 0) == 0);
}
