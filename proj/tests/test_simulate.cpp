#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "mfje/error.hpp"
#include "mfje/forward.hpp"
#include "mfje/insurance_life.hpp"
#include "mfje/insurance_nonlife.hpp"
#include "mfje/metrics.hpp"
#include "mfje/simulate.hpp"
#include "mfje/stats.hpp"

using namespace mfje;

TEST_CASE("zero rate gives a constant path") {
  Rng rng(1);
  const auto p = simulate_linear(poisson_counting_kernel(0.0), nullptr, Point{3.0}, {0.0, 1.0}, rng);
  CHECK(p.jump_count() == 0);
  CHECK(p.value_at(0.7)[0] == 3.0);
}

TEST_CASE("Poisson counts have mean lambda T") {
  const auto k = poisson_counting_kernel(2.0);
  std::vector<double> counts;
  for (std::uint64_t i = 0; i < 100000; ++i) {
    Rng rng = Rng::stream(11, {i});
    counts.push_back(static_cast<double>(simulate_linear(k, nullptr, Point{0.0}, {0.0, 1.0}, rng).jump_count()));
  }
  const auto e = mean_estimate(counts);
  CHECK(std::abs(e.mean - 2.0) <= 3.0 * e.std_error);
}

TEST_CASE("dead is absorbing") {
  const SirdSpec spec;
  const auto k = sird_kernel(spec);
  const auto flow = solve_nonlinear_forward(k, spec.initial_pmf, uniform_grid(0, 1, 101)).flow;
  Rng rng(5);
  const auto p = simulate_linear(k, &flow, Point{4.0}, {0.0, 1.0}, rng);
  CHECK(p.jump_count() == 0);
}

TEST_CASE("rate above the declared bound aborts the simulation") {
  auto k = poisson_counting_kernel(1.0);
  k.rate = [](double, PointView, const MeasureSnapshot&) { return 1.5; };
  Rng rng(2);
  CHECK_THROWS_AS(simulate_linear(k, nullptr, Point{0.0}, {0.0, 5.0}, rng), BoundViolation);
}

TEST_CASE("paths reject bad events") {
  JumpPath p({0.0, 1.0}, Point{1.0});
  p.push(0.5, Point{2.0});
  CHECK_THROWS(p.push(0.4, Point{3.0}));
  CHECK_THROWS(p.push(1.5, Point{3.0}));
  CHECK(p.value_at(0.5)[0] == 2.0);
  CHECK(p.value_at(0.49)[0] == 1.0);
}

TEST_CASE("one individual with a measure-dependent kernel") {
  SirdSpec spec;
  spec.initial_pmf = {0.0, 1.0, 0.0, 0.0};
  const auto k = sird_kernel(spec);
  const auto e = simulate_interacting(k, sird_initial_law(spec), 1, spec.horizon, {4, 0});
  REQUIRE(e.size() == 1);
  CHECK_NOTHROW(e[0].validate(k.space));
  // The empirical law is the point mass at the individual's own state.
  const auto snap = e.empirical_snapshot(0.0);
  CHECK(snap.probability(1) == 1.0);
}

TEST_CASE("without interaction an individual's law matches the linear process") {
  const auto k = two_state_kernel(0.7, 0.4);
  const auto law = MeasureSnapshot::pmf({1.0, 0.0});
  const std::size_t reps = 10000;
  std::vector<double> a, b;
  for (std::size_t r = 0; r < reps; ++r) {
    const auto e = simulate_interacting(k, law, 3, {0.0, 2.0}, {21, r});
    a.push_back(static_cast<double>(e[0].jump_count()));
    Rng rng = Rng::stream(22, {r});
    b.push_back(static_cast<double>(simulate_linear(k, nullptr, Point{1.0}, {0.0, 2.0}, rng).jump_count()));
  }
  // Two-sample KS on the jump-count distribution at the 0.1% level.
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double ks = 0.0;
  for (double v = 0.0; v <= 20.0; v += 1.0) {
    const double fa = static_cast<double>(std::upper_bound(a.begin(), a.end(), v) - a.begin()) / reps;
    const double fb = static_cast<double>(std::upper_bound(b.begin(), b.end(), v) - b.begin()) / reps;
    ks = std::max(ks, std::abs(fa - fb));
  }
  CHECK(ks < 1.95 * std::sqrt(2.0 / reps));
}

TEST_CASE("all infections resolve over a long horizon") {
  SirdSpec spec;
  spec.beta1 = PiecewiseLinear(20.0);
  spec.horizon = {0.0, 60.0};
  const std::size_t n = 100;
  std::vector<Point> initials(n, Point{2.0});
  initials[0] = Point{1.0};
  const auto e = simulate_interacting(sird_kernel(spec), initials, spec.horizon, {8, 0});
  const auto snap = e.empirical_snapshot(spec.horizon.end);
  CHECK(snap.probability(2) + snap.probability(3) == doctest::Approx(1.0));
}

TEST_CASE("interacting runs do not depend on scheduling") {
  const SirdSpec spec;
  const auto k = sird_kernel(spec);
  const auto a = simulate_interacting(k, sird_initial_law(spec), 50, spec.horizon, {9, 3});
  const auto b = simulate_interacting(k, sird_initial_law(spec), 50, spec.horizon, {9, 3});
  std::ostringstream sa, sb;
  write_paths_csv(sa, 3, a);
  write_paths_csv(sb, 3, b);
  CHECK(sa.str() == sb.str());
}

TEST_CASE("decoupled coupling with identical initials has zero gap") {
  const auto k = two_state_kernel(0.8, 0.3);
  const auto law = MeasureSnapshot::pmf({0.6, 0.4});
  const auto flow = solve_linear_forward(k, nullptr, law.probabilities(), uniform_grid(0, 1, 101)).flow;
  const auto run = simulate_coupled(k, flow, 20, identical_initials(k.space, law), {0.0, 1.0}, {1, 0});
  for (const auto& p : run.pairs) CHECK(p.sup_distance == 0.0);
  CHECK(chaos_gap(run.pairs).mean == 0.0);
}

TEST_CASE("coupled jumps happen only at shared clock times") {
  const SirdSpec spec;
  const auto k = sird_kernel(spec);
  const auto flow = solve_nonlinear_forward(k, spec.initial_pmf, uniform_grid(0, 1, 1001)).flow;
  const auto run =
      simulate_coupled(k, flow, 30, identical_initials(k.space, sird_initial_law(spec)), spec.horizon, {2, 1}, true);
  for (const auto& p : run.pairs) {
    for (const auto* path : {&p.interacting, &p.meanfield})
      for (const auto& ev : path->events())
        CHECK(std::binary_search(p.clock.begin(), p.clock.end(), ev.time));
    CHECK(p.sup_distance >= 0.0);
  }
  CHECK_FALSE(run.crn_fallback);
}

TEST_CASE("comonotone Gamma marks coincide for the same state and law") {
  GammaClaimsSpec spec;
  const auto k = gamma_claims_kernel(spec);
  const auto rho = MeasureSnapshot::dirac(Point{0.0, 0.0, 0.0});
  for (double u : {0.01, 0.3, 0.99}) {
    const Point a = k.mark_quantile(0.2, Point{0.0, 0.0, 0.0}, rho, u);
    const Point b = k.mark_quantile(0.2, Point{0.0, 0.0, 0.0}, rho, u);
    CHECK(a == b);
    CHECK(a[0] > 0.0);
    CHECK(a[1] == 1.0);
  }
}

TEST_CASE("thinning matches the forward solver at the horizon") {
  const auto k = two_state_kernel(1.2, 0.5);
  const auto p = solve_linear_forward(k, nullptr, std::vector<double>{1.0, 0.0}, uniform_grid(0, 1, 1001))
                     .flow[1000]
                     .probability(0);
  const std::size_t n = 20000;
  std::size_t in_first = 0;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = Rng::stream(31, {i});
    in_first += simulate_linear(k, nullptr, Point{1.0}, {0.0, 1.0}, rng).final_state()[0] == 1.0;
  }
  CHECK(std::abs(static_cast<double>(in_first) / n - p) <= 3.0 * std::sqrt(p * (1 - p) / n));
}

TEST_CASE("paths csv layout") {
  Ensemble e(StateSpace::boxed(1), {JumpPath({0.0, 1.0}, Point{0.0})});
  std::ostringstream os;
  write_paths_csv_header(os, 1);
  write_paths_csv(os, 0, e);
  CHECK(os.str() == "replication,individual,event_time,x0\n0,0,0,0\n");
}
