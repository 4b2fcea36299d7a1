#include <cmath>

#include "doctest.h"
#include "mfje/error.hpp"
#include "mfje/forward.hpp"
#include "mfje/insurance_life.hpp"
#include "mfje/kernel.hpp"

using namespace mfje;

namespace {

// Rate table mu(x, rho, {y}) over all pairs of states.
std::vector<double> rate_table(const IntensityKernel& k, const MeasureSnapshot& rho, double t) {
  const std::size_t m = k.space.size();
  std::vector<double> table(m * m, 0.0);
  JumpAtoms atoms(k.space.dim());
  for (std::size_t i = 0; i < m; ++i) {
    k.mark_atoms(t, k.space.point(i), rho, atoms);
    Point y(k.space.dim());
    for (std::size_t a = 0; a < atoms.size(); ++a) {
      for (std::size_t c = 0; c < y.size(); ++c) y[c] = k.space.point(i)[c] + atoms.jump(a)[c];
      table[i * m + *k.space.index_of(y)] += atoms.rate(a);
    }
  }
  return table;
}

IntensityKernel zero_destination_js() {
  DestinationKernel dk;
  dk.name = "zero";
  dk.space = StateSpace::finite({{0.0}, {1.0}});
  dk.rate = [](double, PointView, const MeasureSnapshot&) { return 0.0; };
  dk.destination_atoms = [](double, PointView, const MeasureSnapshot&, JumpAtoms& out) { out.reset(1); };
  return jd_to_js(dk);
}

}  // namespace

TEST_CASE("state spaces") {
  const auto s = sird_space();
  CHECK(s.size() == 4);
  CHECK(s.index_of(Point{3.0}) == 2u);
  CHECK_FALSE(s.contains(Point{2.5}));
  CHECK(s.jump_values().size() == 6);
  CHECK_THROWS_AS(StateSpace::finite({{1.0}, {1.0}}), InvalidArgument);
  CHECK_THROWS_AS(StateSpace::finite({}), InvalidArgument);
}

TEST_CASE("snapshots validate weights") {
  CHECK_NOTHROW(MeasureSnapshot::pmf({0.25, 0.75}).validate());
  CHECK_THROWS(MeasureSnapshot::pmf({0.5, 0.6}).validate());
  CHECK_THROWS(MeasureSnapshot::pmf({-0.1, 1.1}).validate());
  CHECK_THROWS(MeasureSnapshot::cloud(1, {}).validate());
}

TEST_CASE("destination rate 0.3 from S to I becomes jump +1 at rate 0.3") {
  SirdSpec spec;
  spec.death_rates = {PiecewiseLinear{0.0}, PiecewiseLinear{0.0}, PiecewiseLinear{0.0}};
  const auto k = sird_kernel(spec);  // beta1 = 3, rho({I}) = 0.1
  JumpAtoms atoms(1);
  k.mark_atoms(0.0, Point{1.0}, MeasureSnapshot::pmf({0.9, 0.1, 0.0, 0.0}), atoms);
  REQUIRE(atoms.size() == 1);
  CHECK(atoms.jump(0)[0] == 1.0);
  CHECK(atoms.rate(0) == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("zero destination kernel converts to a zero kernel") {
  const auto k = zero_destination_js();
  CHECK(k.rate(0.0, Point{0.0}, MeasureSnapshot::pmf({1.0, 0.0})) == 0.0);
  const auto q = build_generator(k, MeasureSnapshot::pmf({1.0, 0.0}), 0.0);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) CHECK(q(i, j) == 0.0);
}

TEST_CASE("js to jd to js round trip keeps the rate table bit for bit") {
  SirdSpec spec;
  spec.beta1 = PiecewiseLinear({0.0, 0.5, 1.0}, {2.0, 3.3, 1.7});
  const auto k = sird_kernel(spec);
  const auto back = jd_to_js(js_to_jd(k));
  for (double t : {0.0, 0.3, 0.77}) {
    const auto rho = MeasureSnapshot::pmf({0.6, 0.3, 0.05, 0.05});
    CHECK(rate_table(k, rho, t) == rate_table(back, rho, t));
  }
}

TEST_CASE("generator row for S with infection 0.3 and death 0.1") {
  SirdSpec spec;
  spec.death_rates = {PiecewiseLinear{0.1}, PiecewiseLinear{0.1}, PiecewiseLinear{0.01}};
  const auto q = build_generator(sird_kernel(spec), MeasureSnapshot::pmf({0.9, 0.1, 0.0, 0.0}), 0.0);
  CHECK(q(0, 0) == doctest::Approx(-0.4).epsilon(1e-14));
  CHECK(q(0, 1) == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(q(0, 2) == 0.0);
  CHECK(q(0, 3) == doctest::Approx(0.1).epsilon(1e-14));
  for (std::size_t i = 0; i < 4; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < 4; ++j) row += q(i, j);
    CHECK(std::abs(row) <= 1e-12);
  }
  CHECK_NOTHROW(q.validate());
}

TEST_CASE("generator rejects jumps leaving the space") {
  auto k = finite_kernel("leaky", StateSpace::finite({{0.0}, {1.0}}, {"a", "b"}), false,
                         [](double, PointView, const MeasureSnapshot&, JumpAtoms& out) {
                           const double z = 5.0;
                           out.reset(1);
                           out.add({&z, 1}, 1.0);
                         },
                         {1.0, 5.0, 1.0, {}});
  try {
    build_generator(k, MeasureSnapshot::pmf({1.0, 0.0}), 0.0);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("state 0 (a)") != std::string::npos);
  }
}

TEST_CASE("sampled SIRD jumps land in the state space") {
  const auto k = sird_kernel(SirdSpec{});
  Rng rng(7);
  const auto rho = MeasureSnapshot::pmf({0.5, 0.3, 0.1, 0.1});
  for (std::size_t i = 0; i < 3; ++i) {
    const Point x = k.space.point(i);
    for (int s = 0; s < 10000; ++s) {
      const Point z = k.mark_sampler(0.5, x, rho, rng);
      CHECK(k.space.contains(Point{x[0] + z[0]}));
    }
  }
}

TEST_CASE("audit: constant rate at its bound passes") {
  const auto k = poisson_counting_kernel(2.0);
  std::vector<Probe> probes{{0.0, Point{0.0}, MeasureSnapshot::dirac(Point{0.0})},
                            {1.0, Point{4.0}, MeasureSnapshot::dirac(Point{0.0})}};
  const auto r = audit_regularity(k, probes, {});
  CHECK(r.ok());
  CHECK(r.max_rate == 2.0);
}

TEST_CASE("audit: rate above the declared bound is flagged at that probe") {
  auto k = poisson_counting_kernel(2.0);
  k.rate = [](double, PointView x, const MeasureSnapshot&) { return x[0] > 0.5 ? 3.0 : 2.0; };
  std::vector<Probe> probes{{0.0, Point{0.0}, MeasureSnapshot::dirac(Point{0.0})},
                            {0.0, Point{1.0}, MeasureSnapshot::dirac(Point{0.0})}};
  const auto r = audit_regularity(k, probes, {});
  REQUIRE(r.violations.size() == 1);
  CHECK(r.violations[0].kind == AuditViolation::Kind::rate_bound);
  CHECK(r.violations[0].probe == 1);
}

TEST_CASE("audit: SIRD Lipschitz ratio in the measure is close to beta") {
  const auto k = sird_kernel(SirdSpec{});
  std::vector<ProbePair> pairs{{{0.5, Point{1.0}, MeasureSnapshot::pmf({1.0, 0.0, 0.0, 0.0})},
                                {0.5, Point{1.0}, MeasureSnapshot::pmf({0.9, 0.1, 0.0, 0.0})}}};
  std::vector<Probe> probes{pairs[0].a, pairs[0].b};
  AuditOptions opt;
  opt.seed = 3;
  const auto r = audit_regularity(k, probes, pairs, opt);
  CHECK(r.lipschitz_ratios[0] == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(r.ok());
  const auto again = audit_regularity(k, probes, pairs, opt);
  CHECK(again.lipschitz_ratios == r.lipschitz_ratios);
  CHECK(again.moments == r.moments);
}

TEST_CASE("audit: escaping sampler is reported") {
  auto k = sird_kernel(SirdSpec{});
  k.mark_sampler = [](double, PointView, const MeasureSnapshot&, Rng&) { return Point{0.5}; };
  std::vector<Probe> probes{{0.0, Point{1.0}, MeasureSnapshot::pmf({0.9, 0.1, 0.0, 0.0})}};
  AuditOptions opt;
  opt.samples_per_probe = 100;
  const auto r = audit_regularity(k, probes, {}, opt);
  CHECK(r.escaping_jumps == 100);
  CHECK_FALSE(r.ok());
}

TEST_CASE("marginal flows are piecewise constant from the left") {
  MarginalFlow f({0.0, 0.5, 1.0}, {MeasureSnapshot::pmf({1.0, 0.0}, 0.0), MeasureSnapshot::pmf({0.5, 0.5}, 0.5),
                                    MeasureSnapshot::pmf({0.0, 1.0}, 1.0)});
  CHECK(f.at(0.49).probability(0) == 1.0);
  CHECK(f.at(0.5).probability(0) == 0.5);
  CHECK(f.at(0.99).probability(0) == 0.5);
  CHECK(f.at(1.0).probability(0) == 0.0);
}
