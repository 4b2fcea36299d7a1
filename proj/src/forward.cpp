#include "mfje/forward.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "mfje/csv.hpp"
#include "mfje/error.hpp"

namespace mfje {

namespace {

[[noreturn]] void fail(const std::string& what) { throw InvalidArgument("forward", what); }

void check_pmf(std::span<const double> p, std::size_t m) {
  if (p.size() != m) fail("initial pmf length differs from the number of states");
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) fail("initial pmf has a negative entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-12) fail("initial pmf does not sum to 1");
}

void check_stability(const IntensityKernel& kernel, std::span<const double> grid) {
  if (grid.size() < 2) fail("grid needs at least two points");
  double hmax = 0.0;
  for (std::size_t k = 1; k < grid.size(); ++k) {
    const double h = grid[k] - grid[k - 1];
    if (!(h > 0.0)) fail("grid is not strictly increasing");
    hmax = std::max(hmax, h);
  }
  const double c = kernel.bounds.c_lambda;
  if (hmax * 2.0 * c >= 1.0) {
    std::ostringstream os;
    os.precision(6);
    os << "step " << hmax << " violates h * 2 * C_lambda < 1 for C_lambda = " << c << "; use h <= "
       << 0.9 / (2.0 * c);
    throw StabilityError("forward", os.str());
  }
}

// Clips to [0, 1] and renormalises when the mass has drifted; returns the
// drift that was observed and whether the vector was changed.
bool normalise(std::span<double> p, double threshold, double& drift) {
  double total = 0.0;
  bool clipped = false;
  for (double& v : p) {
    if (v < 0.0) {
      v = 0.0;
      clipped = true;
    } else if (v > 1.0) {
      v = 1.0;
      clipped = true;
    }
    total += v;
  }
  drift = std::abs(total - 1.0);
  if (!clipped && drift <= threshold) return false;
  for (double& v : p) v /= total;
  return true;
}

// Snapshot used as the measure argument at RK4 stages. Stage pmfs may carry
// rounding-level negatives; those are clipped before the kernel sees them.
class StageMeasure {
 public:
  explicit StageMeasure(std::size_t m) : snapshot_(MeasureSnapshot::dirac_pmf(m, 0)) {}

  const MeasureSnapshot& set(std::span<const double> p, double t) {
    auto q = snapshot_.mutable_probabilities();
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = std::max(0.0, p[i]);
    snapshot_.set_time(t);
    return snapshot_;
  }

 private:
  MeasureSnapshot snapshot_;
};

template <class StageGenerator>
ForwardResult integrate(const IntensityKernel& kernel, std::span<const double> initial_pmf,
                        std::span<const double> grid, const ForwardOptions& options, StageGenerator&& generator_at) {
  const std::size_t m = kernel.space.size();
  check_pmf(initial_pmf, m);
  check_stability(kernel, grid);

  std::vector<MeasureSnapshot> snaps;
  snaps.reserve(grid.size());
  std::vector<double> p(initial_pmf.begin(), initial_pmf.end());
  snaps.push_back(MeasureSnapshot::pmf(p, grid[0]));

  GeneratorMatrix q(m);
  std::vector<double> k1(m), k2(m), k3(m), k4(m), tmp(m);
  ForwardResult result;
  for (std::size_t s = 1; s < grid.size(); ++s) {
    const double t = grid[s - 1];
    const double h = grid[s] - t;

    generator_at(t, std::span<const double>(p), q);
    q.apply_left(p, k1);
    for (std::size_t i = 0; i < m; ++i) tmp[i] = p[i] + 0.5 * h * k1[i];
    generator_at(t + 0.5 * h, std::span<const double>(tmp), q);
    q.apply_left(tmp, k2);
    for (std::size_t i = 0; i < m; ++i) tmp[i] = p[i] + 0.5 * h * k2[i];
    generator_at(t + 0.5 * h, std::span<const double>(tmp), q);
    q.apply_left(tmp, k3);
    for (std::size_t i = 0; i < m; ++i) tmp[i] = p[i] + h * k3[i];
    generator_at(t + h, std::span<const double>(tmp), q);
    q.apply_left(tmp, k4);
    for (std::size_t i = 0; i < m; ++i) p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);

    double drift = 0.0;
    if (normalise(p, options.renormalize_threshold, drift)) ++result.renormalized_steps;
    result.max_drift = std::max(result.max_drift, drift);
    // Sub-1e-12 drift is absorbed into the snapshot so it stays a valid pmf.
    double total = 0.0;
    for (double v : p) total += v;
    if (std::abs(total - 1.0) > 1e-12)
      for (double& v : p) v /= total;
    snaps.push_back(MeasureSnapshot::pmf(p, grid[s]));
  }
  result.flow = MarginalFlow(std::vector<double>(grid.begin(), grid.end()), std::move(snaps));
  return result;
}

}  // namespace

void GeneratorMatrix::apply_left(std::span<const double> p, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < m_; ++i) {
    const double pi = p[i];
    if (pi == 0.0) continue;
    const double* row = &q_[i * m_];
    for (std::size_t j = 0; j < m_; ++j) out[j] += pi * row[j];
  }
}

void GeneratorMatrix::validate() const {
  for (std::size_t i = 0; i < m_; ++i) {
    double sum = 0.0, scale = 0.0;
    for (std::size_t j = 0; j < m_; ++j) {
      const double v = (*this)(i, j);
      if (i != j && v < 0.0) fail("generator has a negative off-diagonal entry");
      sum += v;
      scale = std::max(scale, std::abs(v));
    }
    if (std::abs(sum) > 1e-12 * std::max(1.0, scale)) fail("generator row does not sum to zero");
  }
}

void build_generator(const IntensityKernel& kernel, const MeasureSnapshot& snapshot, double t, GeneratorMatrix& out) {
  const StateSpace& space = kernel.space;
  if (!space.is_finite()) fail("build_generator requires a finite state space");
  if (!kernel.mark_atoms) fail("kernel '" + kernel.name + "' has no jump atoms; cannot build a generator");
  const std::size_t m = space.size();
  if (out.size() != m) out = GeneratorMatrix(m);
  JumpAtoms atoms(space.dim());
  Point y(space.dim());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) out(i, j) = 0.0;
    const Point& x = space.point(i);
    atoms.clear();
    kernel.mark_atoms(t, x, snapshot, atoms);
    double diag = 0.0;
    for (std::size_t a = 0; a < atoms.size(); ++a) {
      const double r = atoms.rate(a);
      if (r == 0.0) continue;
      auto z = atoms.jump(a);
      for (std::size_t c = 0; c < y.size(); ++c) y[c] = x[c] + z[c];
      const auto j = space.index_of(y);
      if (!j || *j == i) {
        std::ostringstream os;
        os << "jump mass escapes the state space: state " << i << " (" << space.label(i) << "), jump z=(";
        for (std::size_t c = 0; c < z.size(); ++c) os << (c ? "," : "") << z[c];
        os << ")";
        fail(os.str());
      }
      if (r < 0.0) fail("kernel produced a negative jump intensity at state " + space.label(i));
      out(i, *j) += r;
      diag += r;
    }
    out(i, i) = -diag;
  }
}

GeneratorMatrix build_generator(const IntensityKernel& kernel, const MeasureSnapshot& snapshot, double t) {
  GeneratorMatrix q(kernel.space.size());
  build_generator(kernel, snapshot, t, q);
  return q;
}

ForwardResult solve_linear_forward(const IntensityKernel& kernel, const MarginalFlow* frozen,
                                   std::span<const double> initial_pmf, std::span<const double> grid,
                                   const ForwardOptions& options) {
  if (!kernel.space.is_finite()) fail("forward solvers require a finite state space");
  if (kernel.measure_dependent && !frozen)
    fail("kernel '" + kernel.name + "' is measure-dependent; solve_linear_forward needs a frozen flow");
  const std::size_t m = kernel.space.size();
  if (frozen && (frozen->size() == 0 || !(*frozen)[0].is_pmf() || (*frozen)[0].size() != m))
    fail("frozen flow is not a pmf flow on this state space");
  StageMeasure stage(m);
  std::vector<double> interp(m);
  const MeasureSnapshot fixed = MeasureSnapshot::pmf(std::vector<double>(initial_pmf.begin(), initial_pmf.end()));
  return integrate(kernel, initial_pmf, grid, options, [&](double t, std::span<const double>, GeneratorMatrix& q) {
    if (frozen) {
      frozen->interpolate_pmf(t, interp);
      build_generator(kernel, stage.set(interp, t), t, q);
    } else {
      build_generator(kernel, fixed, t, q);
    }
  });
}

ForwardResult solve_nonlinear_forward(const IntensityKernel& kernel, std::span<const double> initial_pmf,
                                      std::span<const double> grid, const ForwardOptions& options) {
  if (!kernel.space.is_finite()) fail("forward solvers require a finite state space");
  StageMeasure stage(kernel.space.size());
  return integrate(kernel, initial_pmf, grid, options, [&](double t, std::span<const double> p, GeneratorMatrix& q) {
    build_generator(kernel, stage.set(p, t), t, q);
  });
}

void write_flow_csv(std::ostream& os, const StateSpace& space, const MarginalFlow& flow) {
  CsvRow(os) << "t" << "state_label" << "probability";
  for (std::size_t k = 0; k < flow.size(); ++k) {
    auto p = flow[k].probabilities();
    for (std::size_t i = 0; i < p.size(); ++i) CsvRow(os) << flow.grid()[k] << space.label(i) << p[i];
  }
}

}  // namespace mfje
