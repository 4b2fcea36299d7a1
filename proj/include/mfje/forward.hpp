#pragma once

// Forward equations on finite state spaces. On a finite E the integral over
// jump sizes collapses to a sum, so the (linear or non-linear) forward
// integro-differential equation becomes dp/dt = p Q(t, rho) with a generator
// Q built from the kernel's jump atoms.

#include <cstddef>
#include <span>
#include <vector>

#include "mfje/kernel.hpp"

namespace mfje {

class GeneratorMatrix {
 public:
  explicit GeneratorMatrix(std::size_t m = 0) : m_(m), q_(m * m, 0.0) {}
  std::size_t size() const noexcept { return m_; }
  double& operator()(std::size_t i, std::size_t j) { return q_[i * m_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return q_[i * m_ + j]; }

  // out = p Q (row vector times matrix).
  void apply_left(std::span<const double> p, std::span<double> out) const;

  // Off-diagonals nonnegative, rows summing to zero within 1e-12.
  void validate() const;

 private:
  std::size_t m_;
  std::vector<double> q_;
};

// Q[i][j] = mu_t(x_i, snapshot, {x_j - x_i}); the diagonal balances each row.
// Throws when a jump atom leaves the state space, naming the state and jump.
GeneratorMatrix build_generator(const IntensityKernel& kernel, const MeasureSnapshot& snapshot, double t);
void build_generator(const IntensityKernel& kernel, const MeasureSnapshot& snapshot, double t, GeneratorMatrix& out);

struct ForwardOptions {
  // Clip-and-renormalise when |sum - 1| exceeds this after a step.
  double renormalize_threshold = 1e-10;
};

struct ForwardResult {
  MarginalFlow flow;
  // Steps at which clipping or renormalisation changed the solution.
  std::size_t renormalized_steps = 0;
  double max_drift = 0.0;
};

// Classical RK4 with one step per grid interval. With `frozen` the measure
// argument at stage times is the cubic interpolant of the frozen flow; without
// it the kernel must be measure-independent. Throws StabilityError when
// h * 2 * C_lambda >= 1 for some step h.
ForwardResult solve_linear_forward(const IntensityKernel& kernel, const MarginalFlow* frozen,
                                   std::span<const double> initial_pmf, std::span<const double> grid,
                                   const ForwardOptions& options = {});

// RK4 where each stage rebuilds the generator from the stage pmf itself.
ForwardResult solve_nonlinear_forward(const IntensityKernel& kernel, std::span<const double> initial_pmf,
                                      std::span<const double> grid, const ForwardOptions& options = {});

// CSV rows (t, state_label, probability).
void write_flow_csv(std::ostream& os, const StateSpace& space, const MarginalFlow& flow);

}  // namespace mfje
