#pragma once

// Mean-field law flow by Picard iteration, and linearised transition laws.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "mfje/forward.hpp"
#include "mfje/kernel.hpp"
#include "mfje/parallel.hpp"

namespace mfje {

struct PicardOptions {
  double tol = 1e-6;
  std::size_t max_iter = 100;
  // Continuous state spaces only.
  std::size_t particles = 100000;
  std::uint64_t seed = 0;
  unsigned workers = default_workers();
  // Particle cap for exact transport between clouds in R^d, d > 1.
  std::size_t transport_cap = 512;
};

struct PicardIteration {
  std::size_t iteration = 0;
  double sup_w1_change = 0.0;
  double wall_time_ms = 0.0;
};

struct PicardResult {
  MarginalFlow flow;
  std::vector<PicardIteration> log;
  bool converged = false;
  std::size_t renormalized_steps = 0;
};

// flow^0 is the initial law held constant; flow^k solves the linear system
// with the measure argument frozen at flow^(k-1). Finite spaces use the RK4
// forward solver, other spaces the empirical law of `particles` iid linear
// paths on common random numbers across iterations. Stops once the sup over
// the grid of W1(flow^k_t, flow^(k-1)_t) is at most tol. Throws
// NonContraction after three consecutive increases.
PicardResult picard_solve(const IntensityKernel& kernel, const MeasureSnapshot& initial_law,
                          std::span<const double> grid, const PicardOptions& options = {});

// Picard on consecutive segments [s_0, s_1], [s_1, s_2], ... of the grid, each
// started from the terminal law of the previous one. `splits` are grid times
// strictly inside the horizon.
PicardResult picard_solve_chained(const IntensityKernel& kernel, const MeasureSnapshot& initial_law,
                                  std::span<const double> grid, std::span<const double> splits,
                                  const PicardOptions& options = {});

// C_mu T e^{C_mu T}; the Picard map contracts when this is below 1.
double picard_contraction_bound(double c_mu, double horizon_length);

// Law of the linearised process started at x with the flow frozen.
// Finite spaces: forward solve from delta_x. Otherwise `particles` iid paths.
MarginalFlow linearised_transition(const IntensityKernel& kernel, const MarginalFlow& frozen_flow, PointView x,
                                   std::span<const double> grid, const PicardOptions& options = {});

// Snapshots of iid linear paths on the grid, each path started from a draw of
// `initial_law` on stream (seed, {particle, purpose}).
MarginalFlow particle_flow(const IntensityKernel& kernel, const MarginalFlow* frozen, const MeasureSnapshot& initial_law,
                           std::span<const double> grid, std::size_t particles, std::uint64_t seed, unsigned workers);

// Sup over grid points of the W1 distance between two flows on a common grid.
double flow_distance(const StateSpace& space, const MarginalFlow& a, const MarginalFlow& b,
                     std::size_t transport_cap = 512, std::uint64_t seed = 0);

// CSV rows (iteration, sup_W1_change, wall_time_ms).
void write_picard_log_csv(std::ostream& os, std::span<const PicardIteration> log);

}  // namespace mfje
