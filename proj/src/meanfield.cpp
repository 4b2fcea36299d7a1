#include "mfje/meanfield.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <sstream>

#include "mfje/csv.hpp"
#include "mfje/error.hpp"
#include "mfje/metrics.hpp"
#include "mfje/simulate.hpp"

namespace mfje {

namespace {

[[noreturn]] void fail(const std::string& what) { throw InvalidArgument("meanfield", what); }

void check_grid(std::span<const double> grid) {
  if (grid.size() < 2) fail("grid needs at least two points");
  for (std::size_t k = 1; k < grid.size(); ++k)
    if (!(grid[k] > grid[k - 1])) fail("grid is not strictly increasing");
}

MarginalFlow constant_flow(const MeasureSnapshot& law, std::span<const double> grid) {
  std::vector<MeasureSnapshot> snaps;
  snaps.reserve(grid.size());
  for (double t : grid) {
    snaps.push_back(law);
    snaps.back().set_time(t);
  }
  return MarginalFlow(std::vector<double>(grid.begin(), grid.end()), std::move(snaps));
}

std::string non_contraction_message(const IntensityKernel& kernel, std::span<const double> grid,
                                    const std::vector<PicardIteration>& log) {
  std::ostringstream os;
  os << "Picard iterates moved apart for 3 consecutive iterations (";
  for (std::size_t i = log.size() - 4; i < log.size(); ++i) os << (i + 4 == log.size() ? "" : " ") << log[i].sup_w1_change;
  os << "). ";
  const double len = grid.back() - grid.front();
  if (kernel.bounds.c_mu) {
    os << "C_mu T e^{C_mu T} = " << picard_contraction_bound(*kernel.bounds.c_mu, len) << " on a horizon of length "
       << len << "; ";
  } else {
    os << "the kernel declares no C_mu; ";
  }
  os << "shorten the horizon until C_mu T e^{C_mu T} < 1 and chain the segments with picard_solve_chained";
  return os.str();
}

}  // namespace

double picard_contraction_bound(double c_mu, double horizon_length) {
  const double x = c_mu * horizon_length;
  return x * std::exp(x);
}

MarginalFlow particle_flow(const IntensityKernel& kernel, const MarginalFlow* frozen, const MeasureSnapshot& initial_law,
                           std::span<const double> grid, std::size_t particles, std::uint64_t seed, unsigned workers) {
  check_grid(grid);
  if (particles == 0) fail("particle count must be positive");
  const std::size_t d = kernel.space.dim();
  const std::size_t g = grid.size();
  const Horizon horizon{grid.front(), grid.back()};
  std::vector<std::vector<double>> coords(g, std::vector<double>(particles * d));
  parallel_for(particles, workers, [&](std::size_t i) {
    Rng init = Rng::stream(seed, {i, stream_purpose::initial});
    const Point x0 = draw_from(kernel.space, initial_law, init);
    Rng rng = Rng::stream(seed, {i, stream_purpose::clock});
    const JumpPath path = simulate_linear(kernel, frozen, x0, horizon, rng);
    // Walk the events and the grid together.
    const auto& ev = path.events();
    std::size_t e = 0;
    PointView cur = path.initial();
    for (std::size_t k = 0; k < g; ++k) {
      while (e < ev.size() && ev[e].time <= grid[k]) cur = ev[e++].state;
      std::copy(cur.begin(), cur.end(), coords[k].begin() + static_cast<std::ptrdiff_t>(i * d));
    }
  });
  std::vector<MeasureSnapshot> snaps;
  snaps.reserve(g);
  for (std::size_t k = 0; k < g; ++k) snaps.push_back(MeasureSnapshot::cloud(d, std::move(coords[k]), {}, grid[k]));
  return MarginalFlow(std::vector<double>(grid.begin(), grid.end()), std::move(snaps));
}

double flow_distance(const StateSpace& space, const MarginalFlow& a, const MarginalFlow& b, std::size_t transport_cap,
                     std::uint64_t seed) {
  if (a.size() != b.size()) fail("flow_distance: flows have different grids");
  double sup = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a.grid()[k] != b.grid()[k]) fail("flow_distance: flows have different grids");
    sup = std::max(sup, snapshot_distance(space, a[k], b[k], transport_cap, seed + k));
  }
  return sup;
}

PicardResult picard_solve(const IntensityKernel& kernel, const MeasureSnapshot& initial_law,
                          std::span<const double> grid, const PicardOptions& options) {
  if (!(options.tol > 0.0)) fail("tol must be positive");
  if (options.max_iter == 0) fail("max_iter must be positive");
  check_grid(grid);
  const bool finite = kernel.space.is_finite();
  if (finite != initial_law.is_pmf()) fail("initial law must be a pmf on finite spaces and a cloud otherwise");

  std::vector<double> p0;
  if (finite) p0.assign(initial_law.probabilities().begin(), initial_law.probabilities().end());

  PicardResult result;
  MarginalFlow prev = constant_flow(initial_law, grid);
  unsigned increases = 0;
  for (std::size_t k = 1; k <= options.max_iter; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    MarginalFlow next;
    if (finite) {
      ForwardResult fr = solve_linear_forward(kernel, &prev, p0, grid);
      result.renormalized_steps += fr.renormalized_steps;
      next = std::move(fr.flow);
    } else {
      next = particle_flow(kernel, &prev, initial_law, grid, options.particles, options.seed, options.workers);
    }
    const double change = flow_distance(kernel.space, next, prev, options.transport_cap, options.seed);
    const auto t1 = std::chrono::steady_clock::now();
    result.log.push_back({k, change, std::chrono::duration<double, std::milli>(t1 - t0).count()});
    prev = std::move(next);

    if (change <= options.tol) {
      result.converged = true;
      break;
    }
    if (result.log.size() >= 2 && change > result.log[result.log.size() - 2].sup_w1_change)
      ++increases;
    else
      increases = 0;
    if (increases >= 3) throw NonContraction("meanfield", non_contraction_message(kernel, grid, result.log));
  }
  result.flow = std::move(prev);
  return result;
}

PicardResult picard_solve_chained(const IntensityKernel& kernel, const MeasureSnapshot& initial_law,
                                  std::span<const double> grid, std::span<const double> splits,
                                  const PicardOptions& options) {
  check_grid(grid);
  std::vector<std::size_t> cuts{0};
  for (double s : splits) {
    auto it = std::find(grid.begin(), grid.end(), s);
    if (it == grid.end() || it == grid.begin() || it + 1 == grid.end())
      fail("chain split points must be interior grid times");
    const auto idx = static_cast<std::size_t>(it - grid.begin());
    if (idx <= cuts.back()) fail("chain split points must be increasing");
    cuts.push_back(idx);
  }
  cuts.push_back(grid.size() - 1);

  PicardResult result;
  result.converged = true;
  std::vector<double> times;
  std::vector<MeasureSnapshot> snaps;
  MeasureSnapshot law = initial_law;
  for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
    auto sub = grid.subspan(cuts[s], cuts[s + 1] - cuts[s] + 1);
    PicardResult part = picard_solve(kernel, law, sub, options);
    result.converged = result.converged && part.converged;
    result.renormalized_steps += part.renormalized_steps;
    result.log.insert(result.log.end(), part.log.begin(), part.log.end());
    for (std::size_t k = s == 0 ? 0 : 1; k < part.flow.size(); ++k) {
      times.push_back(part.flow.grid()[k]);
      snaps.push_back(part.flow[k]);
    }
    law = part.flow[part.flow.size() - 1];
  }
  result.flow = MarginalFlow(std::move(times), std::move(snaps));
  return result;
}

MarginalFlow linearised_transition(const IntensityKernel& kernel, const MarginalFlow& frozen_flow, PointView x,
                                   std::span<const double> grid, const PicardOptions& options) {
  if (!kernel.space.contains(x)) {
    std::ostringstream os;
    os << "start point (";
    for (std::size_t c = 0; c < x.size(); ++c) os << (c ? "," : "") << x[c];
    os << ") is not in the state space";
    fail(os.str());
  }
  if (kernel.space.is_finite()) {
    const std::size_t i = *kernel.space.index_of(x);
    const MeasureSnapshot delta = MeasureSnapshot::dirac_pmf(kernel.space.size(), i);
    return solve_linear_forward(kernel, &frozen_flow, delta.probabilities(), grid).flow;
  }
  return particle_flow(kernel, &frozen_flow, MeasureSnapshot::dirac(x), grid, options.particles, options.seed,
                       options.workers);
}

void write_picard_log_csv(std::ostream& os, std::span<const PicardIteration> log) {
  CsvRow(os) << "iteration" << "sup_W1_change" << "wall_time_ms";
  for (const auto& it : log) CsvRow(os) << it.iteration << it.sup_w1_change << it.wall_time_ms;
}

}  // namespace mfje
