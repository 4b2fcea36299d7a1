#pragma once

// Exact event-driven simulation by thinning a dominating Poisson clock of
// rate C_lambda: linear (possibly flow-driven) processes, the n-individual
// mean-field interacting system, and the shared-clock coupling between the
// interacting system and independent mean-field copies.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "mfje/kernel.hpp"
#include "mfje/rng.hpp"

namespace mfje {

struct Horizon {
  double start = 0.0;
  double end = 1.0;
};

struct JumpEvent {
  double time;
  Point state;
};

// Piecewise-constant cadlag path: `initial` on [start, t_1), then the
// post-jump state of each event.
class JumpPath {
 public:
  JumpPath() = default;
  JumpPath(Horizon horizon, Point initial);

  double start() const noexcept { return horizon_.start; }
  double end() const noexcept { return horizon_.end; }
  Horizon horizon() const noexcept { return horizon_; }
  const Point& initial() const noexcept { return initial_; }
  const std::vector<JumpEvent>& events() const noexcept { return events_; }
  std::size_t jump_count() const noexcept { return events_.size(); }

  // Appends a jump; times must be strictly increasing within (start, end].
  void push(double t, Point state);
  PointView value_at(double t) const;
  PointView final_state() const { return events_.empty() ? PointView(initial_) : PointView(events_.back().state); }

  // Throws InvalidArgument if times are not strictly increasing in (start, end]
  // or a state lies outside `space`.
  void validate(const StateSpace& space) const;

 private:
  Horizon horizon_;
  Point initial_;
  std::vector<JumpEvent> events_;
};

// Stream identity for one replication. Individual l of replication r draws
// from Rng::stream(seed, {r, l, purpose}), so results do not depend on how
// replications are scheduled across workers.
struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t replication = 0;
};

namespace stream_purpose {
inline constexpr std::uint64_t clock = 0;
inline constexpr std::uint64_t initial = 1;
inline constexpr std::uint64_t crn_mark = 2;
}  // namespace stream_purpose

// One path of the linear process. For measure-dependent kernels `flow` is
// required and supplies rho_t = flow.at(t). Throws BoundViolation when the
// rate exceeds the declared C_lambda.
JumpPath simulate_linear(const IntensityKernel& kernel, const MarginalFlow* flow, PointView initial, Horizon horizon,
                         Rng& rng);

class Ensemble {
 public:
  Ensemble(StateSpace space, std::vector<JumpPath> paths);

  std::size_t size() const noexcept { return paths_.size(); }
  const std::vector<JumpPath>& paths() const noexcept { return paths_; }
  const JumpPath& operator[](std::size_t l) const { return paths_[l]; }
  const StateSpace& space() const noexcept { return space_; }

  // (1/n) sum_l delta_{X^l_t}: a pmf on finite spaces, a uniform cloud otherwise.
  MeasureSnapshot empirical_snapshot(double t) const;

 private:
  StateSpace space_;
  std::vector<JumpPath> paths_;
};

// One draw from `law` (a pmf over the points of a finite space, or a cloud).
Point draw_from(const StateSpace& space, const MeasureSnapshot& law, Rng& rng);

// Draws n iid initial states from `law` on per-individual streams.
std::vector<Point> sample_initials(const StateSpace& space, const MeasureSnapshot& law, std::size_t n, StreamKey key);

// The n-individual system: n clocks of rate C_lambda processed in global time
// order (ties by lower index); acceptance uses lambda_t(X^l_{t-}, eps^n_{t-}).
Ensemble simulate_interacting(const IntensityKernel& kernel, std::span<const Point> initials, Horizon horizon,
                              StreamKey key);
Ensemble simulate_interacting(const IntensityKernel& kernel, const MeasureSnapshot& initial_law, std::size_t n,
                              Horizon horizon, StreamKey key);

struct CoupledPair {
  JumpPath interacting;
  JumpPath meanfield;
  double sup_distance = 0.0;
  // Candidate times of the shared clock; filled only when requested.
  std::vector<double> clock;
};

struct CoupledRun {
  std::vector<CoupledPair> pairs;
  // Set when one-dimensional marks had no quantile and common random numbers
  // were used instead of the comonotone coupling.
  bool crn_fallback = false;
};

using JointInitialSampler = std::function<std::pair<Point, Point>(std::size_t individual, Rng& rng)>;

// Both coordinates of a pair start at the same draw from `law`.
JointInitialSampler identical_initials(const StateSpace& space, const MeasureSnapshot& law);

// Interacting system coupled coordinate-wise to independent mean-field copies
// driven by `meanfield_flow`. Each pair shares one clock and one pair of
// uniforms per candidate time: a common acceptance uniform (maximal coupling
// of the two thinning indicators) and a common mark uniform fed to the mark
// quantile (comonotone marks) or, without a quantile, a common random stream
// fed to the sampler.
CoupledRun simulate_coupled(const IntensityKernel& kernel, const MarginalFlow& meanfield_flow, std::size_t n,
                            const JointInitialSampler& initials, Horizon horizon, StreamKey key,
                            bool record_clock = false);

// CSV rows (replication, individual, event_time, x0, x1, ...); the initial
// state is written as an event at the horizon start.
void write_paths_csv_header(std::ostream& os, std::size_t dim);
void write_paths_csv(std::ostream& os, std::uint64_t replication, const Ensemble& ensemble);

}  // namespace mfje
