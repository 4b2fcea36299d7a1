#pragma once

// State spaces, probability snapshots and measure-dependent intensity
// kernels mu_t(x, rho, dz) = lambda_t(x, rho) * r_t(x, rho, dz).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mfje/rng.hpp"

namespace mfje {

using Point = std::vector<double>;
using PointView = std::span<const double>;

double l1_norm(PointView x);
double l1_distance(PointView a, PointView b);

struct Interval {
  double lo;
  double hi;
};

class StateSpace {
 public:
  enum class Kind { finite, boxed };

  // Finite set of distinct points in R^d. Labels default to "0", "1", ...
  static StateSpace finite(std::vector<Point> points, std::vector<std::string> labels = {});
  // R^d, optionally restricted to a box (one interval per coordinate).
  static StateSpace boxed(std::size_t dim, std::vector<Interval> bounds = {});

  Kind kind() const noexcept { return kind_; }
  bool is_finite() const noexcept { return kind_ == Kind::finite; }
  std::size_t dim() const noexcept { return dim_; }
  // Number of points; zero for boxed spaces.
  std::size_t size() const noexcept { return points_.size(); }
  const Point& point(std::size_t i) const { return points_.at(i); }
  const std::string& label(std::size_t i) const { return labels_.at(i); }
  const std::vector<Interval>& bounds() const noexcept { return bounds_; }

  std::optional<std::size_t> index_of(PointView x) const;
  bool contains(PointView x) const;

  // Jump sizes admissible from point i: x_j - x_i for j != i.
  std::vector<Point> admissible_jumps(std::size_t i) const;
  // The jump value set A: all distinct nonzero pairwise differences.
  std::vector<Point> jump_values() const;

 private:
  StateSpace() = default;
  Kind kind_ = Kind::boxed;
  std::size_t dim_ = 0;
  std::vector<Point> points_;
  std::vector<std::string> labels_;
  std::vector<Interval> bounds_;
};

// A probability measure at a point in time: either a pmf over the points of a
// finite state space, or a weighted particle cloud in R^d. Particle clouds
// with no explicit weights are uniform.
class MeasureSnapshot {
 public:
  static MeasureSnapshot pmf(std::vector<double> probabilities, double time = 0.0);
  static MeasureSnapshot cloud(std::size_t dim, std::vector<double> coords, std::vector<double> weights = {},
                               double time = 0.0);
  static MeasureSnapshot dirac(PointView x, double time = 0.0);
  // Point mass on state i of a finite space with m states.
  static MeasureSnapshot dirac_pmf(std::size_t m, std::size_t i, double time = 0.0);

  bool is_pmf() const noexcept { return std::holds_alternative<Pmf>(support_); }
  double time() const noexcept { return time_; }
  void set_time(double t) noexcept { time_ = t; }

  // Number of atoms (pmf) or particles (cloud).
  std::size_t size() const noexcept;

  std::span<const double> probabilities() const;
  double probability(std::size_t i) const { return probabilities()[i]; }
  std::span<double> mutable_probabilities();

  std::size_t dim() const;
  PointView particle(std::size_t i) const;
  double weight(std::size_t i) const;
  bool uniform_weights() const;
  std::span<const double> coordinates() const;
  void set_particle(std::size_t i, PointView x);

  // Throws InvalidArgument when weights are negative, do not sum to one
  // within 1e-12, or a cloud is empty.
  void validate() const;

 private:
  struct Pmf {
    std::vector<double> p;
  };
  struct Cloud {
    std::size_t dim = 0;
    std::vector<double> coords;
    std::vector<double> weights;
  };
  MeasureSnapshot(std::variant<Pmf, Cloud> s, double t) : support_(std::move(s)), time_(t) {}

  std::variant<Pmf, Cloud> support_;
  double time_ = 0.0;
};

// A sequence of snapshots on a strictly increasing grid; the value at t is
// the snapshot at the largest grid point <= t.
class MarginalFlow {
 public:
  MarginalFlow() = default;
  MarginalFlow(std::vector<double> grid, std::vector<MeasureSnapshot> snapshots);

  const std::vector<double>& grid() const noexcept { return grid_; }
  std::size_t size() const noexcept { return grid_.size(); }
  const MeasureSnapshot& operator[](std::size_t k) const { return snapshots_[k]; }
  const MeasureSnapshot& at(double t) const;
  std::size_t index_at(double t) const;
  double start() const { return grid_.front(); }
  double end() const { return grid_.back(); }

  // Cubic (four-point Lagrange) interpolation of a pmf flow at t. Used by the
  // ODE solvers, whose Runge-Kutta stages fall between grid points.
  void interpolate_pmf(double t, std::span<double> out) const;

  void validate() const;

 private:
  std::vector<double> grid_;
  std::vector<MeasureSnapshot> snapshots_;
};

std::vector<double> uniform_grid(double start, double end, std::size_t points);

// Flat storage for the atoms of a jump measure with finitely many jump sizes:
// jump k has size jump(k) and intensity rate(k) (not normalised).
class JumpAtoms {
 public:
  explicit JumpAtoms(std::size_t dim = 1) : dim_(dim) {}
  void clear() noexcept {
    jumps_.clear();
    rates_.clear();
  }
  void reset(std::size_t dim) {
    dim_ = dim;
    clear();
  }
  void add(PointView z, double rate);
  std::size_t size() const noexcept { return rates_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  PointView jump(std::size_t k) const { return {jumps_.data() + k * dim_, dim_}; }
  double rate(std::size_t k) const { return rates_[k]; }
  double total_rate() const;

 private:
  std::size_t dim_;
  std::vector<double> jumps_;
  std::vector<double> rates_;
};

using RateFn = std::function<double(double t, PointView x, const MeasureSnapshot& rho)>;
using PointSamplerFn = std::function<Point(double t, PointView x, const MeasureSnapshot& rho, Rng& rng)>;
using PointQuantileFn = std::function<Point(double t, PointView x, const MeasureSnapshot& rho, double u)>;
using AtomsFn = std::function<void(double t, PointView x, const MeasureSnapshot& rho, JumpAtoms& out)>;

struct KernelBounds {
  double c_lambda = 0.0;
  double c_r = 0.0;
  double q = 1.0;
  std::optional<double> c_mu;
};

// Jump-size representation. `rate` and `mark_sampler` are always set.
// `mark_quantile` maps u in (0,1) to a jump monotonically (a one-parameter
// mark family), which the coupled simulator uses for comonotone marks.
// `mark_atoms` is set for kernels on finite spaces and lists mu_t(x,rho,{z}).
struct IntensityKernel {
  std::string name;
  StateSpace space = StateSpace::boxed(1);
  bool measure_dependent = false;
  RateFn rate;
  PointSamplerFn mark_sampler;
  PointQuantileFn mark_quantile;
  AtomsFn mark_atoms;
  KernelBounds bounds;
};

// Jump-destination representation: the sampler returns next states y.
struct DestinationKernel {
  std::string name;
  StateSpace space = StateSpace::boxed(1);
  bool measure_dependent = false;
  RateFn rate;
  PointSamplerFn destination_sampler;
  PointQuantileFn destination_quantile;
  // Finite spaces: destinations y with intensity mu^d_t(x, rho, {y}).
  AtomsFn destination_atoms;
  KernelBounds bounds;
};

// Kernel on a finite space given by its destination atoms. The sampler and
// quantile are derived from the atoms; destinations are ordered by jump size
// (lexicographically in d > 1) so the quantile is monotone in one dimension.
IntensityKernel finite_kernel(std::string name, StateSpace space, bool measure_dependent, AtomsFn jump_atoms,
                              KernelBounds bounds);

// z = y - x for every destination; rate unchanged.
IntensityKernel jd_to_js(const DestinationKernel& kernel);
// y = x + z; inverse of jd_to_js.
DestinationKernel js_to_jd(const IntensityKernel& kernel);

// Selects the atom whose cumulative (jump-size ordered) probability bracket
// contains u in [0,1). Returns the atom index.
std::size_t select_atom(const JumpAtoms& atoms, double u);

// Constant rate lambda with jumps +1 on a finite two-point space {1, 2}:
// from 1 to 2 at `forward_rate`, from 2 to 1 at `backward_rate`.
IntensityKernel two_state_kernel(double forward_rate, double backward_rate = 0.0);

// Homogeneous Poisson counting process on R: jumps +1 at rate lambda.
IntensityKernel poisson_counting_kernel(double lambda);

// ---- regularity audit --------------------------------------------------

struct Probe {
  double t = 0.0;
  Point x;
  MeasureSnapshot rho = MeasureSnapshot::dirac(Point{0.0});
};

struct ProbePair {
  Probe a;
  Probe b;
};

struct AuditOptions {
  std::size_t samples_per_probe = 10000;
  std::uint64_t seed = 0;
  double moment_slack = 0.05;
  // Support cap for empirical transport distances between mark samples.
  std::size_t transport_cap = 512;
};

struct AuditViolation {
  enum class Kind { rate_bound, moment_bound, lipschitz_bound, jump_outside_space };
  Kind kind;
  std::size_t probe;  // probe index, or pair index for lipschitz_bound
  double observed;
  double declared;
  std::string detail;
};

std::string to_string(AuditViolation::Kind kind);

struct AuditReport {
  std::vector<double> rates;    // per probe
  std::vector<double> moments;  // per probe, mean ||z||^q (NaN when the rate is zero)
  std::vector<double> lipschitz_ratios;  // per pair (NaN when the denominator is zero)
  double max_rate = 0.0;
  double max_moment = 0.0;
  double max_lipschitz_ratio = 0.0;
  std::size_t escaping_jumps = 0;
  std::vector<AuditViolation> violations;

  bool ok() const noexcept { return violations.empty(); }
};

// Sampled surrogate for the boundedness and Lipschitz conditions on a kernel.
// The Lipschitz ratio for a pair is d_KR^0(mu_a, mu_b) / (|x_a - x_b| + d_W(rho_a, rho_b)),
// where d_KR^0 is evaluated as M * W1 of the two mark laws padded with mass at 0
// up to the common total M = max(lambda_a, lambda_b).
AuditReport audit_regularity(const IntensityKernel& kernel, std::span<const Probe> probes,
                             std::span<const ProbePair> pairs, const AuditOptions& options = {});

}  // namespace mfje
