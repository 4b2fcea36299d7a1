#include "mfje/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mfje/error.hpp"

namespace mfje {

namespace {

[[noreturn]] void fail(const std::string& what) { throw InvalidArgument("kernel", what); }

std::string format_point(PointView x) {
  std::ostringstream os;
  os << '(';
  for (std::size_t k = 0; k < x.size(); ++k) os << (k ? "," : "") << x[k];
  os << ')';
  return os.str();
}

// Neumaier-compensated sum; keeps the 1e-12 normalisation check meaningful
// for large uniform clouds.
double compensated_sum(std::span<const double> v) {
  double sum = 0.0, c = 0.0;
  for (double x : v) {
    const double t = sum + x;
    c += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  return sum + c;
}

bool lex_less(PointView a, PointView b) { return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end()); }

}  // namespace

double l1_norm(PointView x) {
  double s = 0.0;
  for (double v : x) s += std::abs(v);
  return s;
}

double l1_distance(PointView a, PointView b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += std::abs(a[k] - b[k]);
  return s;
}

// ---- StateSpace --------------------------------------------------------

StateSpace StateSpace::finite(std::vector<Point> points, std::vector<std::string> labels) {
  if (points.empty()) fail("finite state space needs at least one point");
  const std::size_t d = points.front().size();
  if (d == 0) fail("state space points must have dimension >= 1");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != d) fail("state space points have mixed dimensions");
    for (std::size_t j = 0; j < i; ++j)
      if (points[i] == points[j]) fail("state space points must be distinct; duplicate " + format_point(points[i]));
  }
  if (labels.empty()) {
    for (std::size_t i = 0; i < points.size(); ++i) labels.push_back(std::to_string(i));
  } else if (labels.size() != points.size()) {
    fail("state labels and points differ in length");
  }
  StateSpace s;
  s.kind_ = Kind::finite;
  s.dim_ = d;
  s.points_ = std::move(points);
  s.labels_ = std::move(labels);
  return s;
}

StateSpace StateSpace::boxed(std::size_t dim, std::vector<Interval> bounds) {
  if (dim == 0) fail("boxed state space needs dimension >= 1");
  if (!bounds.empty() && bounds.size() != dim) fail("box bounds must have one interval per coordinate");
  for (const auto& b : bounds)
    if (!(b.lo <= b.hi)) fail("box bound with lo > hi");
  StateSpace s;
  s.kind_ = Kind::boxed;
  s.dim_ = dim;
  s.bounds_ = std::move(bounds);
  return s;
}

std::optional<std::size_t> StateSpace::index_of(PointView x) const {
  if (x.size() != dim_) return std::nullopt;
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const Point& p = points_[i];
    bool same = true;
    for (std::size_t k = 0; k < dim_ && same; ++k)
      same = std::abs(p[k] - x[k]) <= 1e-9 * std::max(1.0, std::abs(p[k]));
    if (same) return i;
  }
  return std::nullopt;
}

bool StateSpace::contains(PointView x) const {
  if (x.size() != dim_) return false;
  if (is_finite()) return index_of(x).has_value();
  for (double v : x)
    if (!std::isfinite(v)) return false;
  for (std::size_t k = 0; k < bounds_.size(); ++k)
    if (x[k] < bounds_[k].lo || x[k] > bounds_[k].hi) return false;
  return true;
}

std::vector<Point> StateSpace::admissible_jumps(std::size_t i) const {
  std::vector<Point> out;
  for (std::size_t j = 0; j < points_.size(); ++j) {
    if (j == i) continue;
    Point z(dim_);
    for (std::size_t k = 0; k < dim_; ++k) z[k] = points_[j][k] - points_[i][k];
    out.push_back(std::move(z));
  }
  return out;
}

std::vector<Point> StateSpace::jump_values() const {
  std::vector<Point> out;
  for (std::size_t i = 0; i < points_.size(); ++i)
    for (auto& z : admissible_jumps(i))
      if (std::find(out.begin(), out.end(), z) == out.end()) out.push_back(std::move(z));
  std::sort(out.begin(), out.end());
  return out;
}

// ---- MeasureSnapshot ---------------------------------------------------

MeasureSnapshot MeasureSnapshot::pmf(std::vector<double> probabilities, double time) {
  MeasureSnapshot s(Pmf{std::move(probabilities)}, time);
  s.validate();
  return s;
}

MeasureSnapshot MeasureSnapshot::cloud(std::size_t dim, std::vector<double> coords, std::vector<double> weights,
                                       double time) {
  if (dim == 0) fail("particle cloud needs dimension >= 1");
  if (coords.size() % dim != 0) fail("particle coordinates are not a multiple of the dimension");
  MeasureSnapshot s(Cloud{dim, std::move(coords), std::move(weights)}, time);
  s.validate();
  return s;
}

MeasureSnapshot MeasureSnapshot::dirac(PointView x, double time) {
  return cloud(x.size(), std::vector<double>(x.begin(), x.end()), {}, time);
}

MeasureSnapshot MeasureSnapshot::dirac_pmf(std::size_t m, std::size_t i, double time) {
  if (i >= m) fail("dirac_pmf index out of range");
  std::vector<double> p(m, 0.0);
  p[i] = 1.0;
  return pmf(std::move(p), time);
}

std::size_t MeasureSnapshot::size() const noexcept {
  if (const auto* p = std::get_if<Pmf>(&support_)) return p->p.size();
  const auto& c = std::get<Cloud>(support_);
  return c.coords.size() / c.dim;
}

std::span<const double> MeasureSnapshot::probabilities() const {
  const auto* p = std::get_if<Pmf>(&support_);
  if (!p) fail("snapshot is a particle cloud, not a pmf");
  return p->p;
}

std::span<double> MeasureSnapshot::mutable_probabilities() {
  auto* p = std::get_if<Pmf>(&support_);
  if (!p) fail("snapshot is a particle cloud, not a pmf");
  return p->p;
}

std::size_t MeasureSnapshot::dim() const {
  const auto* c = std::get_if<Cloud>(&support_);
  if (!c) fail("snapshot is a pmf, not a particle cloud");
  return c->dim;
}

PointView MeasureSnapshot::particle(std::size_t i) const {
  const auto* c = std::get_if<Cloud>(&support_);
  if (!c) fail("snapshot is a pmf, not a particle cloud");
  return {c->coords.data() + i * c->dim, c->dim};
}

double MeasureSnapshot::weight(std::size_t i) const {
  if (const auto* p = std::get_if<Pmf>(&support_)) return p->p[i];
  const auto& c = std::get<Cloud>(support_);
  return c.weights.empty() ? 1.0 / static_cast<double>(c.coords.size() / c.dim) : c.weights[i];
}

bool MeasureSnapshot::uniform_weights() const {
  const auto* c = std::get_if<Cloud>(&support_);
  return c && c->weights.empty();
}

std::span<const double> MeasureSnapshot::coordinates() const {
  const auto* c = std::get_if<Cloud>(&support_);
  if (!c) fail("snapshot is a pmf, not a particle cloud");
  return c->coords;
}

void MeasureSnapshot::set_particle(std::size_t i, PointView x) {
  auto* c = std::get_if<Cloud>(&support_);
  if (!c) fail("snapshot is a pmf, not a particle cloud");
  std::copy(x.begin(), x.end(), c->coords.begin() + static_cast<std::ptrdiff_t>(i * c->dim));
}

void MeasureSnapshot::validate() const {
  std::span<const double> w;
  if (const auto* p = std::get_if<Pmf>(&support_)) {
    if (p->p.empty()) fail("pmf snapshot is empty");
    w = p->p;
  } else {
    const auto& c = std::get<Cloud>(support_);
    if (c.coords.empty()) fail("particle cloud is empty");
    if (c.weights.empty()) return;
    if (c.weights.size() != c.coords.size() / c.dim) fail("particle weights and particles differ in count");
    w = c.weights;
  }
  for (double v : w)
    if (!(v >= 0.0)) fail("snapshot weight is negative or NaN");
  const double total = compensated_sum(w);
  if (std::abs(total - 1.0) > 1e-12) {
    std::ostringstream os;
    os.precision(17);
    os << "snapshot weights sum to " << total << ", not 1";
    fail(os.str());
  }
}

// ---- MarginalFlow ------------------------------------------------------

MarginalFlow::MarginalFlow(std::vector<double> grid, std::vector<MeasureSnapshot> snapshots)
    : grid_(std::move(grid)), snapshots_(std::move(snapshots)) {
  validate();
}

void MarginalFlow::validate() const {
  if (grid_.empty()) fail("marginal flow has an empty grid");
  if (grid_.size() != snapshots_.size()) fail("marginal flow grid and snapshots differ in length");
  for (std::size_t k = 1; k < grid_.size(); ++k)
    if (!(grid_[k] > grid_[k - 1])) fail("marginal flow grid is not strictly increasing");
  if (snapshots_.front().time() != grid_.front()) fail("first snapshot timestamp differs from the grid start");
  for (const auto& s : snapshots_) s.validate();
}

std::size_t MarginalFlow::index_at(double t) const {
  auto it = std::upper_bound(grid_.begin(), grid_.end(), t);
  if (it == grid_.begin()) return 0;
  return static_cast<std::size_t>(it - grid_.begin()) - 1;
}

const MeasureSnapshot& MarginalFlow::at(double t) const { return snapshots_[index_at(t)]; }

void MarginalFlow::interpolate_pmf(double t, std::span<double> out) const {
  const std::size_t n = grid_.size();
  const std::size_t m = out.size();
  if (n == 1) {
    auto p = snapshots_[0].probabilities();
    std::copy(p.begin(), p.end(), out.begin());
    return;
  }
  // Exact at grid points.
  const std::size_t k = index_at(t);
  if (grid_[k] == t || t <= grid_.front() || t >= grid_.back()) {
    auto p = snapshots_[k].probabilities();
    std::copy(p.begin(), p.end(), out.begin());
    return;
  }
  const std::size_t order = std::min<std::size_t>(4, n);
  std::size_t lo = k >= 1 ? k - 1 : 0;
  if (lo + order > n) lo = n - order;
  double w[4];
  for (std::size_t a = 0; a < order; ++a) {
    double l = 1.0;
    for (std::size_t b = 0; b < order; ++b)
      if (b != a) l *= (t - grid_[lo + b]) / (grid_[lo + a] - grid_[lo + b]);
    w[a] = l;
  }
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t a = 0; a < order; ++a) {
    auto p = snapshots_[lo + a].probabilities();
    for (std::size_t i = 0; i < m; ++i) out[i] += w[a] * p[i];
  }
}

std::vector<double> uniform_grid(double start, double end, std::size_t points) {
  if (points < 2 || !(end > start)) fail("uniform grid needs >= 2 points and end > start");
  std::vector<double> g(points);
  const double h = (end - start) / static_cast<double>(points - 1);
  for (std::size_t k = 0; k < points; ++k) g[k] = start + h * static_cast<double>(k);
  g.back() = end;
  return g;
}

// ---- JumpAtoms ---------------------------------------------------------

void JumpAtoms::add(PointView z, double rate) {
  if (z.size() != dim_) fail("jump atom dimension mismatch");
  jumps_.insert(jumps_.end(), z.begin(), z.end());
  rates_.push_back(rate);
}

double JumpAtoms::total_rate() const { return std::accumulate(rates_.begin(), rates_.end(), 0.0); }

std::size_t select_atom(const JumpAtoms& atoms, double u) {
  const std::size_t n = atoms.size();
  if (n == 0) fail("select_atom on an empty jump measure");
  // Order by jump size; small n, insertion sort on indices.
  std::size_t order[64];
  std::vector<std::size_t> heap_order;
  std::size_t* idx = order;
  if (n > 64) {
    heap_order.resize(n);
    idx = heap_order.data();
  }
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t j = k;
    while (j > 0 && lex_less(atoms.jump(k), atoms.jump(idx[j - 1]))) {
      idx[j] = idx[j - 1];
      --j;
    }
    idx[j] = k;
  }
  const double total = atoms.total_rate();
  const double target = u * total;
  double acc = 0.0;
  std::size_t last_positive = idx[0];
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t a = idx[k];
    if (atoms.rate(a) <= 0.0) continue;
    last_positive = a;
    acc += atoms.rate(a);
    if (target < acc) return a;
  }
  return last_positive;
}

// ---- kernels -----------------------------------------------------------

IntensityKernel finite_kernel(std::string name, StateSpace space, bool measure_dependent, AtomsFn jump_atoms,
                              KernelBounds bounds) {
  if (!space.is_finite()) fail("finite_kernel requires a finite state space");
  IntensityKernel k;
  k.name = std::move(name);
  k.space = space;
  k.measure_dependent = measure_dependent;
  k.bounds = bounds;
  k.mark_atoms = jump_atoms;
  const std::size_t d = space.dim();
  k.rate = [jump_atoms, d](double t, PointView x, const MeasureSnapshot& rho) {
    JumpAtoms atoms(d);
    jump_atoms(t, x, rho, atoms);
    return atoms.total_rate();
  };
  k.mark_quantile = [jump_atoms, d](double t, PointView x, const MeasureSnapshot& rho, double u) {
    JumpAtoms atoms(d);
    jump_atoms(t, x, rho, atoms);
    auto z = atoms.jump(select_atom(atoms, u));
    return Point(z.begin(), z.end());
  };
  auto quantile = k.mark_quantile;
  k.mark_sampler = [quantile](double t, PointView x, const MeasureSnapshot& rho, Rng& rng) {
    return quantile(t, x, rho, rng.uniform());
  };
  return k;
}

IntensityKernel jd_to_js(const DestinationKernel& dk) {
  IntensityKernel k;
  k.name = dk.name;
  k.space = dk.space;
  k.measure_dependent = dk.measure_dependent;
  k.bounds = dk.bounds;
  k.rate = dk.rate;
  auto to_size = [](PointView x, Point y) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] -= x[i];
    return y;
  };
  if (dk.destination_sampler) {
    auto s = dk.destination_sampler;
    k.mark_sampler = [s, to_size](double t, PointView x, const MeasureSnapshot& rho, Rng& rng) {
      return to_size(x, s(t, x, rho, rng));
    };
  }
  if (dk.destination_quantile) {
    auto q = dk.destination_quantile;
    k.mark_quantile = [q, to_size](double t, PointView x, const MeasureSnapshot& rho, double u) {
      return to_size(x, q(t, x, rho, u));
    };
  }
  if (dk.destination_atoms) {
    auto a = dk.destination_atoms;
    const std::size_t d = dk.space.dim();
    k.mark_atoms = [a, d](double t, PointView x, const MeasureSnapshot& rho, JumpAtoms& out) {
      JumpAtoms dest(d);
      a(t, x, rho, dest);
      out.reset(d);
      Point z(d);
      for (std::size_t i = 0; i < dest.size(); ++i) {
        auto y = dest.jump(i);
        for (std::size_t c = 0; c < d; ++c) z[c] = y[c] - x[c];
        out.add(z, dest.rate(i));
      }
    };
  }
  return k;
}

DestinationKernel js_to_jd(const IntensityKernel& k) {
  DestinationKernel dk;
  dk.name = k.name;
  dk.space = k.space;
  dk.measure_dependent = k.measure_dependent;
  dk.bounds = k.bounds;
  dk.rate = k.rate;
  auto to_dest = [](PointView x, Point z) {
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += x[i];
    return z;
  };
  if (k.mark_sampler) {
    auto s = k.mark_sampler;
    dk.destination_sampler = [s, to_dest](double t, PointView x, const MeasureSnapshot& rho, Rng& rng) {
      return to_dest(x, s(t, x, rho, rng));
    };
  }
  if (k.mark_quantile) {
    auto q = k.mark_quantile;
    dk.destination_quantile = [q, to_dest](double t, PointView x, const MeasureSnapshot& rho, double u) {
      return to_dest(x, q(t, x, rho, u));
    };
  }
  if (k.mark_atoms) {
    auto a = k.mark_atoms;
    const StateSpace space = k.space;
    const std::size_t d = k.space.dim();
    // Destinations are snapped to the stored state coordinates so that a
    // round trip reproduces the destination table exactly.
    dk.destination_atoms = [a, d, space](double t, PointView x, const MeasureSnapshot& rho, JumpAtoms& out) {
      JumpAtoms jumps(d);
      a(t, x, rho, jumps);
      out.reset(d);
      Point y(d);
      for (std::size_t i = 0; i < jumps.size(); ++i) {
        auto z = jumps.jump(i);
        for (std::size_t c = 0; c < d; ++c) y[c] = x[c] + z[c];
        if (space.is_finite()) {
          if (auto j = space.index_of(y)) y = space.point(*j);
        }
        out.add(y, jumps.rate(i));
      }
    };
  }
  return dk;
}

IntensityKernel two_state_kernel(double forward_rate, double backward_rate) {
  if (forward_rate < 0.0 || backward_rate < 0.0) fail("two_state_kernel rates must be nonnegative");
  auto space = StateSpace::finite({{1.0}, {2.0}}, {"1", "2"});
  KernelBounds b;
  b.c_lambda = std::max(forward_rate, backward_rate);
  b.c_r = 1.0;
  b.q = 1.0;
  b.c_mu = 2.0 * std::max(forward_rate, backward_rate);
  auto atoms = [forward_rate, backward_rate](double, PointView x, const MeasureSnapshot&, JumpAtoms& out) {
    out.reset(1);
    const double up = 1.0, down = -1.0;
    if (x[0] < 1.5) {
      if (forward_rate > 0.0) out.add({&up, 1}, forward_rate);
    } else if (backward_rate > 0.0) {
      out.add({&down, 1}, backward_rate);
    }
  };
  return finite_kernel("two-state", space, false, atoms, b);
}

IntensityKernel poisson_counting_kernel(double lambda) {
  if (lambda < 0.0) fail("poisson_counting_kernel rate must be nonnegative");
  IntensityKernel k;
  k.name = "constant-rate";
  k.space = StateSpace::boxed(1);
  k.measure_dependent = false;
  k.bounds = {lambda, 1.0, 1.0, 0.0};
  k.rate = [lambda](double, PointView, const MeasureSnapshot&) { return lambda; };
  k.mark_quantile = [](double, PointView, const MeasureSnapshot&, double) { return Point{1.0}; };
  k.mark_sampler = [](double, PointView, const MeasureSnapshot&, Rng&) { return Point{1.0}; };
  return k;
}

std::string to_string(AuditViolation::Kind kind) {
  switch (kind) {
    case AuditViolation::Kind::rate_bound: return "rate_bound";
    case AuditViolation::Kind::moment_bound: return "moment_bound";
    case AuditViolation::Kind::lipschitz_bound: return "lipschitz_bound";
    case AuditViolation::Kind::jump_outside_space: return "jump_outside_space";
  }
  return "unknown";
}

}  // namespace mfje
