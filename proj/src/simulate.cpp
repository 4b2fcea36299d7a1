#include "mfje/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <queue>
#include <sstream>

#include "mfje/csv.hpp"
#include "mfje/error.hpp"

namespace mfje {

namespace {

[[noreturn]] void fail(const std::string& what) { throw InvalidArgument("simulate", what); }

std::string describe(PointView x) {
  std::ostringstream os;
  os.precision(17);
  os << '(';
  for (std::size_t k = 0; k < x.size(); ++k) os << (k ? "," : "") << x[k];
  os << ')';
  return os.str();
}

void check_bound(const IntensityKernel& k, double rate, double t, PointView x) {
  if (rate > k.bounds.c_lambda * (1.0 + 1e-12) || !(rate >= 0.0)) {
    std::ostringstream os;
    os.precision(17);
    os << "kernel '" << k.name << "' rate " << rate << " outside [0, C_lambda=" << k.bounds.c_lambda << "] at t=" << t
       << ", x=" << describe(x);
    throw BoundViolation("simulate", os.str());
  }
}

// Evaluates lambda and, for atom kernels, caches the atoms for the mark draw.
struct KernelProbe {
  const IntensityKernel& kernel;
  JumpAtoms atoms;

  explicit KernelProbe(const IntensityKernel& k) : kernel(k), atoms(k.space.dim()) {}

  double rate(double t, PointView x, const MeasureSnapshot& rho) {
    double r;
    if (kernel.mark_atoms) {
      atoms.clear();
      kernel.mark_atoms(t, x, rho, atoms);
      r = atoms.total_rate();
    } else {
      r = kernel.rate(t, x, rho);
    }
    check_bound(kernel, r, t, x);
    return r;
  }

  // Mark from a uniform u when a quantile exists; otherwise from `rng`.
  Point mark(double t, PointView x, const MeasureSnapshot& rho, double u, Rng& rng) const {
    if (kernel.mark_atoms) {
      auto z = atoms.jump(select_atom(atoms, u));
      return Point(z.begin(), z.end());
    }
    if (kernel.mark_quantile) return kernel.mark_quantile(t, x, rho, u);
    return kernel.mark_sampler(t, x, rho, rng);
  }
};

void add_in_place(Point& x, const Point& z) {
  for (std::size_t k = 0; k < x.size(); ++k) x[k] += z[k];
}

// Empirical measure of an ensemble under simulation, updated in place.
class RunningEmpirical {
 public:
  RunningEmpirical(const StateSpace& space, std::span<const Point> states)
      : space_(space), n_(states.size()), snapshot_(make(space, states)) {
    if (space.is_finite()) {
      counts_.assign(space.size(), 0);
      for (const auto& x : states) ++counts_[index(x)];
    }
  }

  const MeasureSnapshot& snapshot() const { return snapshot_; }

  void move(std::size_t l, PointView from, PointView to) {
    if (space_.is_finite()) {
      const std::size_t a = index(from), b = index(to);
      --counts_[a];
      ++counts_[b];
      auto p = snapshot_.mutable_probabilities();
      p[a] = static_cast<double>(counts_[a]) / static_cast<double>(n_);
      p[b] = static_cast<double>(counts_[b]) / static_cast<double>(n_);
    } else {
      snapshot_.set_particle(l, to);
    }
  }

 private:
  std::size_t index(PointView x) const {
    auto i = space_.index_of(x);
    if (!i) fail("state " + describe(x) + " left the finite state space");
    return *i;
  }

  static MeasureSnapshot make(const StateSpace& space, std::span<const Point> states) {
    if (states.empty()) fail("ensemble needs at least one individual");
    const std::size_t n = states.size();
    if (space.is_finite()) {
      std::vector<double> p(space.size(), 0.0);
      std::vector<std::size_t> c(space.size(), 0);
      for (const auto& x : states) {
        auto i = space.index_of(x);
        if (!i) fail("initial state " + describe(x) + " is not in the state space");
        ++c[*i];
      }
      for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<double>(c[i]) / static_cast<double>(n);
      return rebuild_pmf(std::move(p));
    }
    std::vector<double> coords;
    coords.reserve(n * space.dim());
    for (const auto& x : states) {
      if (x.size() != space.dim()) fail("initial state has the wrong dimension");
      coords.insert(coords.end(), x.begin(), x.end());
    }
    return MeasureSnapshot::cloud(space.dim(), std::move(coords));
  }

  static MeasureSnapshot rebuild_pmf(std::vector<double> p) {
    // Counts/n can miss 1 by a few ulps; the snapshot is only read by kernels.
    double total = 0.0;
    for (double v : p) total += v;
    if (std::abs(total - 1.0) > 1e-12)
      for (double& v : p) v /= total;
    return MeasureSnapshot::pmf(std::move(p));
  }

  const StateSpace& space_;
  std::size_t n_;
  std::vector<std::size_t> counts_;
  MeasureSnapshot snapshot_;
};

MeasureSnapshot placeholder_snapshot(const StateSpace& space, PointView x) {
  if (space.is_finite()) {
    auto i = space.index_of(x);
    if (!i) fail("initial state " + describe(x) + " is not in the state space");
    return MeasureSnapshot::dirac_pmf(space.size(), *i);
  }
  return MeasureSnapshot::dirac(x);
}

using ClockEntry = std::pair<double, std::size_t>;
using ClockQueue = std::priority_queue<ClockEntry, std::vector<ClockEntry>, std::greater<>>;

}  // namespace

// ---- JumpPath ----------------------------------------------------------

JumpPath::JumpPath(Horizon horizon, Point initial) : horizon_(horizon), initial_(std::move(initial)) {
  if (!(horizon.end > horizon.start)) fail("horizon end must exceed its start");
}

void JumpPath::push(double t, Point state) {
  const double last = events_.empty() ? horizon_.start : events_.back().time;
  if (!(t > last) || t > horizon_.end) fail("jump times must be strictly increasing within (start, end]");
  if (state.size() != initial_.size()) fail("jump state has the wrong dimension");
  events_.push_back({t, std::move(state)});
}

PointView JumpPath::value_at(double t) const {
  auto it = std::upper_bound(events_.begin(), events_.end(), t,
                             [](double v, const JumpEvent& e) { return v < e.time; });
  if (it == events_.begin()) return initial_;
  return std::prev(it)->state;
}

void JumpPath::validate(const StateSpace& space) const {
  if (!space.contains(initial_)) fail("path initial state " + describe(initial_) + " is outside the state space");
  double last = horizon_.start;
  for (const auto& e : events_) {
    if (!(e.time > last) || e.time > horizon_.end) fail("path event times are not strictly increasing in (start, end]");
    if (!space.contains(e.state)) fail("path state " + describe(e.state) + " is outside the state space");
    last = e.time;
  }
}

// ---- linear process ----------------------------------------------------

JumpPath simulate_linear(const IntensityKernel& kernel, const MarginalFlow* flow, PointView initial, Horizon horizon,
                         Rng& rng) {
  if (kernel.measure_dependent && !flow)
    fail("kernel '" + kernel.name + "' is measure-dependent; a marginal flow is required");
  if (initial.size() != kernel.space.dim()) fail("initial state has the wrong dimension");
  JumpPath path(horizon, Point(initial.begin(), initial.end()));
  const double c = kernel.bounds.c_lambda;
  if (c <= 0.0) return path;

  const MeasureSnapshot placeholder = flow ? MeasureSnapshot::dirac(initial) : placeholder_snapshot(kernel.space, initial);
  KernelProbe probe(kernel);
  Point x(initial.begin(), initial.end());
  double t = horizon.start;
  for (;;) {
    t += rng.exponential(c);
    if (t > horizon.end) break;
    const MeasureSnapshot& rho = flow ? flow->at(t) : placeholder;
    const double lambda = probe.rate(t, x, rho);
    const double u_accept = rng.uniform();
    const double u_mark = rng.uniform_open();
    if (u_accept * c >= lambda) continue;
    const Point z = probe.mark(t, x, rho, u_mark, rng);
    add_in_place(x, z);
    path.push(t, x);
  }
  return path;
}

// ---- Ensemble ----------------------------------------------------------

Ensemble::Ensemble(StateSpace space, std::vector<JumpPath> paths) : space_(std::move(space)), paths_(std::move(paths)) {
  if (paths_.empty()) fail("ensemble needs at least one path");
  for (const auto& p : paths_)
    if (p.start() != paths_.front().start() || p.end() != paths_.front().end())
      fail("ensemble paths must share the horizon");
}

MeasureSnapshot Ensemble::empirical_snapshot(double t) const {
  const double n = static_cast<double>(paths_.size());
  if (space_.is_finite()) {
    std::vector<double> p(space_.size(), 0.0);
    for (const auto& path : paths_) {
      auto i = space_.index_of(path.value_at(t));
      if (!i) fail("ensemble path left the finite state space");
      p[*i] += 1.0;
    }
    for (double& v : p) v /= n;
    return MeasureSnapshot::pmf(std::move(p), t);
  }
  std::vector<double> coords;
  coords.reserve(paths_.size() * space_.dim());
  for (const auto& path : paths_) {
    auto x = path.value_at(t);
    coords.insert(coords.end(), x.begin(), x.end());
  }
  return MeasureSnapshot::cloud(space_.dim(), std::move(coords), {}, t);
}

// ---- initial laws ------------------------------------------------------

Point draw_from(const StateSpace& space, const MeasureSnapshot& law, Rng& rng) {
  const double u = rng.uniform();
  const std::size_t m = law.size();
  if (!law.is_pmf() && law.uniform_weights()) {
    auto x = law.particle(std::min(m - 1, static_cast<std::size_t>(u * static_cast<double>(m))));
    return Point(x.begin(), x.end());
  }
  double acc = 0.0;
  std::size_t pick = m - 1;
  for (std::size_t i = 0; i < m; ++i) {
    acc += law.weight(i);
    if (u < acc) {
      pick = i;
      break;
    }
  }
  while (law.weight(pick) <= 0.0 && pick > 0) --pick;
  if (law.is_pmf()) {
    if (!space.is_finite() || space.size() != m) fail("pmf initial law does not match the state space");
    return space.point(pick);
  }
  auto x = law.particle(pick);
  return Point(x.begin(), x.end());
}

std::vector<Point> sample_initials(const StateSpace& space, const MeasureSnapshot& law, std::size_t n, StreamKey key) {
  std::vector<Point> out;
  out.reserve(n);
  for (std::size_t l = 0; l < n; ++l) {
    Rng rng = Rng::stream(key.seed, {key.replication, l, stream_purpose::initial});
    out.push_back(draw_from(space, law, rng));
  }
  return out;
}

JointInitialSampler identical_initials(const StateSpace& space, const MeasureSnapshot& law) {
  return [space, law](std::size_t, Rng& rng) {
    Point x = draw_from(space, law, rng);
    return std::make_pair(x, x);
  };
}

// ---- interacting system ------------------------------------------------

Ensemble simulate_interacting(const IntensityKernel& kernel, std::span<const Point> initials, Horizon horizon,
                              StreamKey key) {
  const std::size_t n = initials.size();
  if (n == 0) fail("interacting system needs n >= 1");
  std::vector<Point> state(initials.begin(), initials.end());
  std::vector<JumpPath> paths;
  paths.reserve(n);
  for (const auto& x : state) {
    if (!kernel.space.contains(x)) fail("initial state " + describe(x) + " is outside the state space");
    paths.emplace_back(horizon, x);
  }
  const double c = kernel.bounds.c_lambda;
  if (c <= 0.0) return Ensemble(kernel.space, std::move(paths));

  RunningEmpirical empirical(kernel.space, state);
  KernelProbe probe(kernel);
  std::vector<Rng> rngs;
  rngs.reserve(n);
  ClockQueue clock;
  for (std::size_t l = 0; l < n; ++l) {
    rngs.push_back(Rng::stream(key.seed, {key.replication, l, stream_purpose::clock}));
    const double t = horizon.start + rngs[l].exponential(c);
    if (t <= horizon.end) clock.emplace(t, l);
  }

  Point before;
  while (!clock.empty()) {
    const auto [t, l] = clock.top();
    clock.pop();
    Rng& rng = rngs[l];
    const MeasureSnapshot& rho = empirical.snapshot();
    const double lambda = probe.rate(t, state[l], rho);
    const double u_accept = rng.uniform();
    const double u_mark = rng.uniform_open();
    if (u_accept * c < lambda) {
      const Point z = probe.mark(t, state[l], rho, u_mark, rng);
      before = state[l];
      add_in_place(state[l], z);
      paths[l].push(t, state[l]);
      empirical.move(l, before, state[l]);
    }
    const double next = t + rng.exponential(c);
    if (next <= horizon.end) clock.emplace(next, l);
  }
  return Ensemble(kernel.space, std::move(paths));
}

Ensemble simulate_interacting(const IntensityKernel& kernel, const MeasureSnapshot& initial_law, std::size_t n,
                              Horizon horizon, StreamKey key) {
  const auto initials = sample_initials(kernel.space, initial_law, n, key);
  return simulate_interacting(kernel, initials, horizon, key);
}

// ---- coupled system ----------------------------------------------------

CoupledRun simulate_coupled(const IntensityKernel& kernel, const MarginalFlow& meanfield_flow, std::size_t n,
                            const JointInitialSampler& initials, Horizon horizon, StreamKey key, bool record_clock) {
  if (n == 0) fail("coupled system needs n >= 1");
  CoupledRun run;
  const bool have_quantile = kernel.mark_atoms || kernel.mark_quantile;
  run.crn_fallback = !have_quantile && kernel.space.dim() == 1;

  std::vector<Point> x(n), xbar(n);
  run.pairs.resize(n);
  for (std::size_t l = 0; l < n; ++l) {
    Rng rng = Rng::stream(key.seed, {key.replication, l, stream_purpose::initial});
    auto [a, b] = initials(l, rng);
    if (!kernel.space.contains(a) || !kernel.space.contains(b)) fail("coupled initial state outside the state space");
    x[l] = a;
    xbar[l] = b;
    run.pairs[l].interacting = JumpPath(horizon, std::move(a));
    run.pairs[l].meanfield = JumpPath(horizon, std::move(b));
    run.pairs[l].sup_distance = l1_distance(x[l], xbar[l]);
  }
  const double c = kernel.bounds.c_lambda;
  if (c <= 0.0) return run;

  RunningEmpirical empirical(kernel.space, x);
  KernelProbe probe_n(kernel), probe_bar(kernel);
  std::vector<Rng> rngs;
  rngs.reserve(n);
  std::vector<std::uint64_t> candidates(n, 0);
  ClockQueue clock;
  for (std::size_t l = 0; l < n; ++l) {
    rngs.push_back(Rng::stream(key.seed, {key.replication, l, stream_purpose::clock}));
    const double t = horizon.start + rngs[l].exponential(c);
    if (t <= horizon.end) clock.emplace(t, l);
  }

  Point before;
  while (!clock.empty()) {
    const auto [t, l] = clock.top();
    clock.pop();
    Rng& rng = rngs[l];
    CoupledPair& pair = run.pairs[l];
    if (record_clock) pair.clock.push_back(t);

    const MeasureSnapshot& eps = empirical.snapshot();
    const MeasureSnapshot& eta = meanfield_flow.at(t);
    const double lambda_n = probe_n.rate(t, x[l], eps);
    const double lambda_bar = probe_bar.rate(t, xbar[l], eta);
    const double u_accept = rng.uniform();
    const double u_mark = rng.uniform_open();
    const std::uint64_t candidate = candidates[l]++;

    if (u_accept * c < lambda_n) {
      Rng crn = Rng::stream(key.seed, {key.replication, l, stream_purpose::crn_mark, candidate});
      const Point z = probe_n.mark(t, x[l], eps, u_mark, crn);
      before = x[l];
      add_in_place(x[l], z);
      pair.interacting.push(t, x[l]);
      empirical.move(l, before, x[l]);
    }
    if (u_accept * c < lambda_bar) {
      Rng crn = Rng::stream(key.seed, {key.replication, l, stream_purpose::crn_mark, candidate});
      const Point z = probe_bar.mark(t, xbar[l], eta, u_mark, crn);
      add_in_place(xbar[l], z);
      pair.meanfield.push(t, xbar[l]);
    }
    pair.sup_distance = std::max(pair.sup_distance, l1_distance(x[l], xbar[l]));

    const double next = t + rng.exponential(c);
    if (next <= horizon.end) clock.emplace(next, l);
  }
  return run;
}

// ---- export ------------------------------------------------------------

void write_paths_csv_header(std::ostream& os, std::size_t dim) {
  CsvRow row(os);
  row << "replication" << "individual" << "event_time";
  for (std::size_t k = 0; k < dim; ++k) row << ("x" + std::to_string(k));
}

void write_paths_csv(std::ostream& os, std::uint64_t replication, const Ensemble& ensemble) {
  for (std::size_t l = 0; l < ensemble.size(); ++l) {
    const JumpPath& p = ensemble[l];
    {
      CsvRow row(os);
      row << replication << l << p.start();
      for (double v : p.initial()) row << v;
    }
    for (const auto& e : p.events()) {
      CsvRow row(os);
      row << replication << l << e.time;
      for (double v : e.state) row << v;
    }
  }
}

}  // namespace mfje
