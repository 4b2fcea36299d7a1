#include "mfje/insurance_life.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mfje/error.hpp"
#include "mfje/meanfield.hpp"

namespace mfje {

namespace {

[[noreturn]] void fail(const std::string& what) { throw InvalidArgument("insurance_life", what); }

constexpr std::size_t kStates = 4;

void require_nonnegative(const PiecewiseLinear& f, const std::string& field) {
  if (f.min() < 0.0) throw ConfigError(field + " must be nonnegative");
}

// Adaptive Simpson on [a, b].
template <class F>
double simpson(const F& f, double a, double b, double fa, double fm, double fb, double whole, double eps, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double diff = left + right - whole;
  if (depth <= 0 || std::abs(diff) <= 15.0 * eps) return left + right + diff / 15.0;
  return simpson(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1) +
         simpson(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1);
}

template <class F>
double integrate_smooth(const F& f, double a, double b, double eps) {
  if (!(b > a)) return 0.0;
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson(f, a, b, fa, fm, fb, whole, eps, 40);
}

// Integral of b(t) D(tau, t) over [a, b], split at the knots of b and r so each
// piece is smooth.
double sojourn_integral(const PiecewiseLinear& b, const PaymentStream& p, double tau, double lo, double hi) {
  if (!(hi > lo)) return 0.0;
  if (b.is_constant() && b.values().front() == 0.0) return 0.0;
  std::vector<double> cuts{lo, hi};
  for (double t : b.times())
    if (t > lo && t < hi) cuts.push_back(t);
  for (double t : p.discount.times())
    if (t > lo && t < hi) cuts.push_back(t);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  const bool flat = p.discount.is_constant() && p.discount.values().front() == 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double a = cuts[i], c = cuts[i + 1];
    if (flat && b.is_constant()) {
      total += b.values().front() * (c - a);
      continue;
    }
    auto f = [&](double t) { return b(t) * p.discount_factor(tau, t); };
    total += integrate_smooth(f, a, c, 1e-12 * std::max(1.0, c - a));
  }
  return total;
}

std::size_t state_index(const StateSpace& space, PointView x) {
  auto i = space.index_of(x);
  if (!i) fail("path state is not a point of the state space");
  return *i;
}

void check_grid(const SirdSpec& spec, std::span<const double> grid) {
  if (grid.size() < 2) fail("reserve grid needs at least two points");
  if (grid.front() != spec.horizon.start || grid.back() != spec.horizon.end)
    fail("reserve grid must span the spec horizon");
}

// Jumps of at least 0.5 in l1 and |PV| within the payment bound.
void check_path(const JumpPath& path, double pv, const PaymentStream& p, double discount_sup) {
  PointView prev = path.initial();
  for (const auto& e : path.events()) {
    if (l1_distance(prev, e.state) < 0.5) fail("simulated jump smaller than 0.5 in l1 norm");
    prev = e.state;
  }
  const double bound = ((path.end() - path.start()) * p.sup_sojourn() +
                        static_cast<double>(path.jump_count()) * p.sup_transition()) *
                       discount_sup;
  if (std::abs(pv) > bound * (1.0 + 1e-9) + 1e-12) fail("present value exceeds the payment bound");
}

double discount_sup(const PaymentStream& p, Horizon h) {
  return std::exp(std::max(0.0, -p.discount.min()) * (h.end - h.start));
}

}  // namespace

void SirdSpec::validate() const {
  require_nonnegative(beta1, "beta1");
  require_nonnegative(recovery_rate, "recovery_rate");
  for (std::size_t i = 0; i < 3; ++i) require_nonnegative(death_rates[i], "death_rates[" + std::to_string(i) + "]");
  double total = 0.0;
  for (double p : initial_pmf) {
    if (!(p >= 0.0)) throw ConfigError("initial_pmf entries must be >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ConfigError("initial_pmf must sum to 1");
  if (!(horizon.end > horizon.start)) throw ConfigError("horizon end must exceed its start");
}

StateSpace sird_space() { return StateSpace::finite({{1.0}, {2.0}, {3.0}, {4.0}}, {"S", "I", "R", "D"}); }

DestinationKernel sird_destination_kernel(const SirdSpec& spec) {
  spec.validate();
  DestinationKernel k;
  k.name = "sird";
  k.space = sird_space();
  k.measure_dependent = true;
  auto atoms = [spec](double t, PointView x, const MeasureSnapshot& rho, JumpAtoms& out) {
    out.reset(1);
    const int s = static_cast<int>(std::lround(x[0]));
    auto add = [&](double y, double rate) {
      if (rate > 0.0) out.add({&y, 1}, rate);
    };
    switch (s) {
      case 1: {
        const double infected = rho.is_pmf() ? rho.probability(1) : 0.0;
        add(2.0, spec.beta1(t) * infected);
        add(4.0, spec.death_rates[0](t));
        break;
      }
      case 2:
        add(3.0, spec.recovery_rate(t));
        add(4.0, spec.death_rates[1](t));
        break;
      case 3:
        add(4.0, spec.death_rates[2](t));
        break;
      default:
        break;
    }
  };
  k.destination_atoms = atoms;
  k.rate = [atoms](double t, PointView x, const MeasureSnapshot& rho) {
    JumpAtoms a(1);
    atoms(t, x, rho, a);
    return a.total_rate();
  };
  k.destination_quantile = [atoms](double t, PointView x, const MeasureSnapshot& rho, double u) {
    JumpAtoms a(1);
    atoms(t, x, rho, a);
    if (a.size() == 0) return Point(x.begin(), x.end());
    auto y = a.jump(select_atom(a, u));
    return Point(y.begin(), y.end());
  };
  auto q = k.destination_quantile;
  k.destination_sampler = [q](double t, PointView x, const MeasureSnapshot& rho, Rng& rng) {
    return q(t, x, rho, rng.uniform());
  };

  const double beta = spec.beta1.max();
  const double rec = spec.recovery_rate.max();
  const double d1 = spec.death_rates[0].max(), d2 = spec.death_rates[1].max(), d3 = spec.death_rates[2].max();
  k.bounds.c_lambda = std::max({beta + d1, rec + d2, d3});
  k.bounds.q = 1.0;
  k.bounds.c_r = 3.0;
  // Mean jump size times rate, per state.
  const double moment = std::max({beta * 1.0 + d1 * 3.0, rec * 1.0 + d2 * 2.0, d3 * 1.0});
  k.bounds.c_mu = beta + 2.0 * moment;
  return k;
}

IntensityKernel sird_kernel(const SirdSpec& spec) { return jd_to_js(sird_destination_kernel(spec)); }

MeasureSnapshot sird_initial_law(const SirdSpec& spec) {
  return MeasureSnapshot::pmf(std::vector<double>(spec.initial_pmf.begin(), spec.initial_pmf.end()),
                              spec.horizon.start);
}

// ---- payments ----------------------------------------------------------

PaymentStream PaymentStream::zero(std::size_t states) {
  PaymentStream p;
  p.sojourn.assign(states, PiecewiseLinear{0.0});
  p.transition.assign(states, std::vector<PiecewiseLinear>(states, PiecewiseLinear{0.0}));
  return p;
}

PaymentStream PaymentStream::premium_benefit(double pi, double b) {
  PaymentStream p = zero(kStates);
  p.sojourn[0] = PiecewiseLinear{-pi};
  p.sojourn[1] = PiecewiseLinear{b};
  return p;
}

void PaymentStream::validate(std::size_t m) const {
  if (sojourn.size() != m) throw ConfigError("payments: expected " + std::to_string(m) + " sojourn functions");
  if (transition.size() != m) throw ConfigError("payments: transition table must be " + std::to_string(m) + " x " +
                                                std::to_string(m));
  for (const auto& row : transition)
    if (row.size() != m) throw ConfigError("payments: transition table rows must have " + std::to_string(m) + " entries");
}

double PaymentStream::discount_factor(double tau, double t) const {
  if (discount.is_constant()) return std::exp(-discount.values().front() * (t - tau));
  return std::exp(-discount.integral(tau, t));
}

double PaymentStream::sup_sojourn() const {
  double s = 0.0;
  for (const auto& f : sojourn) s = std::max(s, f.sup_abs());
  return s;
}

double PaymentStream::sup_transition() const {
  double s = 0.0;
  for (const auto& row : transition)
    for (const auto& f : row) s = std::max(s, f.sup_abs());
  return s;
}

double present_value(const JumpPath& path, const PaymentStream& payments, const StateSpace& space) {
  if (!space.is_finite()) fail("present_value requires a finite state space");
  payments.validate(space.size());
  const double tau = path.start();
  std::size_t s = state_index(space, path.initial());
  double t = tau;
  double pv = 0.0;
  for (const auto& e : path.events()) {
    pv += sojourn_integral(payments.sojourn[s], payments, tau, t, e.time);
    const std::size_t to = state_index(space, e.state);
    const double b = payments.transition[s][to](e.time);
    if (b != 0.0) pv += payments.discount_factor(tau, e.time) * b;
    s = to;
    t = e.time;
  }
  pv += sojourn_integral(payments.sojourn[s], payments, tau, t, path.end());
  return pv;
}

// ---- reserves ----------------------------------------------------------

MeanfieldReserves meanfield_reserves(const SirdSpec& spec, const PaymentStream& payments,
                                     std::span<const double> grid) {
  spec.validate();
  payments.validate(kStates);
  check_grid(spec, grid);
  const IntensityKernel kernel = sird_kernel(spec);
  const StateSpace& space = kernel.space;

  MeanfieldReserves out;
  ForwardResult fr = solve_nonlinear_forward(kernel, spec.initial_pmf, grid);
  out.flow = std::move(fr.flow);
  std::size_t renorm = fr.renormalized_steps;
  for (std::size_t x = 0; x < kStates; ++x) {
    const MeasureSnapshot delta = MeasureSnapshot::dirac_pmf(kStates, x);
    ForwardResult lt = solve_linear_forward(kernel, &out.flow, delta.probabilities(), grid);
    renorm += lt.renormalized_steps;
    out.transitions.push_back(std::move(lt.flow));
  }

  // Payment rate per state at each grid point, discounted.
  const std::size_t g = grid.size();
  std::vector<std::array<double, kStates>> rate(g);
  GeneratorMatrix q(kStates);
  for (std::size_t k = 0; k < g; ++k) {
    const double t = grid[k];
    build_generator(kernel, out.flow[k], t, q);
    const double d = payments.discount_factor(spec.horizon.start, t);
    for (std::size_t y = 0; y < kStates; ++y) {
      double c = payments.sojourn[y](t);
      for (std::size_t z = 0; z < kStates; ++z)
        if (z != y && q(y, z) != 0.0) c += payments.transition[y][z](t) * q(y, z);
      rate[k][y] = d * c;
    }
  }
  auto reserve = [&](const MarginalFlow& flow) {
    double total = 0.0;
    double prev = 0.0;
    for (std::size_t k = 0; k < g; ++k) {
      auto p = flow[k].probabilities();
      double v = 0.0;
      for (std::size_t y = 0; y < kStates; ++y) v += p[y] * rate[k][y];
      if (k > 0) total += 0.5 * (grid[k] - grid[k - 1]) * (prev + v);
      prev = v;
    }
    return total;
  };

  ReserveReport& r = out.report;
  r.method = "forward-analytic";
  r.cohort = reserve(out.flow);
  double mixed = 0.0;
  for (std::size_t x = 0; x < kStates; ++x) {
    const double v = reserve(out.transitions[x]);
    r.labels.push_back(space.label(x));
    r.statewise.push_back(v);
    r.statewise_se.push_back(0.0);
    r.stratum_counts.push_back(0);
    mixed += spec.initial_pmf[x] * v;
  }
  r.mixing_residual = std::abs(mixed - r.cohort);
  r.grid_points = g;
  r.renormalized_steps = renorm;
  return out;
}

ReserveReport n_individual_reserves(const SirdSpec& spec, const PaymentStream& payments, std::size_t n,
                                    std::size_t replications, std::uint64_t seed, unsigned workers) {
  spec.validate();
  payments.validate(kStates);
  if (n == 0) fail("n must be >= 1");
  if (replications < 2) fail("at least two replications are needed for a standard error");
  const IntensityKernel kernel = sird_kernel(spec);
  const MeasureSnapshot law = sird_initial_law(spec);
  const double dsup = discount_sup(payments, spec.horizon);

  std::vector<double> cohort(replications);
  std::vector<std::array<double, kStates>> sums(replications);
  std::vector<std::array<double, kStates>> counts(replications);
  parallel_for(replications, workers, [&](std::size_t r) {
    const Ensemble ens = simulate_interacting(kernel, law, n, spec.horizon, {seed, r});
    std::vector<double> pv(n);
    std::array<std::vector<double>, kStates> by_state;
    for (std::size_t l = 0; l < n; ++l) {
      pv[l] = present_value(ens[l], payments, kernel.space);
      check_path(ens[l], pv[l], payments, dsup);
      by_state[state_index(kernel.space, ens[l].initial())].push_back(pv[l]);
    }
    cohort[r] = stable_sum(pv) / static_cast<double>(n);
    for (std::size_t x = 0; x < kStates; ++x) {
      sums[r][x] = stable_sum(by_state[x]);
      counts[r][x] = static_cast<double>(by_state[x].size());
    }
  });

  ReserveReport rep;
  rep.method = "monte-carlo";
  const MeanEstimate m = mean_estimate(cohort);
  rep.cohort = m.mean;
  rep.cohort_se = m.std_error;
  rep.n = n;
  rep.replications = replications;
  rep.seed = seed;
  const StateSpace space = sird_space();
  const double rd = static_cast<double>(replications);
  for (std::size_t x = 0; x < kStates; ++x) {
    rep.labels.push_back(space.label(x));
    std::vector<double> s(replications), c(replications);
    for (std::size_t r = 0; r < replications; ++r) {
      s[r] = sums[r][x];
      c[r] = counts[r][x];
    }
    const double total_c = stable_sum(c);
    rep.stratum_counts.push_back(static_cast<std::size_t>(total_c));
    if (total_c == 0.0) {
      rep.statewise.push_back(std::nullopt);
      rep.statewise_se.push_back(std::nullopt);
      continue;
    }
    const double est = stable_sum(s) / total_c;
    std::vector<double> e2(replications);
    for (std::size_t r = 0; r < replications; ++r) {
      const double e = s[r] - est * c[r];
      e2[r] = e * e;
    }
    rep.statewise.push_back(est);
    rep.statewise_se.push_back(std::sqrt(rd / (rd - 1.0) * stable_sum(e2)) / total_c);
  }
  return rep;
}

ReserveStats reserve_lln_clt(const SirdSpec& spec, const PaymentStream& payments, std::span<const std::size_t> n_list,
                             const ReserveStatsOptions& options, std::uint64_t seed, unsigned workers) {
  if (n_list.empty()) fail("n_list must not be empty");
  for (std::size_t i = 1; i < n_list.size(); ++i)
    if (!(n_list[i] > n_list[i - 1])) fail("n_list must be increasing");
  if (n_list.front() == 0) fail("n_list entries must be >= 1");
  if (options.replications < 2) fail("at least two replications are needed");
  if (options.sigma_paths < 2) fail("sigma needs at least two mean-field paths");

  const auto grid = uniform_grid(spec.horizon.start, spec.horizon.end, options.grid_points);
  const MeanfieldReserves mf = meanfield_reserves(spec, payments, grid);
  const IntensityKernel kernel = sird_kernel(spec);
  const MeasureSnapshot law = sird_initial_law(spec);

  ReserveStats out;
  out.vbar = mf.report.cohort;
  for (const auto& v : mf.report.statewise) out.vbar_statewise.push_back(*v);

  // sigma from iid mean-field paths on their own streams.
  const std::uint64_t sigma_seed = mix64(seed ^ 0x5167a11ULL);
  std::vector<double> pv(options.sigma_paths);
  parallel_for(options.sigma_paths, workers, [&](std::size_t i) {
    Rng init = Rng::stream(sigma_seed, {i, stream_purpose::initial});
    const Point x0 = draw_from(kernel.space, law, init);
    Rng rng = Rng::stream(sigma_seed, {i, stream_purpose::clock});
    const JumpPath path = simulate_linear(kernel, &mf.flow, x0, spec.horizon, rng);
    pv[i] = present_value(path, payments, kernel.space);
  });
  const MeanEstimate pm = mean_estimate(pv);
  const double np = static_cast<double>(options.sigma_paths);
  out.sigma = pm.std_error * std::sqrt(np);
  if (std::isnan(out.sigma) || out.sigma < 0.0) {
    std::ostringstream os;
    os << "sigma estimate " << out.sigma << " is not a nonnegative number";
    throw Error("stats", os.str());
  }
  out.sigma_se = out.sigma / std::sqrt(2.0 * (np - 1.0));
  // Relative to the scale of the present values, so rounding noise in a
  // deterministic PV does not count as spread.
  out.degenerate = out.sigma <= 1e-12 * std::max(1.0, std::abs(pm.mean));

  std::vector<LlnSamples> lln;
  for (std::size_t n : n_list) {
    const std::size_t reps = options.replications;
    std::vector<double> avg(reps), within(reps);
    std::vector<std::array<double, kStates>> ratio(reps);
    parallel_for(reps, workers, [&](std::size_t r) {
      const Ensemble ens = simulate_interacting(kernel, law, n, spec.horizon, {seed, r});
      std::vector<double> v(n);
      std::array<std::vector<double>, kStates> by_state;
      for (std::size_t l = 0; l < n; ++l) {
        v[l] = present_value(ens[l], payments, kernel.space);
        by_state[state_index(kernel.space, ens[l].initial())].push_back(v[l]);
      }
      const MeanEstimate e = mean_estimate(v);
      avg[r] = e.mean;
      within[r] = n > 1 ? e.std_error * e.std_error * static_cast<double>(n) : 0.0;
      for (std::size_t x = 0; x < kStates; ++x)
        ratio[r][x] = by_state[x].empty() ? std::numeric_limits<double>::quiet_NaN()
                                          : stable_sum(by_state[x]) / static_cast<double>(by_state[x].size());
    });

    ReserveStatsRow row;
    row.n = n;
    const double nd = static_cast<double>(n);
    const MeanEstimate am = mean_estimate(avg);
    const double var_avg = am.std_error * am.std_error * static_cast<double>(reps);
    const double var_pv = stable_sum(within) / static_cast<double>(reps);
    row.n_cov = n > 1 ? nd * (nd * var_avg - var_pv) / (nd - 1.0) : std::numeric_limits<double>::quiet_NaN();
    for (std::size_t x = 0; x < kStates; ++x) {
      std::vector<double> sq;
      for (std::size_t r = 0; r < reps; ++r)
        if (!std::isnan(ratio[r][x])) sq.push_back((ratio[r][x] - out.vbar_statewise[x]) * (ratio[r][x] - out.vbar_statewise[x]));
      if (sq.empty())
        row.statewise_l2.push_back(std::nullopt);
      else
        row.statewise_l2.push_back(stable_sum(sq) / static_cast<double>(sq.size()));
    }
    if (!out.degenerate) {
      row.standardized.resize(reps);
      for (std::size_t r = 0; r < reps; ++r) row.standardized[r] = std::sqrt(nd) * (avg[r] - out.vbar) / out.sigma;
      if (reps >= 200) row.clt = clt_check(row.standardized, options.thresholds);
    }
    lln.push_back({n, std::move(avg)});
    out.rows.push_back(std::move(row));
  }
  out.lln = lln_check(lln, out.vbar);
  for (std::size_t i = 0; i < out.rows.size(); ++i) {
    out.rows[i].l2_error = out.lln.rows[i].l2_error;
    out.rows[i].l2_ci_low = out.lln.rows[i].ci_low;
    out.rows[i].l2_ci_high = out.lln.rows[i].ci_high;
  }
  return out;
}

}  // namespace mfje
