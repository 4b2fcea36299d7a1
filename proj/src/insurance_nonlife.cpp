#include "mfje/insurance_nonlife.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/special_functions/gamma.hpp>

#include "mfje/error.hpp"
#include "mfje/stats.hpp"

namespace mfje {

namespace {

[[noreturn]] void fail(const std::string& what) { throw InvalidArgument("insurance_nonlife", what); }

std::size_t grid_index(const std::vector<double>& grid, double t) {
  auto it = std::upper_bound(grid.begin(), grid.end(), t);
  return it == grid.begin() ? 0 : static_cast<std::size_t>(it - grid.begin()) - 1;
}

double severity_quantile(double alpha, double theta, double u) {
  return theta * boost::math::gamma_p_inv(alpha, u);
}

KernelBounds claims_bounds(const GammaClaimsSpec& spec) {
  KernelBounds b;
  b.c_lambda = spec.claim_rate;
  b.q = 1.0;
  // E||z||_1 = E[Y] + 1 <= alpha theta_max + 1.
  b.c_r = spec.alpha * spec.theta_max + 1.0;
  return b;
}

}  // namespace

void GammaClaimsSpec::validate() const {
  auto bad = [](const std::string& what) { throw ConfigError(what); };
  if (!(alpha > 0.0)) bad("alpha must be > 0");
  if (!(theta_min > 0.0)) bad("theta_min must be > 0");
  if (!(theta_min < theta_max)) {
    std::ostringstream os;
    os << "theta_min (" << theta_min << ") must be below theta_max (" << theta_max << ")";
    bad(os.str());
  }
  if (!(theta_min < theta_star && theta_star < theta_max)) {
    std::ostringstream os;
    os << "theta_star (" << theta_star << ") must lie strictly between theta_min (" << theta_min
       << ") and theta_max (" << theta_max << ")";
    bad(os.str());
  }
  if (!(cap_K > 0.0)) bad("cap_K must be > 0");
  if (!(claim_rate >= 0.0) || !std::isfinite(claim_rate)) bad("claim_rate must be finite and >= 0");
  if (weight_fn.min() < 0.0 || weight_fn.max() > 1.0) bad("weight_fn must take values in [0, 1]");
  if (!(horizon.end > horizon.start)) bad("horizon end must exceed its start");
  if (!covariates.empty()) {
    double total = 0.0;
    for (const auto& a : covariates) {
      if (!(a.weight >= 0.0)) bad("covariate weights must be >= 0");
      total += a.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) bad("covariate weights must sum to 1");
    for (std::size_t i = 0; i < covariates.size(); ++i)
      for (std::size_t j = i + 1; j < covariates.size(); ++j)
        if (covariates[i].value == covariates[j].value) bad("covariate values must be distinct");
  }
}

double h_K(double w, double m, double K) {
  if (m == 0.0) return 0.0;
  return std::min(w / m, K);
}

double mean_capped_severity(const MeasureSnapshot& rho, double K) {
  if (rho.is_pmf() || rho.dim() != 3) fail("mbar expects a cloud of (w, m, u) particles");
  const std::size_t n = rho.size();
  double s = 0.0;
  if (rho.uniform_weights()) {
    auto c = rho.coordinates();
    for (std::size_t i = 0; i < n; ++i) s += h_K(c[3 * i], c[3 * i + 1], K);
    return s / static_cast<double>(n);
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto p = rho.particle(i);
    s += rho.weight(i) * h_K(p[0], p[1], K);
  }
  return s;
}

double credibility_scale(const GammaClaimsSpec& spec, double t, double mbar) {
  const double u = spec.weight_fn(t);
  const double raw = u * mbar / spec.alpha + (1.0 - u) * spec.theta_star;
  return std::max(spec.theta_min, std::min(raw, spec.theta_max));
}

StateSpace claims_space() {
  const double inf = std::numeric_limits<double>::infinity();
  return StateSpace::boxed(3, {{0.0, inf}, {0.0, inf}, {-inf, inf}});
}

MeasureSnapshot claims_initial_law(const GammaClaimsSpec& spec) {
  if (spec.covariates.empty()) return MeasureSnapshot::dirac(Point{0.0, 0.0, 0.0}, spec.horizon.start);
  std::vector<double> coords, weights;
  for (const auto& a : spec.covariates) {
    coords.insert(coords.end(), {0.0, 0.0, a.value});
    weights.push_back(a.weight);
  }
  return MeasureSnapshot::cloud(3, std::move(coords), std::move(weights), spec.horizon.start);
}

IntensityKernel gamma_claims_kernel(const GammaClaimsSpec& spec) {
  spec.validate();
  IntensityKernel k;
  k.name = "gamma-claims";
  k.space = claims_space();
  k.measure_dependent = true;
  const double lambda = spec.claim_rate;
  k.rate = [lambda](double, PointView, const MeasureSnapshot&) { return lambda; };
  k.mark_quantile = [spec](double t, PointView, const MeasureSnapshot& rho, double u) {
    const double theta = credibility_scale(spec, t, mean_capped_severity(rho, spec.cap_K));
    return Point{severity_quantile(spec.alpha, theta, u), 1.0, 0.0};
  };
  k.mark_sampler = [q = k.mark_quantile](double t, PointView x, const MeasureSnapshot& rho, Rng& rng) {
    return q(t, x, rho, rng.uniform_open());
  };
  k.bounds = claims_bounds(spec);
  return k;
}

IntensityKernel gamma_claims_linearised_kernel(const GammaClaimsSpec& spec, std::vector<double> grid,
                                               std::vector<double> mbar) {
  spec.validate();
  if (grid.empty() || grid.size() != mbar.size()) fail("mbar curve and grid differ in length");
  std::vector<double> theta(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) theta[k] = credibility_scale(spec, grid[k], mbar[k]);
  IntensityKernel k;
  k.name = "gamma-claims-linearised";
  k.space = claims_space();
  k.measure_dependent = false;
  const double lambda = spec.claim_rate;
  const double alpha = spec.alpha;
  k.rate = [lambda](double, PointView, const MeasureSnapshot&) { return lambda; };
  k.mark_quantile = [alpha, grid = std::move(grid), theta = std::move(theta)](double t, PointView,
                                                                                 const MeasureSnapshot&, double u) {
    return Point{severity_quantile(alpha, theta[grid_index(grid, t)], u), 1.0, 0.0};
  };
  k.mark_sampler = [q = k.mark_quantile](double t, PointView x, const MeasureSnapshot& rho, Rng& rng) {
    return q(t, x, rho, rng.uniform_open());
  };
  k.bounds = claims_bounds(spec);
  return k;
}

ClaimsEstimate expected_claim_amount_n(const GammaClaimsSpec& spec, std::size_t n, std::size_t replications,
                                       std::uint64_t seed, unsigned workers) {
  if (n == 0) fail("n must be >= 1");
  if (replications < 2) fail("at least two replications are needed for a standard error");
  const IntensityKernel kernel = gamma_claims_kernel(spec);
  const MeasureSnapshot law = claims_initial_law(spec);
  std::vector<double> per_rep(replications);
  parallel_for(replications, workers, [&](std::size_t r) {
    const Ensemble ens = simulate_interacting(kernel, law, n, spec.horizon, {seed, r});
    std::vector<double> w(n);
    for (std::size_t l = 0; l < n; ++l) w[l] = ens[l].final_state()[0];
    per_rep[r] = stable_sum(w) / static_cast<double>(n);
  });
  const MeanEstimate m = mean_estimate(per_rep);
  return {m.mean, m.std_error, replications};
}

GammaFixedPoint scalar_fixed_point_gamma(const GammaClaimsSpec& spec, std::span<const double> grid, double tol,
                                         std::size_t max_iter, std::size_t n_particles, std::uint64_t seed,
                                         unsigned workers) {
  spec.validate();
  if (!(tol > 0.0)) fail("tol must be positive");
  if (max_iter == 0) fail("max_iter must be positive");
  if (n_particles == 0) fail("particle count must be positive");
  if (grid.size() < 2 || grid.front() != spec.horizon.start || grid.back() != spec.horizon.end)
    fail("grid must span the model horizon");
  const std::size_t g = grid.size();
  const MeasureSnapshot law = claims_initial_law(spec);
  const StateSpace space = claims_space();

  GammaFixedPoint fp;
  fp.grid.assign(grid.begin(), grid.end());
  fp.mbar.assign(g, mean_capped_severity(law, spec.cap_K));
  fp.paths.resize(n_particles);

  // Fixed blocks keep the summation order independent of the worker count.
  constexpr std::size_t block = 2048;
  const std::size_t blocks = (n_particles + block - 1) / block;
  std::vector<std::vector<double>> partial(blocks, std::vector<double>(g));
  unsigned increases = 0;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    const IntensityKernel kernel = gamma_claims_linearised_kernel(spec, fp.grid, fp.mbar);
    parallel_for(blocks, workers, [&](std::size_t b) {
      auto& sums = partial[b];
      std::fill(sums.begin(), sums.end(), 0.0);
      const std::size_t end = std::min(n_particles, (b + 1) * block);
      for (std::size_t i = b * block; i < end; ++i) {
        Rng init = Rng::stream(seed, {i, stream_purpose::initial});
        const Point x0 = draw_from(space, law, init);
        Rng rng = Rng::stream(seed, {i, stream_purpose::clock});
        fp.paths[i] = simulate_linear(kernel, nullptr, x0, spec.horizon, rng);
        const auto& ev = fp.paths[i].events();
        std::size_t e = 0;
        double w = x0[0], m = x0[1];
        for (std::size_t k = 0; k < g; ++k) {
          while (e < ev.size() && ev[e].time <= grid[k]) {
            w = ev[e].state[0];
            m = ev[e].state[1];
            ++e;
          }
          sums[k] += h_K(w, m, spec.cap_K);
        }
      }
    });
    std::vector<double> next(g, 0.0);
    for (std::size_t k = 0; k < g; ++k) {
      for (std::size_t b = 0; b < blocks; ++b) next[k] += partial[b][k];
      next[k] /= static_cast<double>(n_particles);
    }
    double change = 0.0;
    for (std::size_t k = 0; k < g; ++k) change = std::max(change, std::abs(next[k] - fp.mbar[k]));
    fp.mbar = std::move(next);
    const auto t1 = std::chrono::steady_clock::now();
    fp.log.push_back({it, change, std::chrono::duration<double, std::milli>(t1 - t0).count()});
    if (change <= tol) {
      fp.converged = true;
      break;
    }
    if (fp.log.size() >= 2 && change > fp.log[fp.log.size() - 2].sup_w1_change)
      ++increases;
    else
      increases = 0;
    if (increases >= 3)
      throw NonContraction("meanfield", "mbar iterates moved apart for 3 consecutive iterations; shorten the horizon");
  }
  fp.theta.resize(g);
  for (std::size_t k = 0; k < g; ++k) fp.theta[k] = credibility_scale(spec, grid[k], fp.mbar[k]);
  return fp;
}

MeanfieldClaims meanfield_expected_claim(const GammaClaimsSpec& spec, std::span<const double> grid, double tol,
                                         std::size_t max_iter, std::size_t n_particles, std::uint64_t seed,
                                         unsigned workers) {
  MeanfieldClaims out;
  out.fixed_point = scalar_fixed_point_gamma(spec, grid, tol, max_iter, n_particles, seed, workers);
  const auto& paths = out.fixed_point.paths;
  std::vector<double> w(paths.size());
  for (std::size_t i = 0; i < paths.size(); ++i) w[i] = paths[i].final_state()[0];
  const MeanEstimate all = mean_estimate(w);
  out.total = {all.mean, all.std_error, all.count};

  std::vector<double> atoms;
  if (spec.covariates.empty())
    atoms.push_back(0.0);
  else
    for (const auto& a : spec.covariates) atoms.push_back(a.value);
  for (double u : atoms) {
    std::vector<double> stratum;
    for (std::size_t i = 0; i < paths.size(); ++i)
      if (paths[i].initial()[2] == u) stratum.push_back(w[i]);
    CovariateClaims c{u, std::nullopt};
    if (!stratum.empty()) {
      const MeanEstimate m = mean_estimate(stratum);
      c.estimate = ClaimsEstimate{m.mean, m.std_error, m.count};
    }
    out.by_covariate.push_back(c);
  }
  return out;
}

}  // namespace mfje
