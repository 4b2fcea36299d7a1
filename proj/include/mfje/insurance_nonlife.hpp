#pragma once

// Compound claims with credibility-coupled Gamma severities. An individual's
// state is (W, N, U): cumulative claim amount, claim count and a static
// covariate. Claims arrive at a constant rate; a claim of size
// Y ~ Gamma(alpha, theta_t(rho)) moves the state by (Y, 1, 0), where
//   theta_t(rho) = clamp(u(t) mbar(rho) / alpha + (1 - u(t)) theta*, theta_min, theta_max)
// and mbar(rho) is the rho-mean of h_K(w, m).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mfje/kernel.hpp"
#include "mfje/meanfield.hpp"
#include "mfje/parallel.hpp"
#include "mfje/piecewise.hpp"
#include "mfje/simulate.hpp"

namespace mfje {

struct CovariateAtom {
  double value = 0.0;
  double weight = 1.0;
};

struct GammaClaimsSpec {
  double alpha = 2.0;
  double theta_star = 0.5;
  double theta_min = 0.1;
  double theta_max = 2.0;
  double cap_K = 10.0;
  double claim_rate = 2.0;
  PiecewiseLinear weight_fn{0.0};
  // Finite covariate law; empty means a point mass at 0.
  std::vector<CovariateAtom> covariates;
  Horizon horizon{0.0, 1.0};

  // Throws ConfigError naming the offending field.
  void validate() const;
};

double h_K(double w, double m, double K);

// mbar(rho): rho-mean of h_K over a cloud of (w, m, u) particles.
double mean_capped_severity(const MeasureSnapshot& rho, double K);

double credibility_scale(const GammaClaimsSpec& spec, double t, double mbar);

StateSpace claims_space();

// Initial law: (0, 0, u) with u drawn from the covariate atoms.
MeasureSnapshot claims_initial_law(const GammaClaimsSpec& spec);

// Measure-dependent kernel; marks use the severity quantile.
IntensityKernel gamma_claims_kernel(const GammaClaimsSpec& spec);

// Kernel with theta_t computed from a given mbar curve (piecewise constant on
// `grid`, value at the largest grid point <= t) instead of from rho.
IntensityKernel gamma_claims_linearised_kernel(const GammaClaimsSpec& spec, std::vector<double> grid,
                                               std::vector<double> mbar);

struct ClaimsEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};

// MC estimate of E[W^{1,n}_T]. Each replication simulates the n-individual
// system; by exchangeability the replication's value is the average of W_T
// over its n individuals, and the standard error is taken across replications.
ClaimsEstimate expected_claim_amount_n(const GammaClaimsSpec& spec, std::size_t n, std::size_t replications,
                                       std::uint64_t seed, unsigned workers = default_workers());

struct GammaFixedPoint {
  std::vector<double> grid;
  std::vector<double> mbar;
  std::vector<double> theta;
  // Converged particle paths (the mean-field flow, kept as paths).
  std::vector<JumpPath> paths;
  std::vector<PicardIteration> log;
  bool converged = false;
};

// Fixed point of the scalar curve t -> mbar_t. Each iteration simulates
// n_particles iid paths under gamma_claims_linearised_kernel built from the
// previous curve, on the same random streams every iteration, and recomputes
// mbar on the grid. Stops when sup_t |change| <= tol.
GammaFixedPoint scalar_fixed_point_gamma(const GammaClaimsSpec& spec, std::span<const double> grid, double tol,
                                         std::size_t max_iter, std::size_t n_particles, std::uint64_t seed,
                                         unsigned workers = default_workers());

struct CovariateClaims {
  double covariate = 0.0;
  std::optional<ClaimsEstimate> estimate;  // empty when no particle has this covariate
};

struct MeanfieldClaims {
  ClaimsEstimate total;
  std::vector<CovariateClaims> by_covariate;
  GammaFixedPoint fixed_point;
};

MeanfieldClaims meanfield_expected_claim(const GammaClaimsSpec& spec, std::span<const double> grid, double tol,
                                         std::size_t max_iter, std::size_t n_particles, std::uint64_t seed,
                                         unsigned workers = default_workers());

}  // namespace mfje
