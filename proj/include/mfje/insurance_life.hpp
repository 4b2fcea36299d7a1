#pragma once

// SIRD mean-field life model on E = {1, 2, 3, 4} (susceptible, infected,
// recovered, dead), payment streams, present values and reserves.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfje/forward.hpp"
#include "mfje/kernel.hpp"
#include "mfje/parallel.hpp"
#include "mfje/piecewise.hpp"
#include "mfje/simulate.hpp"
#include "mfje/stats.hpp"

namespace mfje {

struct SirdSpec {
  PiecewiseLinear beta1{3.0};
  PiecewiseLinear recovery_rate{1.0};
  // Death intensities out of states 1, 2 and 3.
  std::array<PiecewiseLinear, 3> death_rates{PiecewiseLinear{0.01}, PiecewiseLinear{0.1}, PiecewiseLinear{0.01}};
  std::array<double, 4> initial_pmf{0.9, 0.1, 0.0, 0.0};
  Horizon horizon{0.0, 1.0};

  void validate() const;
};

StateSpace sird_space();

// Destination atoms: 1 -> 2 at beta1(t) rho({2}), 2 -> 3 at the recovery
// rate, x -> 4 at the death rate of x.
DestinationKernel sird_destination_kernel(const SirdSpec& spec);
// Jump-size form of the destination kernel.
IntensityKernel sird_kernel(const SirdSpec& spec);

MeasureSnapshot sird_initial_law(const SirdSpec& spec);

// Sojourn payments b(t, x), transition payments b^y(t, x) for a jump x -> y,
// and the discount rate r(t), on a finite space with m states.
struct PaymentStream {
  std::vector<PiecewiseLinear> sojourn;
  std::vector<std::vector<PiecewiseLinear>> transition;  // [from][to]
  PiecewiseLinear discount{0.0};

  static PaymentStream zero(std::size_t states);
  // -pi dt while susceptible, +b dt while infected.
  static PaymentStream premium_benefit(double pi, double b);

  std::size_t states() const noexcept { return sojourn.size(); }
  void validate(std::size_t states) const;
  // exp(-int_tau^t r).
  double discount_factor(double tau, double t) const;
  double sup_sojourn() const;
  double sup_transition() const;
};

// Discounted sojourn payments, integrated exactly between jumps by adaptive
// Simpson, plus discounted transition payments at each jump. The path's
// states must be points of `space`.
double present_value(const JumpPath& path, const PaymentStream& payments, const StateSpace& space);

struct ReserveReport {
  std::string method;  // "forward-analytic" or "monte-carlo"
  double cohort = 0.0;
  double cohort_se = 0.0;
  std::vector<std::string> labels;
  // Missing when no replication started in the state.
  std::vector<std::optional<double>> statewise;
  std::vector<std::optional<double>> statewise_se;
  std::vector<std::size_t> stratum_counts;
  // |sum_x zeta(x) V(x) - V|; forward-analytic only.
  double mixing_residual = 0.0;
  std::size_t grid_points = 0;
  std::size_t n = 0;
  std::size_t replications = 0;
  std::uint64_t seed = 0;
  std::size_t renormalized_steps = 0;
};

struct MeanfieldReserves {
  ReserveReport report;
  MarginalFlow flow;                      // eta-bar
  std::vector<MarginalFlow> transitions;  // eta-tilde(x, .) for each state x
};

// Forward method: eta-bar from the non-linear forward equation, eta-tilde(x, .)
// from the linearised equations, then trapezoid quadrature on `grid` of
//   V(x) = int D(t) sum_y eta-tilde_t(x, y) [b(t, y) + sum_y' b^y'(t, y) rate_{y -> y'}(t, eta-bar_t)] dt.
// The cohort value integrates the same expression against eta-bar itself.
MeanfieldReserves meanfield_reserves(const SirdSpec& spec, const PaymentStream& payments,
                                     std::span<const double> grid);

// Monte Carlo V^{1,n}: every individual of every replication contributes
// (exchangeability); state-wise values condition on the initial state, with
// delta-method standard errors computed across replications.
ReserveReport n_individual_reserves(const SirdSpec& spec, const PaymentStream& payments, std::size_t n,
                                    std::size_t replications, std::uint64_t seed,
                                    unsigned workers = default_workers());

struct ReserveStatsRow {
  std::size_t n = 0;
  double l2_error = 0.0;
  double l2_ci_low = 0.0;
  double l2_ci_high = 0.0;
  // n * Cov(PV^1, PV^2), estimated from the spread of cohort averages.
  double n_cov = 0.0;
  // Mean squared error of the state-wise ratio estimator, per state (missing
  // when no replication had an individual starting there).
  std::vector<std::optional<double>> statewise_l2;
  // sqrt(n) (average - V) / sigma, one per replication.
  std::vector<double> standardized;
  std::optional<CltReport> clt;
};

struct ReserveStats {
  double vbar = 0.0;
  std::vector<double> vbar_statewise;
  double sigma = 0.0;
  double sigma_se = 0.0;
  bool degenerate = false;
  std::vector<ReserveStatsRow> rows;
  LlnReport lln;
};

struct ReserveStatsOptions {
  std::size_t replications = 1000;
  // Mean-field paths used to estimate sigma.
  std::size_t sigma_paths = 200000;
  std::size_t grid_points = 1001;
  CltThresholds thresholds;
};

// LLN and CLT diagnostics for the cohort present value. Throws when the sigma
// estimate is negative or not a number; sigma = 0 is reported as degenerate.
ReserveStats reserve_lln_clt(const SirdSpec& spec, const PaymentStream& payments, std::span<const std::size_t> n_list,
                             const ReserveStatsOptions& options, std::uint64_t seed,
                             unsigned workers = default_workers());

}  // namespace mfje
