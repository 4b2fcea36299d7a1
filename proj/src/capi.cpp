#include "mfje/mfje.h"

#include <exception>
#include <string>

#include "mfje/config.hpp"
#include "mfje/error.hpp"
#include "mfje/forward.hpp"
#include "mfje/insurance_life.hpp"
#include "mfje/meanfield.hpp"
#include "mfje/metrics.hpp"
#include "mfje/runner.hpp"

struct mfje_model {
  mfje::IntensityKernel kernel;
  std::vector<double> initial_pmf;
  mfje::Horizon horizon;
};

struct mfje_flow {
  mfje::MarginalFlow flow;
};

namespace {

thread_local std::string last_error;

mfje_status fail(mfje_status s, const std::string& what) {
  last_error = what;
  return s;
}

// Maps exceptions to status codes.
template <class F>
mfje_status guarded(F&& f) {
  try {
    last_error.clear();
    return f();
  } catch (const mfje::ConfigError& e) {
    return fail(MFJE_ERR_CONFIG, e.what());
  } catch (const mfje::BoundViolation& e) {
    return fail(MFJE_ERR_BOUND_VIOLATION, e.what());
  } catch (const mfje::StabilityError& e) {
    return fail(MFJE_ERR_STABILITY, e.what());
  } catch (const mfje::NonContraction& e) {
    return fail(MFJE_ERR_NON_CONTRACTION, e.what());
  } catch (const mfje::InvalidArgument& e) {
    return fail(MFJE_ERR_INVALID_ARGUMENT, e.what());
  } catch (const mfje::Error& e) {
    return fail(MFJE_ERR_RUNTIME, e.what());
  } catch (const std::bad_alloc&) {
    return fail(MFJE_ERR_RUNTIME, "out of memory");
  } catch (const std::exception& e) {
    return fail(MFJE_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(MFJE_ERR_INTERNAL, "unknown error");
  }
}

#define MFJE_REQUIRE(cond, what) \
  if (!(cond)) return fail(MFJE_ERR_INVALID_ARGUMENT, what)

}  // namespace

extern "C" {

const char* mfje_version(void) { return MFJE_VERSION; }

const char* mfje_last_error(void) { return last_error.c_str(); }

const char* mfje_status_name(mfje_status status) {
  switch (status) {
    case MFJE_OK: return "ok";
    case MFJE_ERR_INVALID_ARGUMENT: return "invalid argument";
    case MFJE_ERR_CONFIG: return "config error";
    case MFJE_ERR_RUNTIME: return "runtime error";
    case MFJE_ERR_BOUND_VIOLATION: return "bound violation";
    case MFJE_ERR_STABILITY: return "stability error";
    case MFJE_ERR_NON_CONTRACTION: return "non-contraction";
    case MFJE_ERR_MISMATCH: return "output mismatch";
    case MFJE_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void mfje_run_options_init(mfje_run_options* options) {
  if (!options) return;
  *options = mfje_run_options{};
}

mfje_status mfje_run(const mfje_run_options* options) {
  MFJE_REQUIRE(options, "options is NULL");
  MFJE_REQUIRE(options->out_dir, "out_dir is NULL");
  MFJE_REQUIRE(options->config_text || options->config_path, "config_text and config_path are both NULL");
  return guarded([&] {
    mfje::RunOptions opt;
    opt.config_text = options->config_text ? std::string(options->config_text)
                                           : mfje::read_text_file(options->config_path);
    opt.out_dir = options->out_dir;
    if (options->experiment) opt.experiment = std::string(options->experiment);
    if (options->has_seed) opt.seed = options->seed;
    opt.workers = options->workers ? options->workers : mfje::default_workers();
    opt.quiet = options->quiet != 0;
    mfje::run_experiment(opt);
    return MFJE_OK;
  });
}

mfje_status mfje_rerun_manifest(const char* manifest_path, const char* out_dir, unsigned workers, int quiet) {
  MFJE_REQUIRE(manifest_path, "manifest_path is NULL");
  MFJE_REQUIRE(out_dir, "out_dir is NULL");
  return guarded([&] {
    const auto rr = mfje::rerun_from_manifest(manifest_path, out_dir, workers ? workers : mfje::default_workers(),
                                              quiet != 0);
    if (!rr.mismatched.empty()) {
      std::string names;
      for (const auto& n : rr.mismatched) names += (names.empty() ? "" : ", ") + n;
      return fail(MFJE_ERR_MISMATCH, "cli: rerun differs from manifest in " + names);
    }
    return MFJE_OK;
  });
}

mfje_status mfje_model_sird(double beta1, double recovery_rate, const double death_rates[3],
                            const double initial_pmf[4], double t0, double t1, mfje_model** out) {
  MFJE_REQUIRE(death_rates && initial_pmf && out, "NULL argument");
  return guarded([&] {
    mfje::SirdSpec spec;
    spec.beta1 = mfje::PiecewiseLinear(beta1);
    spec.recovery_rate = mfje::PiecewiseLinear(recovery_rate);
    for (int i = 0; i < 3; ++i) spec.death_rates[i] = mfje::PiecewiseLinear(death_rates[i]);
    for (int i = 0; i < 4; ++i) spec.initial_pmf[i] = initial_pmf[i];
    spec.horizon = {t0, t1};
    spec.validate();
    *out = new mfje_model{mfje::sird_kernel(spec), {initial_pmf, initial_pmf + 4}, spec.horizon};
    return MFJE_OK;
  });
}

mfje_status mfje_model_two_state(double forward_rate, double backward_rate, const double initial_pmf[2], double t0,
                                 double t1, mfje_model** out) {
  MFJE_REQUIRE(initial_pmf && out, "NULL argument");
  MFJE_REQUIRE(t1 > t0, "t1 must exceed t0");
  return guarded([&] {
    auto law = mfje::MeasureSnapshot::pmf({initial_pmf[0], initial_pmf[1]});
    law.validate();
    *out = new mfje_model{mfje::two_state_kernel(forward_rate, backward_rate), {initial_pmf, initial_pmf + 2},
                          {t0, t1}};
    return MFJE_OK;
  });
}

mfje_status mfje_model_states(const mfje_model* model, size_t* states) {
  MFJE_REQUIRE(model && states, "NULL argument");
  *states = model->kernel.space.size();
  return MFJE_OK;
}

void mfje_model_destroy(mfje_model* model) { delete model; }

mfje_status mfje_solve_forward(const mfje_model* model, size_t grid_points, mfje_flow** out) {
  MFJE_REQUIRE(model && out, "NULL argument");
  MFJE_REQUIRE(grid_points >= 2, "grid_points must be at least 2");
  return guarded([&] {
    const auto grid = mfje::uniform_grid(model->horizon.start, model->horizon.end, grid_points);
    auto res = mfje::solve_nonlinear_forward(model->kernel, model->initial_pmf, grid);
    *out = new mfje_flow{std::move(res.flow)};
    return MFJE_OK;
  });
}

mfje_status mfje_solve_picard(const mfje_model* model, size_t grid_points, double tol, size_t max_iter,
                              mfje_flow** out) {
  MFJE_REQUIRE(model && out, "NULL argument");
  MFJE_REQUIRE(grid_points >= 2, "grid_points must be at least 2");
  MFJE_REQUIRE(tol > 0.0, "tol must be positive");
  return guarded([&] {
    const auto grid = mfje::uniform_grid(model->horizon.start, model->horizon.end, grid_points);
    mfje::PicardOptions po;
    po.tol = tol;
    po.max_iter = max_iter;
    auto res = mfje::picard_solve(model->kernel, mfje::MeasureSnapshot::pmf(model->initial_pmf), grid, po);
    *out = new mfje_flow{std::move(res.flow)};
    return MFJE_OK;
  });
}

mfje_status mfje_flow_size(const mfje_flow* flow, size_t* times, size_t* states) {
  MFJE_REQUIRE(flow && times && states, "NULL argument");
  *times = flow->flow.size();
  *states = flow->flow.size() ? flow->flow[0].size() : 0;
  return MFJE_OK;
}

mfje_status mfje_flow_time(const mfje_flow* flow, size_t k, double* t) {
  MFJE_REQUIRE(flow && t, "NULL argument");
  MFJE_REQUIRE(k < flow->flow.size(), "time index out of range");
  *t = flow->flow.grid()[k];
  return MFJE_OK;
}

mfje_status mfje_flow_probability(const mfje_flow* flow, size_t k, size_t state, double* p) {
  MFJE_REQUIRE(flow && p, "NULL argument");
  MFJE_REQUIRE(k < flow->flow.size(), "time index out of range");
  MFJE_REQUIRE(state < flow->flow[k].size(), "state index out of range");
  *p = flow->flow[k].probability(state);
  return MFJE_OK;
}

void mfje_flow_destroy(mfje_flow* flow) { delete flow; }

mfje_status mfje_w1_1d(const double* a, size_t na, const double* b, size_t nb, double* out) {
  MFJE_REQUIRE(a && b && out, "NULL argument");
  return guarded([&] {
    *out = mfje::w1_1d({a, na}, {b, nb});
    return MFJE_OK;
  });
}

mfje_status mfje_w1_discrete(const double* pmf_a, const double* pmf_b, size_t m, const double* cost, double* out) {
  MFJE_REQUIRE(pmf_a && pmf_b && cost && out, "NULL argument");
  return guarded([&] {
    mfje::CostMatrix c(m, m);
    for (size_t i = 0; i < m; ++i)
      for (size_t j = 0; j < m; ++j) c(i, j) = cost[i * m + j];
    *out = mfje::w1_discrete({pmf_a, m}, {pmf_b, m}, c);
    return MFJE_OK;
  });
}

mfje_status mfje_fournier_rate(double n, unsigned d, double q, double* out) {
  MFJE_REQUIRE(out, "NULL argument");
  return guarded([&] {
    *out = mfje::fournier_rate(n, d, q);
    return MFJE_OK;
  });
}

}  // extern "C"
