/* C interface to the mfje engine. All functions return an mfje_status; on
 * failure mfje_last_error() describes the error (per thread). Handles are
 * opaque and must be released with their destroy function. */
#ifndef MFJE_H
#define MFJE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MFJE_API __declspec(dllexport)
#else
#define MFJE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mfje_status {
  MFJE_OK = 0,
  MFJE_ERR_INVALID_ARGUMENT = 1,
  MFJE_ERR_CONFIG = 2,
  MFJE_ERR_RUNTIME = 3,
  MFJE_ERR_BOUND_VIOLATION = 4,
  MFJE_ERR_STABILITY = 5,
  MFJE_ERR_NON_CONTRACTION = 6,
  MFJE_ERR_MISMATCH = 7,
  MFJE_ERR_INTERNAL = 8
} mfje_status;

MFJE_API const char* mfje_version(void);
MFJE_API const char* mfje_last_error(void);
MFJE_API const char* mfje_status_name(mfje_status status);

/* ---- experiments ---- */

typedef struct mfje_run_options {
  const char* config_path; /* read when config_text is NULL */
  const char* config_text;
  const char* out_dir;
  const char* experiment; /* subcommand name, or NULL to use [experiment].name */
  int has_seed;
  uint64_t seed;
  unsigned workers; /* 0 means available parallelism */
  int quiet;
} mfje_run_options;

MFJE_API void mfje_run_options_init(mfje_run_options* options);
MFJE_API mfje_status mfje_run(const mfje_run_options* options);

/* Reruns the experiment recorded in a manifest.json into out_dir and compares
 * file hashes; MFJE_ERR_MISMATCH when any output differs. */
MFJE_API mfje_status mfje_rerun_manifest(const char* manifest_path, const char* out_dir, unsigned workers, int quiet);

/* ---- models and forward flows ---- */

typedef struct mfje_model mfje_model;
typedef struct mfje_flow mfje_flow;

/* SIRD with constant rates; deaths are the rates out of states 1, 2, 3. */
MFJE_API mfje_status mfje_model_sird(double beta1, double recovery_rate, const double death_rates[3],
                                     const double initial_pmf[4], double t0, double t1, mfje_model** out);
/* Two states {1, 2}: 1 -> 2 at forward_rate, 2 -> 1 at backward_rate. */
MFJE_API mfje_status mfje_model_two_state(double forward_rate, double backward_rate, const double initial_pmf[2],
                                          double t0, double t1, mfje_model** out);
MFJE_API mfje_status mfje_model_states(const mfje_model* model, size_t* states);
MFJE_API void mfje_model_destroy(mfje_model* model);

/* Non-linear forward equation on a uniform grid of grid_points times. */
MFJE_API mfje_status mfje_solve_forward(const mfje_model* model, size_t grid_points, mfje_flow** out);
/* Picard iteration to tolerance tol. */
MFJE_API mfje_status mfje_solve_picard(const mfje_model* model, size_t grid_points, double tol, size_t max_iter,
                                       mfje_flow** out);
MFJE_API mfje_status mfje_flow_size(const mfje_flow* flow, size_t* times, size_t* states);
MFJE_API mfje_status mfje_flow_time(const mfje_flow* flow, size_t k, double* t);
MFJE_API mfje_status mfje_flow_probability(const mfje_flow* flow, size_t k, size_t state, double* p);
MFJE_API void mfje_flow_destroy(mfje_flow* flow);

/* ---- metrics ---- */

MFJE_API mfje_status mfje_w1_1d(const double* a, size_t na, const double* b, size_t nb, double* out);
/* pmfs of length m; cost is row-major m x m. */
MFJE_API mfje_status mfje_w1_discrete(const double* pmf_a, const double* pmf_b, size_t m, const double* cost,
                                      double* out);
MFJE_API mfje_status mfje_fournier_rate(double n, unsigned d, double q, double* out);

#ifdef __cplusplus
}
#endif

#endif
