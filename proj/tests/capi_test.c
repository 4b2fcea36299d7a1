/* Exercises the C API from C: handles, status codes and error messages. */
#include <math.h>
#include <stdio.h>
#include <string.h>

#include "mfje/mfje.h"

static int failures = 0;

#define EXPECT(cond)                                             \
  do {                                                           \
    if (!(cond)) {                                               \
      fprintf(stderr, "%s:%d: %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                \
    }                                                            \
  } while (0)

int main(void) {
  const double deaths[3] = {0.01, 0.1, 0.01};
  const double pmf[4] = {0.9, 0.1, 0.0, 0.0};
  const double two[2] = {1.0, 0.0};
  mfje_model* sird = NULL;
  mfje_model* decay = NULL;
  mfje_flow* flow = NULL;
  mfje_flow* picard = NULL;
  size_t states = 0, times = 0, k;
  double p = 0.0, t = 0.0, sum, out = 0.0;

  EXPECT(strlen(mfje_version()) > 0);
  EXPECT(strcmp(mfje_status_name(MFJE_ERR_MISMATCH), "") != 0);

  EXPECT(mfje_model_sird(3.0, 1.0, deaths, pmf, 0.0, 1.0, &sird) == MFJE_OK);
  EXPECT(mfje_model_states(sird, &states) == MFJE_OK && states == 4);
  EXPECT(mfje_solve_forward(sird, 1001, &flow) == MFJE_OK);
  EXPECT(mfje_flow_size(flow, &times, &states) == MFJE_OK && times == 1001 && states == 4);
  EXPECT(mfje_flow_time(flow, 1000, &t) == MFJE_OK && t == 1.0);
  sum = 0.0;
  for (k = 0; k < 4; ++k) {
    EXPECT(mfje_flow_probability(flow, 1000, k, &p) == MFJE_OK);
    sum += p;
  }
  EXPECT(fabs(sum - 1.0) < 1e-12);
  EXPECT(mfje_solve_picard(sird, 1001, 1e-6, 100, &picard) == MFJE_OK);
  EXPECT(mfje_flow_probability(picard, 500, 1, &p) == MFJE_OK);
  EXPECT(mfje_flow_probability(flow, 500, 1, &t) == MFJE_OK && fabs(p - t) < 2e-6);
  EXPECT(mfje_flow_probability(flow, 1001, 0, &p) == MFJE_ERR_INVALID_ARGUMENT);
  EXPECT(strlen(mfje_last_error()) > 0);

  EXPECT(mfje_model_two_state(0.5, 0.0, two, 0.0, 1.0, &decay) == MFJE_OK);
  mfje_flow_destroy(flow);
  flow = NULL;
  EXPECT(mfje_solve_forward(decay, 1001, &flow) == MFJE_OK);
  EXPECT(mfje_flow_probability(flow, 1000, 0, &p) == MFJE_OK && fabs(p - exp(-0.5)) < 1e-8);
  mfje_flow_destroy(flow);
  flow = NULL;
  EXPECT(mfje_solve_forward(decay, 1, &flow) != MFJE_OK && flow == NULL);
  mfje_model_destroy(decay);
  decay = NULL;
  EXPECT(mfje_model_two_state(20.0, 0.0, two, 0.0, 1.0, &decay) == MFJE_OK);
  EXPECT(mfje_solve_forward(decay, 5, &flow) == MFJE_ERR_STABILITY);

  {
    mfje_model* bad = NULL;
    EXPECT(mfje_model_sird(-1.0, 1.0, deaths, pmf, 0.0, 1.0, &bad) != MFJE_OK && bad == NULL);
  }
  EXPECT(mfje_model_states(NULL, &states) == MFJE_ERR_INVALID_ARGUMENT);

  {
    const double a[2] = {0.0, 1.0}, b[1] = {2.0};
    const double pa[2] = {1.0, 0.0}, pb[2] = {0.0, 1.0};
    const double cost[4] = {0.0, 1.0, 1.0, 0.0};
    EXPECT(mfje_w1_1d(a, 2, b, 1, &out) == MFJE_OK && fabs(out - 1.5) < 1e-15);
    EXPECT(mfje_w1_discrete(pa, pb, 2, cost, &out) == MFJE_OK && out == 1.0);
    EXPECT(mfje_fournier_rate(100.0, 1, 3.0, &out) == MFJE_OK && fabs(out - 0.14641588833612779) < 1e-15);
    EXPECT(mfje_fournier_rate(100.0, 1, 2.0, &out) == MFJE_ERR_INVALID_ARGUMENT);
  }

  {
    mfje_run_options o;
    mfje_run_options_init(&o);
    o.config_text = "[experiment]\nname = \"audit\"\npreset = \"sird\"\n[mc]\nsed = 1\n";
    o.out_dir = "capi_test_out";
    o.quiet = 1;
    EXPECT(mfje_run(&o) == MFJE_ERR_CONFIG);
    EXPECT(strstr(mfje_last_error(), "sed") != NULL);
    EXPECT(mfje_run(NULL) == MFJE_ERR_INVALID_ARGUMENT);
  }

  mfje_flow_destroy(picard);
  mfje_model_destroy(sird);
  mfje_model_destroy(decay);
  mfje_flow_destroy(NULL);
  mfje_model_destroy(NULL);
  if (failures) fprintf(stderr, "%d check(s) failed\n", failures);
  return failures ? 1 : 0;
}
