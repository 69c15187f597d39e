#include <math.h>
#include <stdio.h>
#include <string.h>

#include "eegcog.h"

#define CHECK(cond)                                              \
  do {                                                           \
    if (!(cond)) {                                               \
      fprintf(stderr, "check failed line %d: %s\n", __LINE__, #cond); \
      return 1;                                                  \
    }                                                            \
  } while (0)

int main(void) {
  double x[] = {1, 2, 3};
  double y[] = {10, 11, 12};
  EegcogTestResult r;
  CHECK(eegcog_rank_sum(x, 3, y, 3, &r) == EEGCOG_STATUS_OK);
  CHECK(r.method == EEGCOG_TEST_METHOD_RANK_SUM_EXACT);
  CHECK(fabs(r.p_value - 0.1) < 1e-12);

  CHECK(eegcog_rank_sum(x, 1, y, 3, &r) == EEGCOG_STATUS_COMPUTATION);
  CHECK(eegcog_last_error() != NULL);

  double train[] = {0, 0, 0.2, 0.1, 2, 2, 2.1, 1.9};
  double labels[] = {-1, -1, 1, 1};
  EegcogSvm *model = NULL;
  CHECK(eegcog_svm_train(train, 4, 2, labels, EEGCOG_KERNEL_KIND_RBF, 0.5, 0, 10, &model) == EEGCOG_STATUS_OK);
  double d[4];
  CHECK(eegcog_svm_decision(model, train, 4, 2, d) == EEGCOG_STATUS_OK);
  for (int i = 0; i < 4; i++) CHECK(d[i] * labels[i] > 0);
  eegcog_svm_free(model);

  char *cfg = eegcog_default_config();
  CHECK(cfg != NULL && strstr(cfg, "seed = 42") != NULL);
  eegcog_string_free(cfg);

  printf("ok %s\n", eegcog_version());
  return 0;
}
