#include <math.h>
#include <stdio.h>
#include "quickpcr.h"

#define CHECK(call)                                                   \
  do {                                                                \
    QpStatus s_ = (call);                                             \
    if (s_ != QP_STATUS_OK) {                                         \
      char msg[256];                                                  \
      qp_last_error_message(msg, sizeof msg);                         \
      fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_, msg);         \
      return 1;                                                       \
    }                                                                 \
  } while (0)

int main(void) {
  QpDataset *ds = NULL;
  QpOracle *oracle = NULL;
  size_t rows = 0, cols = 0;
  double b[40], chi[20], xi[20], x[20];

  CHECK(qp_dataset_generate(40, 20, 0.1, 0.1, 0.1, 7, &ds));
  CHECK(qp_dataset_dims(ds, &rows, &cols));
  CHECK(qp_dataset_response(ds, b, rows));
  CHECK(qp_dataset_apply_t(ds, b, rows, chi, cols));
  CHECK(qp_oracle_new(ds, 0.1, QP_ORACLE_KIND_CG, 0, 1e-12, 0, &oracle));
  qp_dataset_free(ds);
  CHECK(qp_quick_pcp(oracle, 0.1, 60, chi, xi, cols));
  CHECK(qp_quick_pcr(oracle, 0.1, 60, 8, b, rows, x, cols));
  if (qp_oracle_calls(oracle) != (2 * 60 + 1) + (2 * 60 + 8 + 2)) return 2;
  qp_oracle_free(oracle);

  if (qp_dataset_generate(40, 21, 0.1, 0.1, 0.1, 7, &ds) != QP_STATUS_INVALID_ARGUMENT) return 3;
  if (qp_last_error_message(NULL, 0) == 0) return 4;

  printf("ok %s %g\n", qp_version(), xi[0]);
  return 0;
}
