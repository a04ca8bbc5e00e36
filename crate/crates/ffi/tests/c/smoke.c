#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "fnlse.h"

#define CHECK(cond)                                                          \
  do {                                                                       \
    if (!(cond)) {                                                           \
      const char *e = fnlse_last_error();                                    \
      fprintf(stderr, "line %d: %s (%s)\n", __LINE__, #cond, e ? e : "-");   \
      return 1;                                                              \
    }                                                                        \
  } while (0)

int main(int argc, char **argv) {
  if (argc != 2) {
    fprintf(stderr, "usage: smoke OUT_DIR\n");
    return 2;
  }
  const char *doc =
      "[grid]\nlo = [-8.0, -8.0]\nhi = [8.0, 8.0]\npoints = [64, 64]\n"
      "[physics]\ns = 1.0\n";
  FnlseConfig *cfg = NULL;
  CHECK(fnlse_config_parse(doc, FNLSE_MODE_GROUND, &cfg) == FNLSE_STATUS_OK);

  FnlseGroundSummary g;
  CHECK(fnlse_ground_run(cfg, argv[1], &g) == FNLSE_STATUS_OK);
  fnlse_config_free(cfg);
  CHECK(g.converged);
  CHECK(fabs(g.total_energy - 1.0) < 1e-6);

  char path[4096];
  snprintf(path, sizeof path, "%s/ground_state.snap", argv[1]);
  FnlseSnapshot *snap = NULL;
  CHECK(fnlse_snapshot_read(path, &snap) == FNLSE_STATUS_OK);
  size_t n = fnlse_snapshot_len(snap);
  CHECK(n == 64 * 64);
  double *buf = malloc(2 * n * sizeof(double));
  CHECK(fnlse_snapshot_values(snap, buf, 2 * n) == FNLSE_STATUS_OK);
  double peak = 0.0;
  for (size_t i = 0; i < n; i++) {
    double a = hypot(buf[2 * i], buf[2 * i + 1]);
    if (a > peak) peak = a;
  }
  free(buf);
  fnlse_snapshot_free(snap);
  CHECK(fabs(peak - 1.0 / sqrt(M_PI)) < 1e-6);

  FnlseConfig *bad = NULL;
  CHECK(fnlse_config_parse("[physics]\nbetta = 1.0\n", FNLSE_MODE_GROUND, &bad) == FNLSE_STATUS_CONFIG);
  CHECK(bad == NULL);
  CHECK(strstr(fnlse_last_error(), "physics.betta") != NULL);

  printf("ok %s E=%.9f\n", fnlse_version(), g.total_energy);
  return 0;
}
