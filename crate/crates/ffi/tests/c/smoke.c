#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "wsn_forecast.h"

#define CHECK(cond)                                                   \
  do {                                                                \
    if (!(cond)) {                                                    \
      const char *m = wsn_last_error_message();                       \
      fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__, #cond,  \
              m ? m : "no error");                                    \
      return 1;                                                       \
    }                                                                 \
  } while (0)

int main(void) {
  double history[40];
  for (int i = 0; i < 40; i++) history[i] = 2.0 + 0.5 * i;

  WsnModel *model = NULL;
  CHECK(wsn_fit(history, 40, WSN_METHOD_LINEAR, &model) == WSN_STATUS_OK);
  WsnMethod kind;
  CHECK(wsn_model_method(model, &kind) == WSN_STATUS_OK);
  CHECK(kind == WSN_METHOD_LINEAR);

  double fc[3];
  CHECK(wsn_model_forecast(model, 3, fc, 3) == WSN_STATUS_OK);
  for (int h = 0; h < 3; h++) CHECK(fabs(fc[h] - (2.0 + 0.5 * (40 + h))) < 1e-9);

  size_t need = 0;
  CHECK(wsn_model_encode(model, 7, NULL, 0, &need) == WSN_STATUS_BUFFER_TOO_SMALL);
  CHECK(need > 0);
  unsigned char *buf = malloc(need);
  size_t written = 0;
  CHECK(wsn_model_encode(model, 7, buf, need, &written) == WSN_STATUS_OK);
  CHECK(written == need);

  WsnModel *copy = NULL;
  uint32_t seq = 0;
  CHECK(wsn_model_decode(buf, written, &seq, &copy) == WSN_STATUS_OK);
  CHECK(seq == 7);
  double fc2[3];
  CHECK(wsn_model_forecast(copy, 3, fc2, 3) == WSN_STATUS_OK);
  CHECK(memcmp(fc, fc2, sizeof fc) == 0);
  free(buf);
  wsn_model_free(copy);
  wsn_model_free(model);

  CHECK(wsn_fit(history, 0, WSN_METHOD_ARIMA, &model) != WSN_STATUS_OK);
  CHECK(wsn_last_error_message() != NULL);
  CHECK(wsn_fit(NULL, 5, WSN_METHOD_LINEAR, &model) == WSN_STATUS_NULL_POINTER);

  double series[300], rec[300];
  for (int i = 0; i < 300; i++) series[i] = 20.0 + sin(i * 0.05);
  WsnDpsSummary s;
  CHECK(wsn_run_dps(series, 300, WSN_METHOD_CONSTANT, 50, 20, 0.05, rec, &s) == WSN_STATUS_OK);
  CHECK(s.steps == 300);
  CHECK(s.max_abs_error < 0.05);
  CHECK(s.saved_percent > 0.0 && s.saved_percent <= 100.0);

  uint64_t tx = 0, saved = 0;
  CHECK(wsn_ring_total_transmissions(5, 3, &tx) == WSN_STATUS_OK);
  CHECK(tx == 110);
  CHECK(wsn_ring_network_savings(5, 3, 50.0, &saved) == WSN_STATUS_OK);
  CHECK(saved == 55);

  printf("ffi smoke ok (version %s)\n", wsn_version());
  return 0;
}
