#ifndef WSN_FORECAST_H
#define WSN_FORECAST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum WsnMethod {
  WSN_METHOD_CONSTANT = 0,
  WSN_METHOD_LINEAR = 1,
  WSN_METHOD_SIMPLE_MEAN = 2,
  WSN_METHOD_EXPONENTIAL_SMOOTHING = 3,
  WSN_METHOD_ARIMA = 4,
} WsnMethod;

typedef enum WsnStatus {
  WSN_STATUS_OK = 0,
  WSN_STATUS_NULL_POINTER = 1,
  WSN_STATUS_INVALID_ARGUMENT = 2,
  WSN_STATUS_TOO_SHORT = 3,
  WSN_STATUS_FIT_FAILED = 4,
  WSN_STATUS_PROTOCOL = 5,
  WSN_STATUS_DATA = 6,
  WSN_STATUS_IO = 7,
  WSN_STATUS_BUFFER_TOO_SMALL = 8,
  WSN_STATUS_PANIC = 9,
} WsnStatus;

/**
 * Opaque fitted model.
 */
typedef struct WsnModel WsnModel;

/**
 * Counters from one dual-prediction run.
 */
typedef struct WsnDpsSummary {
  size_t steps;
  /**
   * Measurements sent after the bootstrap phase.
   */
  size_t measurements;
  size_t model_updates;
  /**
   * Model updates beyond the first one.
   */
  size_t extra_updates;
  size_t fallbacks;
  size_t wire_bytes;
  /**
   * Percentage of post-bootstrap steps without a transmission.
   */
  double saved_percent;
  double max_abs_error;
} WsnDpsSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message from the last failed call on this thread, or NULL.
 *
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *wsn_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *wsn_version(void);

/**
 * Fits `method` with its default configuration to `history[0..len]`.
 *
 * # Safety
 * `history` must point to `len` doubles and `out_model` must be writable.
 */
enum WsnStatus wsn_fit(const double *history,
                       size_t len,
                       enum WsnMethod method,
                       struct WsnModel **out_model);

/**
 * Fits with a JSON-encoded fit configuration, e.g.
 * `{"method":"arima","budget":3}`.
 *
 * # Safety
 * `history` must point to `len` doubles, `config_json` must be a
 * NUL-terminated string and `out_model` must be writable.
 */
enum WsnStatus wsn_fit_json(const double *history,
                            size_t len,
                            const char *config_json,
                            struct WsnModel **out_model);

/**
 * Releases a model. NULL is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void wsn_model_free(struct WsnModel *model);

/**
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum WsnStatus wsn_model_method(const struct WsnModel *model, enum WsnMethod *out);

/**
 * In-sample AICc. Fails with `WSN_STATUS_INVALID_ARGUMENT` when the
 * model has none (too few points, or decoded from the wire).
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum WsnStatus wsn_model_aicc(const struct WsnModel *model, double *out);

/**
 * Writes `window` forecasts into `out[0..window]`.
 *
 * # Safety
 * `model` must be a live handle and `out` must hold `out_len` doubles.
 */
enum WsnStatus wsn_model_forecast(const struct WsnModel *model,
                                  size_t window,
                                  double *out,
                                  size_t out_len);

/**
 * Encodes the model as a wire ModelUpdate with sequence number `seq`.
 *
 * `*written` receives the encoded length. When `buf_len` is too small
 * nothing is copied, `*written` holds the required size and
 * `WSN_STATUS_BUFFER_TOO_SMALL` is returned; passing `buf = NULL` with
 * `buf_len = 0` is the way to query the size.
 *
 * # Safety
 * `buf` must hold `buf_len` bytes and `written` must be writable.
 */
enum WsnStatus wsn_model_encode(const struct WsnModel *model,
                                uint32_t seq,
                                uint8_t *buf,
                                size_t buf_len,
                                size_t *written);

/**
 * Decodes a wire ModelUpdate into a new model handle.
 *
 * # Safety
 * `bytes` must hold `len` bytes; `out_seq` may be NULL; `out_model` must
 * be writable.
 */
enum WsnStatus wsn_model_decode(const uint8_t *bytes,
                                size_t len,
                                uint32_t *out_seq,
                                struct WsnModel **out_model);

/**
 * Runs the dual-prediction simulation over `values[0..len]`.
 *
 * When `reconstructed` is not NULL it must hold `len` doubles and receives
 * the gateway-side series.
 *
 * # Safety
 * Pointers must be valid for the stated lengths; `summary` must be writable.
 */
enum WsnStatus wsn_run_dps(const double *values,
                           size_t len,
                           enum WsnMethod method,
                           size_t history,
                           size_t window,
                           double delta,
                           double *reconstructed,
                           struct WsnDpsSummary *summary);

/**
 * Rounds every value in place to the nearest multiple of `resolution`.
 *
 * # Safety
 * `values` must hold `len` doubles.
 */
enum WsnStatus wsn_quantize(double *values, size_t len, double resolution);

/**
 * Mean absolute percentage error; terms with a zero actual are skipped and
 * counted in `*out_skipped` (may be NULL).
 *
 * # Safety
 * `actual` and `predicted` must hold `len` doubles; `out` must be writable.
 */
enum WsnStatus wsn_mape(const double *actual,
                        const double *predicted,
                        size_t len,
                        double *out,
                        size_t *out_skipped);

/**
 * # Safety
 * `out` must be writable.
 */
enum WsnStatus wsn_aicc(double neg2_loglik, size_t k, size_t n, double *out);

/**
 * Node count of a ring network with `c` neighbours per node and `d` rings.
 *
 * # Safety
 * `out` must be writable.
 */
enum WsnStatus wsn_ring_total_nodes(uint64_t c, uint64_t d, uint64_t *out);

/**
 * Hop-by-hop transmissions for one round of readings to reach the sink.
 *
 * # Safety
 * `out` must be writable.
 */
enum WsnStatus wsn_ring_total_transmissions(uint64_t c, uint64_t d, uint64_t *out);

/**
 * Transmissions avoided per round when every node saves `percent`.
 *
 * # Safety
 * `out` must be writable.
 */
enum WsnStatus wsn_ring_network_savings(uint64_t c, uint64_t d, double percent, uint64_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WSN_FORECAST_H */
