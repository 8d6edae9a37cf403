#ifndef TANGLED_CURRENTS_H
#define TANGLED_CURRENTS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TcStatus {
  TC_STATUS_OK = 0,
  TC_STATUS_NULL_POINTER = 1,
  TC_STATUS_INVALID_UTF8 = 2,
  TC_STATUS_DOMAIN = 3,
  TC_STATUS_PARAMETER = 4,
  TC_STATUS_RANGE = 5,
  TC_STATUS_CONTRACT = 6,
  TC_STATUS_CAPACITY = 7,
  TC_STATUS_TRUNCATION = 8,
  TC_STATUS_ERGODICITY = 9,
  TC_STATUS_DIVERGENCE = 10,
  TC_STATUS_DEGENERATE = 11,
  TC_STATUS_DISTANCE = 12,
  TC_STATUS_CONFIG = 13,
  TC_STATUS_IO = 14,
  TC_STATUS_PANIC = 15,
} TcStatus;

typedef enum TcVerdict {
  TC_VERDICT_PASS = 0,
  TC_VERDICT_FAIL = 1,
  TC_VERDICT_INCONCLUSIVE = 2,
} TcVerdict;

typedef enum TcFamilyKind {
  TC_FAMILY_KIND_NEAREST_NEIGHBOUR = 0,
  TC_FAMILY_KIND_EXPONENTIAL = 1,
  TC_FAMILY_KIND_POWER_LAW = 2,
} TcFamilyKind;

/**
 * A validated φ⁴ model.
 */
typedef struct TcModel TcModel;

/**
 * A finished check with its JSON rendering.
 */
typedef struct TcReport TcReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failing call on this thread ("" after success).
 * Valid until the next call on the same thread.
 */
const char *tc_last_error(void);

const char *tc_version(void);

/**
 * Parse a ModelSpec JSON document into a model handle.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum TcStatus tc_model_from_json(const char *json, struct TcModel **out);

/**
 * # Safety
 * `model` must come from `tc_model_from_json` and not be used afterwards.
 */
void tc_model_free(struct TcModel *model);

/**
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum TcStatus tc_model_vertex_count(const struct TcModel *model, uintptr_t *out);

/**
 * ⟨φ^order⟩ of the single-site measure.
 *
 * # Safety
 * `out` must be writable.
 */
enum TcStatus tc_single_site_moment(double g, double a, int64_t order, double tol, double *out);

/**
 * ⟨φ_A⟩ with its certified error.
 *
 * # Safety
 * `a` must point at `len` entries; `value` and `error` must be writable.
 */
enum TcStatus tc_correlation(const struct TcModel *model,
                             const uint32_t *a,
                             uintptr_t len,
                             double *value,
                             double *error);

/**
 * Switching ratio against the exact finite-N pairing probability.
 *
 * # Safety
 * `a` and `b` must point at `len` entries each; `out` must be writable.
 */
enum TcStatus tc_verify_switching_exact(const struct TcModel *model,
                                        const uint32_t *a,
                                        const uint32_t *b,
                                        uintptr_t len,
                                        uintptr_t n,
                                        double tol,
                                        struct TcReport **out);

/**
 * ⟨φ_Aφ_B⟩ − ⟨φ_A⟩⟨φ_B⟩ ≥ 0.
 *
 * # Safety
 * `a` and `b` must point at `len` entries each; `out` must be writable.
 */
enum TcStatus tc_verify_griffiths2(const struct TcModel *model,
                                   const uint32_t *a,
                                   const uint32_t *b,
                                   uintptr_t len,
                                   struct TcReport **out);

/**
 * # Safety
 * `report` must be a live handle.
 */
enum TcVerdict tc_report_verdict(const struct TcReport *report);

/**
 * # Safety
 * `report` must be a live handle; `lhs` and `rhs` must be writable.
 */
enum TcStatus tc_report_values(const struct TcReport *report, double *lhs, double *rhs);

/**
 * JSON text owned by the report.
 *
 * # Safety
 * `report` must be a live handle.
 */
const char *tc_report_json(const struct TcReport *report);

/**
 * # Safety
 * `report` must come from a `tc_verify_*` call and not be used afterwards.
 */
void tc_report_free(struct TcReport *report);

/**
 * G(x, y) for the given interaction family; `l = 0` requests the L → ∞
 * limit. `p1`, `p2` are (μ, C) or (α, C) and ignored for nearest-neighbour.
 *
 * # Safety
 * `x` and `y` must point at `d` entries; `value` and `error` must be writable.
 */
enum TcStatus tc_green_function(enum TcFamilyKind kind,
                                double p1,
                                double p2,
                                uintptr_t d,
                                const int64_t *x,
                                const int64_t *y,
                                uintptr_t l,
                                double tol,
                                double *value,
                                double *error);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TANGLED_CURRENTS_H */
