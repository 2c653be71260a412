#ifndef BITREE_EMBED_H
#define BITREE_EMBED_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BeConstant {
  BE_CONSTANT_BOX = 0,
  BE_CONSTANT_CARLESON = 1,
  BE_CONSTANT_HEREDITARY = 2,
  BE_CONSTANT_EMBEDDING = 3,
} BeConstant;

typedef enum BeDistribution {
  BE_DISTRIBUTION_GENERAL = 0,
  BE_DISTRIBUTION_BOUNDARY = 1,
  BE_DISTRIBUTION_PRODUCT_WEIGHT = 2,
  BE_DISTRIBUTION_PRODUCT_BOUNDARY = 3,
} BeDistribution;

typedef enum BeStatus {
  BE_STATUS_OK = 0,
  BE_STATUS_NULL_POINTER = 1,
  BE_STATUS_INVALID_UTF8 = 2,
  BE_STATUS_SIZE = 3,
  BE_STATUS_PARAMETER = 4,
  BE_STATUS_PRECONDITION = 5,
  BE_STATUS_POSTCONDITION = 6,
  BE_STATUS_TAG = 7,
  BE_STATUS_SOLVER = 8,
  BE_STATUS_PARSE = 9,
  BE_STATUS_PANIC = 10,
} BeStatus;

/**
 * A measure and weight on a dense bi-tree.
 */
typedef struct BeInstance BeInstance;

/**
 * The four constants and the chain ratios.
 */
typedef struct BeChain {
  double box_value;
  double carleson;
  double hereditary;
  double embedding;
  double c_over_box;
  double hc_over_c;
  double ce_over_hc;
  double ce_over_box;
} BeChain;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into the library on the same thread.
 */
const char *be_last_error(void);

/**
 * Library version as a static string.
 */
const char *be_version(void);

/**
 * Seeded random instance on the bi-tree of depth `(depth_x, depth_y)`.
 *
 * # Safety
 * `out` must be valid for writing one pointer.
 */
enum BeStatus be_instance_random(uint32_t depth_x,
                                 uint32_t depth_y,
                                 uint64_t seed,
                                 enum BeDistribution distribution,
                                 struct BeInstance **out);

/**
 * Instance from dense arrays of length `len` in bi-index order
 * `x · |T_y| + y`, each axis indexed `2^gen + off - 1`.
 *
 * # Safety
 * `mass` and `weight` must point to `len` readable doubles; `out` must be
 * valid for writing one pointer.
 */
enum BeStatus be_instance_new(uint32_t depth_x,
                              uint32_t depth_y,
                              const double *mass,
                              const double *weight,
                              size_t len,
                              struct BeInstance **out);

/**
 * Dense copy of a builtin counterexample family at depth `n ≤ 8`.
 *
 * # Safety
 * `name` must be a nul-terminated string; `out` must be valid for writing
 * one pointer.
 */
enum BeStatus be_instance_builtin(const char *name, uint32_t n, struct BeInstance **out);

/**
 * Instance from a JSON instance source (`{"source": ...}`).
 *
 * # Safety
 * `json` must be a nul-terminated string; `out` must be valid for writing
 * one pointer.
 */
enum BeStatus be_instance_from_json(const char *json, struct BeInstance **out);

/**
 * Releases an instance; null is ignored.
 *
 * # Safety
 * `inst` must come from this library and not be used afterwards.
 */
void be_instance_free(struct BeInstance *inst);

/**
 * Number of bi-nodes, 0 for null.
 *
 * # Safety
 * `inst` must be null or a live instance.
 */
size_t be_instance_len(const struct BeInstance *inst);

/**
 * One constant with the default exact method.
 *
 * # Safety
 * `inst` must be a live instance and `value` valid for writing.
 */
enum BeStatus be_constant(const struct BeInstance *inst, enum BeConstant kind, double *value);

/**
 * All four constants; fails with `POSTCONDITION` if the chain breaks.
 *
 * # Safety
 * `inst` must be a live instance and `out` valid for writing.
 */
enum BeStatus be_verify_chain(const struct BeInstance *inst, struct BeChain *out);

/**
 * Runs a scenario and returns the JSON report in `*out`, to be released
 * with [`be_string_free`]. Task failures are reported inside the JSON.
 *
 * # Safety
 * `scenario` must be a nul-terminated string; `out` valid for writing.
 */
enum BeStatus be_run_scenario(const char *scenario, char **out);

/**
 * Releases a string returned by the library; null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void be_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BITREE_EMBED_H */
