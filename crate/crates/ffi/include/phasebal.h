#ifndef PHASEBAL_H
#define PHASEBAL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PbStatus {
  PB_STATUS_OK = 0,
  PB_STATUS_NULL_POINTER = 1,
  PB_STATUS_INVALID_ARGUMENT = 2,
  PB_STATUS_IO = 3,
  PB_STATUS_PARSE = 4,
  PB_STATUS_VALIDATION = 5,
  PB_STATUS_UNSUPPORTED = 6,
  PB_STATUS_DIVERGENCE = 7,
  PB_STATUS_CAP_EXCEEDED = 8,
  PB_STATUS_INFEASIBLE = 9,
  PB_STATUS_BUFFER_TOO_SMALL = 10,
  PB_STATUS_PANIC = 11,
} PbStatus;

typedef enum PbMetric {
  PB_METRIC_PVUR = 0,
  PB_METRIC_PVUR_STAR = 1,
  PB_METRIC_IU = 2,
  PB_METRIC_PU = 3,
  PB_METRIC_PU_STAR = 4,
} PbMetric;

typedef enum PbSpace {
  PB_SPACE_EXACT_PF = 0,
  PB_SPACE_LD3F = 1,
} PbSpace;

typedef enum PbMethod {
  PB_METHOD_GA = 0,
  PB_METHOD_MIQP = 1,
  PB_METHOD_ORACLE = 2,
} PbMethod;

/**
 * Opaque problem handle.
 */
typedef struct PbProblem PbProblem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *pb_version(void);

/**
 * Message of the last failed call on this thread, or NULL after a successful call.
 * The pointer stays valid until the next call into the library on this thread.
 */
const char *pb_last_error_message(void);

/**
 * Builds a problem from a bundled fixture (`"a"`, `"b"` or `"c"`).
 * A negative `delta_max` means every reconfigurable user may switch.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PbStatus pb_problem_from_fixture(const char *name,
                                      enum PbMetric objective,
                                      int64_t delta_max,
                                      struct PbProblem **out);

/**
 * Builds a problem from a feeder JSON file and a load profile CSV file.
 *
 * # Safety
 * Both paths must be NUL-terminated strings and `out` a valid pointer.
 */
enum PbStatus pb_problem_from_files(const char *feeder_path,
                                    const char *profiles_path,
                                    enum PbMetric objective,
                                    int64_t delta_max,
                                    struct PbProblem **out);

/**
 * Builds a problem from a TOML run configuration (the CLI's `--config` format).
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PbStatus pb_problem_from_config(const char *toml, struct PbProblem **out);

/**
 * Releases a handle. NULL is ignored.
 *
 * # Safety
 * `problem` must come from a `pb_problem_from_*` call and not be used afterwards.
 */
void pb_problem_free(struct PbProblem *problem);

/**
 * Number of reconfigurable users, i.e. the length of every phase array.
 *
 * # Safety
 * `problem` must be a live handle and `out` a valid pointer.
 */
enum PbStatus pb_problem_num_users(const struct PbProblem *problem, size_t *out);

/**
 * Writes the as-found phases into `phases_out[0..len]`.
 *
 * # Safety
 * `phases_out` must point to `len` writable bytes.
 */
enum PbStatus pb_problem_original(const struct PbProblem *problem, uint8_t *phases_out, size_t len);

/**
 * Scores an assignment. `objective_out` receives NaN when the metric is undefined
 * or the power flow diverged; `feasible_out` is false on any operational violation.
 * Either output pointer may be NULL.
 *
 * # Safety
 * `phases` must point to `len` readable bytes.
 */
enum PbStatus pb_evaluate(const struct PbProblem *problem,
                          const uint8_t *phases,
                          size_t len,
                          enum PbSpace space,
                          double *objective_out,
                          bool *feasible_out);

/**
 * Runs an optimizer and writes the best phases found. `objective_out` (nullable)
 * receives the objective in the space the method searched.
 *
 * # Safety
 * `phases_out` must point to `len` writable bytes.
 */
enum PbStatus pb_optimize(const struct PbProblem *problem,
                          enum PbMethod method,
                          uint64_t seed,
                          uint8_t *phases_out,
                          size_t len,
                          double *objective_out);

/**
 * Runs an optimizer and returns the full run report as JSON in `*json_out`.
 * Release the string with `pb_string_free`.
 *
 * # Safety
 * `json_out` must be a valid pointer.
 */
enum PbStatus pb_optimize_json(const struct PbProblem *problem,
                               enum PbMethod method,
                               uint64_t seed,
                               char **json_out);

/**
 * Releases a string returned by the library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void pb_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PHASEBAL_H */
