#ifndef MPGLAB_H
#define MPGLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum MpgStatus {
  MPG_STATUS_OK = 0,
  MPG_STATUS_NULL_ARGUMENT = 1,
  MPG_STATUS_INVALID_UTF8 = 2,
  MPG_STATUS_PARSE = 3,
  MPG_STATUS_VALIDATION = 4,
  MPG_STATUS_EVALUATION = 5,
  MPG_STATUS_NOT_FOUND = 6,
  MPG_STATUS_IO = 7,
  MPG_STATUS_BUFFER_TOO_SMALL = 8,
  MPG_STATUS_PANIC = 99,
} MpgStatus;

typedef enum MpgRangeVerdict {
  MPG_RANGE_VERDICT_IN_RANGE = 0,
  MPG_RANGE_VERDICT_SOFT_WARNING = 1,
  MPG_RANGE_VERDICT_HARD_VIOLATION = 2,
} MpgRangeVerdict;

typedef enum MpgStability {
  MPG_STABILITY_STABLE = 0,
  MPG_STABILITY_MARGINAL = 1,
  MPG_STABILITY_DIVERGENT = 2,
} MpgStability;

/**
 * Opaque metric catalog.
 */
typedef struct MpgCatalog MpgCatalog;

/**
 * Opaque validated propagation graph.
 */
typedef struct MpgGraph MpgGraph;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a
 * success. Valid until the next call on the same thread.
 */
const char *mpg_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mpg_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void mpg_string_free(char *s);

/**
 * The built-in catalog.
 *
 * # Safety
 * `out_catalog` must be a valid pointer.
 */
enum MpgStatus mpg_catalog_builtin(struct MpgCatalog **out_catalog);

/**
 * Loads a `catalog-v1` document.
 *
 * # Safety
 * `json` must be NUL-terminated; `out_catalog` must be valid.
 */
enum MpgStatus mpg_catalog_from_json(const char *json, struct MpgCatalog **out_catalog);

/**
 * Number of metrics; 0 for null.
 *
 * # Safety
 * `catalog` must be null or a live handle.
 */
size_t mpg_catalog_len(const struct MpgCatalog *catalog);

/**
 * Evaluates metric `id` with `bindings` given as `name=value;name=value`
 * (e.g. `E_total=1.56MWh;E_IT=1MWh`). Writes the value in the metric's
 * unit. `out_unit` and `out_verdict` may be null; a unit string must be
 * released with `mpg_string_free`.
 *
 * # Safety
 * Strings must be NUL-terminated; pointers must be valid or null where allowed.
 */
enum MpgStatus mpg_catalog_evaluate(const struct MpgCatalog *catalog,
                                    const char *id,
                                    const char *bindings,
                                    double *out_value,
                                    char **out_unit,
                                    enum MpgRangeVerdict *out_verdict);

/**
 * # Safety
 * `catalog` must be null or a handle not yet freed.
 */
void mpg_catalog_free(struct MpgCatalog *catalog);

/**
 * Parses and validates an `mpg-v1` document.
 *
 * # Safety
 * `json` must be NUL-terminated; `out_graph` must be valid.
 */
enum MpgStatus mpg_graph_from_json(const char *json, struct MpgGraph **out_graph);

/**
 * The built-in five-node case-study graph.
 *
 * # Safety
 * `out_graph` must be valid.
 */
enum MpgStatus mpg_graph_case_study(struct MpgGraph **out_graph);

/**
 * # Safety
 * `graph` must be null or a handle not yet freed.
 */
void mpg_graph_free(struct MpgGraph *graph);

/**
 * Node count; 0 for null.
 *
 * # Safety
 * `graph` must be null or a live handle.
 */
size_t mpg_graph_node_count(const struct MpgGraph *graph);

/**
 * Writes the propagation matrix at the initial state, row-major, into
 * `buf` of `capacity` doubles. `out_dim` always receives the dimension;
 * if `capacity < dim * dim` nothing is copied and BufferTooSmall is
 * returned, so a first call with a null buffer sizes it.
 *
 * # Safety
 * `buf` must hold `capacity` doubles or be null with capacity 0.
 */
enum MpgStatus mpg_graph_linearize(const struct MpgGraph *graph,
                                   double *buf,
                                   size_t capacity,
                                   size_t *out_dim);

/**
 * Spectral radius of the propagation matrix at the initial state.
 *
 * # Safety
 * `graph` must be live; `out_rho` valid.
 */
enum MpgStatus mpg_graph_spectral_radius(const struct MpgGraph *graph, double *out_rho);

/**
 * Stability class from the spectral radius.
 *
 * # Safety
 * `graph` must be live; `out_stability` valid.
 */
enum MpgStatus mpg_graph_stability(const struct MpgGraph *graph, enum MpgStability *out_stability);

/**
 * Summed path gain from `src` to `dst`; `out_paths` may be null.
 *
 * # Safety
 * Strings NUL-terminated; `graph` live; outputs valid or null where allowed.
 */
enum MpgStatus mpg_graph_composite(const struct MpgGraph *graph,
                                   const char *src,
                                   const char *dst,
                                   double *out_coefficient,
                                   size_t *out_paths);

/**
 * Γ along a comma-separated node path such as `ci,pue,flops_per_watt`.
 *
 * # Safety
 * `path` NUL-terminated; `graph` live; outputs valid or null where allowed.
 */
enum MpgStatus mpg_graph_amplification(const struct MpgGraph *graph,
                                       const char *path,
                                       double *out_gamma,
                                       bool *out_amplifying);

/**
 * Runs an `scn-v1` document and returns its trajectory CSV. Relative
 * graph paths resolve against `base_dir` (null: the working directory).
 * With `override_seed` set, `seed` replaces the document seed.
 *
 * # Safety
 * Strings NUL-terminated or null where allowed; `out_csv` valid. The CSV
 * must be released with `mpg_string_free`.
 */
enum MpgStatus mpg_scenario_run_csv(const char *scenario_json,
                                    const char *base_dir,
                                    bool override_seed,
                                    uint64_t seed,
                                    char **out_csv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MPGLAB_H */
