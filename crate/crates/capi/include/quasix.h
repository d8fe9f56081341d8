#ifndef QUASIX_H
#define QUASIX_H

/* Generated by cbindgen from quasix-capi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes; non-zero means failure.
 */
typedef enum QxStatus {
  QX_STATUS_OK = 0,
  QX_STATUS_NULL_ARGUMENT = 1,
  QX_STATUS_PARSE = 2,
  QX_STATUS_CONSTRAINT = 3,
  QX_STATUS_EMPTY_SET = 4,
  QX_STATUS_RESOLUTION = 5,
  QX_STATUS_INTERNAL = 6,
} QxStatus;

/**
 * Opaque ball parameter handle.
 */
typedef struct QxBall QxBall;

/**
 * Opaque voxel set handle.
 */
typedef struct QxGrid QxGrid;

/**
 * Incidence score of an ordered pair of sets.
 */
typedef struct QxScore {
  double incidence;
  double alpha;
  double alpha_star;
  double epsilon;
} QxScore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. Valid until the
 * next failing call; do not free.
 */
const char *qx_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *qx_version(void);

/**
 * Parse a voxel set from its JSON encoding (dim/origin/spacing/shape plus
 * run-length encoded occupancy).
 *
 * # Safety
 * `json` must be a valid NUL-terminated UTF-8 string and `out` a valid
 * pointer; the returned handle must be released with `qx_grid_free`.
 */
enum QxStatus qx_grid_from_json(const char *json, struct QxGrid **out);

/**
 * # Safety
 * `grid` must come from `qx_grid_from_json` and not be freed twice.
 */
void qx_grid_free(struct QxGrid *grid);

/**
 * Lebesgue measure of the set; 0 for a null handle.
 *
 * # Safety
 * `grid` must be a live handle or null.
 */
double qx_grid_measure(const struct QxGrid *grid);

/**
 * Ambient dimension; 0 for a null handle.
 *
 * # Safety
 * `grid` must be a live handle or null.
 */
uintptr_t qx_grid_dim(const struct QxGrid *grid);

/**
 * Point membership under the half-open voxel convention.
 *
 * # Safety
 * `coords` must point to `len` doubles; `grid` must be live or null.
 */
bool qx_grid_contains(const struct QxGrid *grid, const double *coords, uintptr_t len);

/**
 * Incidence score of a pair at the given t-lattice step.
 *
 * # Safety
 * Both handles must be live; `out` must be a valid pointer.
 */
enum QxStatus qx_score_pair(const struct QxGrid *e,
                            const struct QxGrid *estar,
                            double t_resolution,
                            struct QxScore *out);

/**
 * Monte Carlo estimate of the incidence functional with standard error.
 *
 * # Safety
 * Both handles must be live; `estimate` and `stderr_out` must be valid.
 */
enum QxStatus qx_bilinear_mc(const struct QxGrid *e,
                             const struct QxGrid *estar,
                             uint64_t seed,
                             uintptr_t samples,
                             double *estimate,
                             double *stderr_out);

/**
 * Parse and validate ball parameters from JSON (center_x, center_xstar,
 * basis, r, r_star, rho). Validation failures carry the constraint name.
 *
 * # Safety
 * `json` must be a valid NUL-terminated UTF-8 string and `out` valid; the
 * returned handle must be released with `qx_ball_free`.
 */
enum QxStatus qx_ball_from_json(const char *json, struct QxBall **out);

/**
 * # Safety
 * `ball` must come from `qx_ball_from_json` and not be freed twice.
 */
void qx_ball_free(struct QxBall *ball);

/**
 * Slab thickness parameter rho; NaN for a null handle.
 *
 * # Safety
 * `ball` must be live or null.
 */
double qx_ball_rho(const struct QxBall *ball);

/**
 * Exact envelope measures 2^d rho prod r_j and 2^d rho prod r*_j.
 *
 * # Safety
 * `ball` must be live; both output pointers must be valid.
 */
enum QxStatus qx_ball_envelope_measures(const struct QxBall *ball,
                                        double *e_measure,
                                        double *estar_measure);

/**
 * Score the rasterized envelope pair of a ball; epsilon is its empirical
 * quasiextremality constant.
 *
 * # Safety
 * `ball` must be live; `out` must be valid.
 */
enum QxStatus qx_ball_score(const struct QxBall *ball, struct QxScore *out);

/**
 * Number of sub-balls in the covering of envelope fraction `delta`.
 *
 * # Safety
 * `ball` must be live; `count` must be valid.
 */
enum QxStatus qx_ball_cover_count(const struct QxBall *ball, double delta, uintptr_t *count);

/**
 * Serialize a grid back to its JSON encoding; free with `qx_string_free`.
 *
 * # Safety
 * `grid` must be live; `out` must be valid.
 */
enum QxStatus qx_grid_to_json(const struct QxGrid *grid, char **out);

/**
 * # Safety
 * `s` must have been returned by this library and not freed before.
 */
void qx_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QUASIX_H */
