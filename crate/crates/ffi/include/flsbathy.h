#ifndef FLSBATHY_H
#define FLSBATHY_H

/* Generated with cbindgen:0.27.0 */

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FlsStatus {
  FLS_STATUS_OK = 0,
  FLS_STATUS_NULL_POINTER = 1,
  FLS_STATUS_INVALID_ARGUMENT = 2,
  FLS_STATUS_IO = 3,
  FLS_STATUS_FORMAT = 4,
  FLS_STATUS_CONFIG = 5,
  FLS_STATUS_EMPTY = 6,
  FLS_STATUS_DIMENSION = 7,
  FLS_STATUS_NON_FINITE = 8,
  FLS_STATUS_PANIC = 99,
} FlsStatus;

/**
 * Opaque trained model.
 */
typedef struct FlsModel FlsModel;

/**
 * Opaque height raster; invalid cells read as NaN.
 */
typedef struct FlsRaster FlsRaster;

/**
 * Height query at a world point. `normal` is the raw (-dN/dx, -dN/dy, 1).
 */
typedef struct FlsFieldQuery {
  double height;
  double delta;
  double normal[3];
} FlsFieldQuery;

/**
 * Sonar-to-world transform: row-major rotation and translation.
 */
typedef struct FlsPose {
  double rotation[9];
  double translation[3];
} FlsPose;

/**
 * Sonar geometry; angles in radians.
 */
typedef struct FlsIntrinsics {
  double r_min;
  double r_max;
  double hfov;
  double phi_min;
  double phi_max;
  size_t n_beams;
  size_t n_bins;
} FlsIntrinsics;

typedef struct FlsMetrics {
  double mae;
  double std;
  double ssim;
} FlsMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *fls_version(void);

/**
 * Copies the calling thread's last error message into `buf` (truncated,
 * always NUL-terminated when `len > 0`). Returns the full message length
 * in bytes, excluding the terminator.
 *
 * # Safety
 * `buf` must be NULL or point to `len` writable bytes.
 */
size_t fls_last_error_message(char *buf, size_t len);

/**
 * Loads a checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable. On
 * success `*out` owns a model to be released with [`fls_model_free`].
 */
enum FlsStatus fls_model_load(const char *path, struct FlsModel **out);

/**
 * # Safety
 * `model` must be NULL or a handle from [`fls_model_load`] not yet freed.
 */
void fls_model_free(struct FlsModel *model);

/**
 * Heightmap value N(x, y).
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum FlsStatus fls_model_height(const struct FlsModel *model, double x, double y, double *out);

/**
 * Unit surface normal at (x, y).
 *
 * # Safety
 * `model` must be a live handle and `out` point to 3 writable doubles.
 */
enum FlsStatus fls_model_normal(const struct FlsModel *model, double x, double y, double *out);

/**
 * Height, signed vertical distance and raw normal at a world point.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum FlsStatus fls_model_query(const struct FlsModel *model,
                               double x,
                               double y,
                               double z,
                               struct FlsFieldQuery *out);

/**
 * Current S-density sharpness s.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum FlsStatus fls_model_sharpness(const struct FlsModel *model, double *out);

/**
 * Predicted intensity of pixel (r, theta) in deterministic render mode,
 * with `n_arc_stratified` + `n_arc_importance` elevation samples and
 * `n_ray` samples per ray.
 *
 * # Safety
 * All pointers must be valid; `model` must be a live handle.
 */
enum FlsStatus fls_model_render_pixel(const struct FlsModel *model,
                                      const struct FlsPose *pose,
                                      const struct FlsIntrinsics *intrinsics,
                                      double r,
                                      double theta,
                                      size_t n_arc_stratified,
                                      size_t n_arc_importance,
                                      size_t n_ray,
                                      double *out);

/**
 * Grids the heightmap over [xmin, xmax] x [ymin, ymax] at `resolution`.
 *
 * # Safety
 * `model` must be a live handle and `out` writable; `*out` is released
 * with [`fls_raster_free`].
 */
enum FlsStatus fls_model_grid(const struct FlsModel *model,
                              double xmin,
                              double ymin,
                              double xmax,
                              double ymax,
                              double resolution,
                              struct FlsRaster **out);

/**
 * Reads a `.grid` file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum FlsStatus fls_raster_load(const char *path, struct FlsRaster **out);

/**
 * Writes a `.grid` file.
 *
 * # Safety
 * `raster` must be a live handle and `path` a NUL-terminated string.
 */
enum FlsStatus fls_raster_save(const struct FlsRaster *raster, const char *path);

/**
 * # Safety
 * `raster` must be NULL or a handle not yet freed.
 */
void fls_raster_free(struct FlsRaster *raster);

/**
 * Raster extent in cells.
 *
 * # Safety
 * `raster` must be a live handle; `nx` and `ny` writable.
 */
enum FlsStatus fls_raster_dims(const struct FlsRaster *raster, size_t *nx, size_t *ny);

/**
 * Copies the row-major cell values (NaN for invalid cells) into `buf`,
 * which must hold exactly nx * ny doubles.
 *
 * # Safety
 * `raster` must be a live handle and `buf` point to `len` writable doubles.
 */
enum FlsStatus fls_raster_values(const struct FlsRaster *raster, double *buf, size_t len);

/**
 * MAE, STD and SSIM of `est` against `truth` (aligned rasters).
 *
 * # Safety
 * Both rasters must be live handles and `out` writable.
 */
enum FlsStatus fls_metrics(const struct FlsRaster *est,
                           const struct FlsRaster *truth,
                           struct FlsMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLSBATHY_H */
