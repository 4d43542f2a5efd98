#ifndef GHOSTLAB_H
#define GHOSTLAB_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum GlNormalizer {
  GL_NORMALIZER_NONE = 0,
  GL_NORMALIZER_SQRT = 1,
  GL_NORMALIZER_LOG1P = 2,
  GL_NORMALIZER_MINMAX = 3,
  GL_NORMALIZER_ZSCORE = 4,
  GL_NORMALIZER_ANSCOMBE = 5,
  GL_NORMALIZER_FREEMAN_TUKEY = 6,
} GlNormalizer;

typedef enum GlStatus {
  GL_STATUS_OK = 0,
  GL_STATUS_NULL_POINTER = 1,
  GL_STATUS_INVALID_ARGUMENT = 2,
  GL_STATUS_DIMENSION = 3,
  GL_STATUS_IO = 4,
  GL_STATUS_FORMAT = 5,
  GL_STATUS_NOT_FOUND = 6,
  GL_STATUS_NON_FINITE = 7,
  GL_STATUS_CONFIG = 8,
  GL_STATUS_DEGENERATE_FIT = 9,
  GL_STATUS_GATE_FAILED = 10,
  GL_STATUS_BUFFER_TOO_SMALL = 11,
  GL_STATUS_PANIC = 12,
} GlStatus;

/*
 Illumination pattern set.
 */
typedef struct GlPatterns GlPatterns;

/*
 Pseudo-inverse of a pattern set, factorized once.
 */
typedef struct GlPseudoInverse GlPseudoInverse;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *gl_version(void);

/*
 Message of the last failed call on this thread, or NULL. The pointer
 stays valid until the next ghostlab call on the same thread.
 */
const char *gl_last_error_message(void);

/*
 `count` speckle patterns of `height x width` with grain `grain_px`.

 # Safety
 `out` must be a valid pointer to writable storage for one handle.
 */
enum GlStatus gl_patterns_speckle(size_t count,
                                  size_t height,
                                  size_t width,
                                  double grain_px,
                                  uint64_t seed,
                                  struct GlPatterns **out);

/*
 `count` Bernoulli(`fill`) patterns.

 # Safety
 `out` must be a valid pointer to writable storage for one handle.
 */
enum GlStatus gl_patterns_bernoulli(size_t count,
                                    size_t height,
                                    size_t width,
                                    double fill,
                                    uint64_t seed,
                                    struct GlPatterns **out);

/*
 Patterns from row-major `[count, height, width]` values.

 # Safety
 `values` must point to `count * height * width` doubles; `out` as above.
 */
enum GlStatus gl_patterns_from_values(size_t count,
                                      size_t height,
                                      size_t width,
                                      const double *values,
                                      struct GlPatterns **out);

/*
 # Safety
 `patterns` must be a live handle; output pointers may be NULL.
 */
enum GlStatus gl_patterns_shape(const struct GlPatterns *patterns,
                                size_t *count,
                                size_t *height,
                                size_t *width);

/*
 # Safety
 `patterns` must come from a `gl_patterns_*` constructor or be NULL.
 */
void gl_patterns_free(struct GlPatterns *patterns);

/*
 Normalized intensities `mu_i = <H_i, x> / R_i` of one `height x width`
 frame.

 # Safety
 `frame` must hold `frame_len` doubles and `mu_out` `mu_len` doubles.
 */
enum GlStatus gl_intensity(const struct GlPatterns *patterns,
                           const double *frame,
                           size_t frame_len,
                           double *mu_out,
                           size_t mu_len);

/*
 Differential ghost imaging from intensities `mu` (one per pattern); the
 image is rescaled to [0, 1].

 # Safety
 `mu` must hold `mu_len` doubles and `image_out` `image_len` doubles.
 */
enum GlStatus gl_reconstruct_dgi(const struct GlPatterns *patterns,
                                 const double *mu,
                                 size_t mu_len,
                                 double *image_out,
                                 size_t image_len);

/*
 Sparse recovery in the DCT basis; `lambda_relative` scales the data
 term's largest correlation, `iterations` defaults to 200 when 0.

 # Safety
 As for [`gl_reconstruct_dgi`].
 */
enum GlStatus gl_reconstruct_fista(const struct GlPatterns *patterns,
                                   const double *mu,
                                   size_t mu_len,
                                   size_t iterations,
                                   double lambda_relative,
                                   double *image_out,
                                   size_t image_len);

/*
 Factorize the pseudo-inverse of `patterns` (which is copied).

 # Safety
 `patterns` must be live; `out` writable.
 */
enum GlStatus gl_pinv_new(const struct GlPatterns *patterns, struct GlPseudoInverse **out);

/*
 Minimum-norm least-squares image, clamped to [0, 1].

 # Safety
 As for [`gl_reconstruct_dgi`].
 */
enum GlStatus gl_pinv_solve(const struct GlPseudoInverse *pinv,
                            const double *mu,
                            size_t mu_len,
                            double *image_out,
                            size_t image_len);

/*
 # Safety
 `pinv` must come from [`gl_pinv_new`] or be NULL.
 */
void gl_pinv_free(struct GlPseudoInverse *pinv);

/*
 # Safety
 `a` and `b` must hold `height * width` doubles; `out` writable.
 */
enum GlStatus gl_mse(const double *a, const double *b, size_t height, size_t width, double *out);

/*
 Mean SSIM over valid 11x11 Gaussian windows.

 # Safety
 As for [`gl_mse`].
 */
enum GlStatus gl_ssim(const double *a, const double *b, size_t height, size_t width, double *out);

/*
 Transform `len` counts in place of `out`; min-max and z-score are fitted
 on the same input.

 # Safety
 `counts` and `out` must each hold `len` doubles.
 */
enum GlStatus gl_normalize(enum GlNormalizer kind, const double *counts, size_t len, double *out);

/*
 Photon counts for intensities `mu` on detector preset `detector`
 ("snspd", "spad" or "sipm") at 1 ms integration.

 # Safety
 `mu` and `counts_out` must each hold `len` doubles; `detector` must be a
 NUL-terminated string.
 */
enum GlStatus gl_detect_counts(const double *mu,
                               size_t len,
                               double n_bar,
                               const char *detector,
                               uint64_t seed,
                               double *counts_out);

/*
 Run one experiment command (`simulate`, `reconstruct`, ...) with a JSON
 config. `output_dir` overrides the config's when non-NULL. A failed gate
 returns `GL_STATUS_GATE_FAILED`.

 # Safety
 String arguments must be NUL-terminated or (for `output_dir`) NULL.
 */
enum GlStatus gl_run_command(const char *config_json, const char *command, const char *output_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GHOSTLAB_H */
