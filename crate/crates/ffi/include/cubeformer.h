/* C API for the cubeformer super-resolution library. */

#ifndef CUBEFORMER_H
#define CUBEFORMER_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every API call.
 */
typedef enum CfStatus {
  CF_OK = 0,
  CF_NULL_ARGUMENT = 1,
  CF_INVALID_UTF8 = 2,
  CF_IO_ERROR = 3,
  CF_CONFIG_ERROR = 4,
  CF_SHAPE_ERROR = 5,
  CF_RUNTIME_ERROR = 6,
} CfStatus;

/**
 * Opaque handle to a loaded model.
 */
typedef struct CfModel CfModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message for this thread. The pointer stays valid until the
 * next failing call on the same thread. Never null.
 */
const char *cf_last_error_message(void);

/**
 * Library version as a static C string.
 */
const char *cf_version(void);

/**
 * Load a model from a checkpoint file written by the trainer or CLI.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string; `out` must point to
 * writable storage for one pointer.
 */
enum CfStatus cf_model_load(const char *path, struct CfModel **out);

/**
 * Build a freshly initialized model (mainly for binding tests).
 * `variant` is 0 for full, 1 for lite.
 *
 * # Safety
 * `out` must point to writable storage for one pointer.
 */
enum CfStatus cf_model_new(uint32_t variant,
                           uint32_t scale,
                           uint32_t groups,
                           uint32_t channels,
                           uint32_t heads,
                           uint64_t seed,
                           struct CfModel **out);

/**
 * Release a model handle. Null is a no-op.
 *
 * # Safety
 * `model` must have come from `cf_model_load`/`cf_model_new` and not
 * have been freed already.
 */
void cf_model_free(struct CfModel *model);

/**
 * Upscale factor of the model.
 *
 * # Safety
 * `model` must be a live handle.
 */
uint32_t cf_model_scale(const struct CfModel *model);

/**
 * Total trainable parameter count.
 *
 * # Safety
 * `model` must be a live handle; `out` writable.
 */
enum CfStatus cf_model_param_count(struct CfModel *model, uint64_t *out);

/**
 * Analytic forward FLOPs at the given input resolution.
 *
 * # Safety
 * `model` must be a live handle; `out` writable.
 */
enum CfStatus cf_model_flops_estimate(const struct CfModel *model,
                                      uint32_t height,
                                      uint32_t width,
                                      uint64_t *out);

/**
 * Super-resolve a planar RGB f32 image in [0, 1]. `input` holds
 * `3 * height * width` values channel-major; `output` must hold
 * `3 * (scale*height) * (scale*width)` values and is written in the
 * same layout. Any input size is accepted (reflect padding is applied
 * internally).
 *
 * # Safety
 * `input` and `output` must be valid for the stated element counts.
 */
enum CfStatus cf_model_infer(const struct CfModel *model,
                             const float *input,
                             uint32_t height,
                             uint32_t width,
                             float *output);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CUBEFORMER_H */
