#ifndef RINGCONV_H
#define RINGCONV_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RcStatus {
  RC_STATUS_OK = 0,
  RC_STATUS_NULL_POINTER = 1,
  RC_STATUS_INVALID_ARGUMENT = 2,
  RC_STATUS_SHAPE = 3,
  RC_STATUS_CONFIG = 4,
  RC_STATUS_IO = 5,
  RC_STATUS_CHECKPOINT = 6,
  RC_STATUS_PANIC = 7,
} RcStatus;

typedef enum RcLayerKind {
  RC_LAYER_KIND_CONV = 0,
  RC_LAYER_KIND_RAD = 1,
  RC_LAYER_KIND_RSDW = 2,
  RC_LAYER_KIND_RING = 3,
  RC_LAYER_KIND_RELU = 4,
  RC_LAYER_KIND_BATCHNORM = 5,
  RC_LAYER_KIND_MAXPOOL = 6,
  RC_LAYER_KIND_GLOBAL_AVG_POOL = 7,
  RC_LAYER_KIND_FULLY_CONNECTED = 8,
} RcLayerKind;

/**
 * Opaque model handle.
 */
typedef struct RcModel RcModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or an empty string.
 * Valid until the next call into this library on the same thread.
 */
const char *rc_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rc_version(void);

/**
 * Builds a model from config text and initializes it from the config seed.
 * On success `*out` owns a handle for `rc_model_free`.
 *
 * # Safety
 * `config_text` must be NUL-terminated; `out` must be writable.
 */
enum RcStatus rc_model_from_config(const char *config_text, struct RcModel **out);

/**
 * # Safety
 * `model` must come from `rc_model_from_config` and not be used again.
 */
void rc_model_free(struct RcModel *model);

/**
 * # Safety
 * `model` must be a live handle; `path` NUL-terminated.
 */
enum RcStatus rc_model_load_checkpoint(struct RcModel *model, const char *path);

/**
 * # Safety
 * `model` must be a live handle; `path` NUL-terminated.
 */
enum RcStatus rc_model_save_checkpoint(const struct RcModel *model, const char *path);

/**
 * Writes the `(channels, height, width)` the model expects to `shape[0..3]`.
 *
 * # Safety
 * `model` must be a live handle; `shape` must hold 3 values.
 */
enum RcStatus rc_model_input_shape(const struct RcModel *model, size_t *shape);

/**
 * Values produced per input item.
 *
 * # Safety
 * `model` must be a live handle; `out` writable.
 */
enum RcStatus rc_model_output_len(const struct RcModel *model, size_t *out);

/**
 * Sum of the per-layer weight counts, biases excluded.
 *
 * # Safety
 * `model` must be a live handle; `out` writable.
 */
enum RcStatus rc_model_param_count(const struct RcModel *model, size_t *out);

/**
 * Inference on `batch` NCHW items of the input shape. `output` receives
 * `batch * rc_model_output_len` values; `output_len` is its capacity.
 *
 * # Safety
 * `input` must hold `batch * c * h * w` floats and `output` `output_len`.
 */
enum RcStatus rc_model_forward(const struct RcModel *model,
                               const float *input,
                               size_t batch,
                               float *output,
                               size_t output_len);

/**
 * Weight count of one layer, bias excluded. `out1` is only read for RSDW.
 *
 * # Safety
 * `out` must be writable.
 */
enum RcStatus rc_layer_param_count(enum RcLayerKind kind,
                                   size_t k,
                                   size_t in_channels,
                                   size_t out_channels,
                                   size_t out1,
                                   size_t *out);

/**
 * Multiply-accumulates of one layer for an `h × w` output surface.
 *
 * # Safety
 * `out` must be writable.
 */
enum RcStatus rc_layer_mac_count(enum RcLayerKind kind,
                                 size_t k,
                                 size_t in_channels,
                                 size_t out_channels,
                                 size_t out1,
                                 size_t h,
                                 size_t w,
                                 uint64_t *out);

/**
 * Rotates every `h × w` plane of an NCHW tensor by `quarter_turns`
 * counter-clockwise quarter turns. `dst` receives `n * c * h * w` values
 * in a `w × h` layout for odd turns.
 *
 * # Safety
 * `src` and `dst` must each hold `n * c * h * w` floats and not overlap.
 */
enum RcStatus rc_rot90(const float *src,
                       size_t n,
                       size_t c,
                       size_t h,
                       size_t w,
                       int32_t quarter_turns,
                       float *dst);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RINGCONV_H */
