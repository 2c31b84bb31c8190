#ifndef VOLMETRIC_H
#define VOLMETRIC_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

/**
 * Field kind codes.
 */
#define VM_KIND_SCALAR 0

#define VM_KIND_VELOCITY 1

#define VM_KIND_MARKER 2

/**
 * Result codes.
 */
typedef enum {
  VM_STATUS_OK = 0,
  VM_STATUS_NULL_POINTER = 1,
  VM_STATUS_INVALID_ARGUMENT = 2,
  VM_STATUS_SHAPE_MISMATCH = 3,
  VM_STATUS_IO = 4,
  /**
   * Malformed or unsupported file.
   */
  VM_STATUS_FORMAT = 5,
  VM_STATUS_ARCHITECTURE_MISMATCH = 6,
  /**
   * Constant input or an undefined value (e.g. infinite PSNR).
   */
  VM_STATUS_DEGENERATE = 7,
  /**
   * Input too small for the operation.
   */
  VM_STATUS_TOO_SMALL = 8,
  VM_STATUS_INTERNAL = 9,
  VM_STATUS_PANIC = 10,
} VmStatus;

/**
 * Opaque field handle.
 */
typedef struct VmField VmField;

/**
 * Opaque handle to a learned metric loaded from a checkpoint.
 */
typedef struct VmModel VmModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread. The pointer stays valid
 * until the next failing call on the same thread.
 */
const char *vm_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *vm_version(void);

/**
 * Copies `channels * depth * height * width` samples (channel-major, then z, y, x)
 * into a new field.
 *
 * # Safety
 * `data` must point to that many floats; `out` must be writable.
 */
VmStatus vm_field_new(uint32_t kind,
                      uintptr_t channels,
                      uintptr_t depth,
                      uintptr_t height,
                      uintptr_t width,
                      const float *data,
                      VmField **out);

/**
 * Reads a single-frame VSIM file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
VmStatus vm_field_read(const char *path, uint32_t kind, VmField **out);

/**
 * # Safety
 * `field` must come from this library; `path` must be a NUL-terminated string.
 */
VmStatus vm_field_write(const VmField *field, const char *path);

/**
 * Writes the channel count and the (depth, height, width) extents.
 *
 * # Safety
 * `field` must come from this library; `dims` must hold three values.
 */
VmStatus vm_field_dims(const VmField *field, uintptr_t *channels, uintptr_t *dims);

/**
 * Borrowed pointer to the samples and their count; valid while the field lives.
 *
 * # Safety
 * `field` must come from this library.
 */
VmStatus vm_field_data(const VmField *field, const float **data, uintptr_t *len);

/**
 * # Safety
 * `field` must come from this library and not be used afterwards. Null is ignored.
 */
void vm_field_free(VmField *field);

/**
 * Mean squared error.
 *
 * # Safety
 * Handles must come from this library; `out` must be writable.
 */
VmStatus vm_mse(const VmField *a, const VmField *b, double *out);

/**
 * Peak signal-to-noise ratio for the given peak value.
 *
 * # Safety
 * Handles must come from this library; `out` must be writable.
 */
VmStatus vm_psnr(const VmField *a, const VmField *b, double max_value, double *out);

/**
 * Windowed 3D SSIM with default parameters.
 *
 * # Safety
 * Handles must come from this library; `out` must be writable.
 */
VmStatus vm_ssim3d(const VmField *a, const VmField *b, double *out);

/**
 * Pearson correlation of two fields.
 *
 * # Safety
 * Handles must come from this library; `out` must be writable.
 */
VmStatus vm_pearson(const VmField *a, const VmField *b, double *out);

/**
 * Spearman rank correlation of two arrays of length `len`.
 *
 * # Safety
 * `x` and `y` must point to `len` doubles; `out` must be writable.
 */
VmStatus vm_srcc(const double *x, const double *y, uintptr_t len, double *out);

/**
 * Similarity model `ln(1 + c w) / ln(1 + c)`.
 */
double vm_entropy_distance(double w, double c);

/**
 * Fits the curvature exponent γ (c = 10^γ) to normalized distances
 * `q[i]` observed at `w = (i + 1) / len`.
 *
 * # Safety
 * `q` must point to `len` doubles; `out` must be writable.
 */
VmStatus vm_fit_exponent(const double *q, uintptr_t len, double *out);

/**
 * Loads a checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
VmStatus vm_model_load(const char *path, VmModel **out);

/**
 * Learned distance between two raw fields; the pair is normalized jointly first.
 *
 * # Safety
 * Handles must come from this library; `out` must be writable.
 */
VmStatus vm_model_distance(const VmModel *model, const VmField *a, const VmField *b, double *out);

/**
 * Trainable parameter count, or 0 for a null handle.
 *
 * # Safety
 * `model` must come from this library or be null.
 */
uintptr_t vm_model_param_count(const VmModel *model);

/**
 * # Safety
 * `model` must come from this library and not be used afterwards. Null is ignored.
 */
void vm_model_free(VmModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOLMETRIC_H */
