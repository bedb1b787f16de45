#ifndef FEI3D_H
#define FEI3D_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Late-fusion rule selector for the C surface; `Weighted` reads the
 * separate weight argument as the second source's share.
 */
typedef enum FeiFusionStrategy {
  FeiFusionStrategy_Max = 0,
  FeiFusionStrategy_Min = 1,
  FeiFusionStrategy_Mean = 2,
  FeiFusionStrategy_Weighted = 3,
} FeiFusionStrategy;

/**
 * Status code of every fallible call.
 */
typedef enum FeiStatus {
  FeiStatus_Ok = 0,
  /**
   * A required pointer argument was null.
   */
  FeiStatus_NullPointer = 1,
  /**
   * Argument outside its domain (bad shape, bad enum value, ...).
   */
  FeiStatus_InvalidArgument = 2,
  /**
   * Input data failed validation.
   */
  FeiStatus_DataError = 3,
  /**
   * File could not be read or written.
   */
  FeiStatus_IoError = 4,
  /**
   * File content violates its format.
   */
  FeiStatus_FormatError = 5,
  /**
   * Any other library failure.
   */
  FeiStatus_InternalError = 6,
} FeiStatus;

/**
 * Opaque classifier/regressor handle.
 */
typedef struct FeiModel FeiModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *fei3d_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fei3d_version(void);

/**
 * Loads a model from a checkpoint file into a fresh handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out_model` a valid pointer.
 */
enum FeiStatus fei3d_model_load(const char *path, struct FeiModel **out_model);

/**
 * Releases a handle created by [`fei3d_model_load`]. Null is a no-op.
 *
 * # Safety
 * `model` must be null or a pointer previously returned by this library,
 * and must not be used afterwards.
 */
void fei3d_model_free(struct FeiModel *model);

/**
 * # Safety
 * `model` and `out` must be valid pointers.
 */
enum FeiStatus fei3d_model_input_dim(const struct FeiModel *model, size_t *out);

/**
 * # Safety
 * `model` and `out` must be valid pointers.
 */
enum FeiStatus fei3d_model_output_dim(const struct FeiModel *model, size_t *out);

/**
 * Head layout: how many leading output columns are class scores and
 * whether the trailing two columns are valence/arousal.
 *
 * # Safety
 * All pointers must be valid.
 */
enum FeiStatus fei3d_model_head_info(const struct FeiModel *model,
                                     size_t *out_class_count,
                                     bool *out_has_va);

/**
 * Eval-mode forward pass. `features` is row-major `rows x cols` with
 * `cols` equal to the model input dimension; `out` receives raw head
 * scores, `rows x output_dim` (`out_len` must be at least that).
 *
 * # Safety
 * Buffers must be valid for the stated lengths.
 */
enum FeiStatus fei3d_model_predict(const struct FeiModel *model,
                                   const double *features,
                                   size_t rows,
                                   size_t cols,
                                   double *out,
                                   size_t out_len);

/**
 * In-place row softmax over a `rows x cols` buffer, for turning raw
 * class scores into probabilities.
 *
 * # Safety
 * `data` must be valid for `rows * cols` values.
 */
enum FeiStatus fei3d_softmax_rows(double *data, size_t rows, size_t cols);

/**
 * Fuses two aligned row-major `rows x classes` probability matrices into
 * `out` (same shape). Rows must sum to 1 within 1e-9.
 *
 * # Safety
 * Buffers must be valid for `rows * classes` values.
 */
enum FeiStatus fei3d_late_fuse_class(const double *a,
                                     const double *b,
                                     size_t rows,
                                     size_t classes,
                                     enum FeiFusionStrategy strategy,
                                     double weight,
                                     double *out);

/**
 * Fuses two aligned row-major `rows x 2` valence/arousal matrices into
 * `out` (same shape). Values must lie in [-1, 1].
 *
 * # Safety
 * Buffers must be valid for `rows * 2` values.
 */
enum FeiStatus fei3d_late_fuse_va(const double *a,
                                  const double *b,
                                  size_t rows,
                                  enum FeiFusionStrategy strategy,
                                  double weight,
                                  double *out);

/**
 * Full classification metric battery (accuracy, per-class and averaged
 * precision/recall/F1) as a JSON string; release with
 * [`fei3d_string_free`].
 *
 * # Safety
 * Label buffers must be valid for `len` values; `out_json` must be a
 * valid pointer.
 */
enum FeiStatus fei3d_classification_report_json(const uint32_t *true_labels,
                                                const uint32_t *pred_labels,
                                                size_t len,
                                                size_t classes,
                                                char **out_json);

/**
 * Regression metric battery (MSE/MAE/RMSE/CCC per valence-arousal
 * dimension) over row-major `rows x 2` buffers, as a JSON string;
 * release with [`fei3d_string_free`].
 *
 * # Safety
 * Buffers must be valid for `rows * 2` values; `out_json` must be a
 * valid pointer.
 */
enum FeiStatus fei3d_regression_report_json(const double *pred,
                                            const double *target,
                                            size_t rows,
                                            char **out_json);

/**
 * Releases a string returned by this library. Null is a no-op.
 *
 * # Safety
 * `s` must be null or a pointer returned by this library, and must not
 * be used afterwards.
 */
void fei3d_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEI3D_H */
