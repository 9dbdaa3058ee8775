#ifndef MASKBENCH_H
#define MASKBENCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MbStatus {
  MB_STATUS_OK = 0,
  MB_STATUS_NULL_POINTER = 1,
  MB_STATUS_INVALID_ARGUMENT = 2,
  MB_STATUS_PARSE = 3,
  MB_STATUS_DIMENSION_MISMATCH = 4,
  MB_STATUS_TRAINING_FAILED = 5,
  MB_STATUS_BUFFER_TOO_SMALL = 6,
  MB_STATUS_PANIC = 7,
} MbStatus;

// Values accepted wherever a model type is passed as `uint32_t`.
typedef enum MbModelType {
  MB_MODEL_TYPE_SVC = 0,
  MB_MODEL_TYPE_LDA = 1,
  MB_MODEL_TYPE_KNN = 2,
  MB_MODEL_TYPE_DT = 3,
  MB_MODEL_TYPE_LR = 4,
  MB_MODEL_TYPE_NB = 5,
} MbModelType;

// Values accepted for `MbHyperparameters::knn_distance`.
typedef enum MbDistance {
  MB_DISTANCE_EUCLIDEAN = 0,
  MB_DISTANCE_CHI_SQUARE = 1,
} MbDistance;

typedef struct MbDataset MbDataset;

typedef struct MbImage MbImage;

typedef struct MbModel MbModel;

typedef struct MbLbpConfig {
  uint32_t radius;
  uint32_t neighbors;
  uint32_t grid_x;
  uint32_t grid_y;
  bool uniform;
  bool l1_normalize;
} MbLbpConfig;

typedef struct MbHyperparameters {
  double svc_c;
  uint64_t svc_iters;
  double lda_shrinkage;
  uint64_t knn_k;
  uint32_t knn_distance;
  uint64_t dt_min_leaf;
  double lr_l2;
  double lr_tol;
  uint64_t lr_max_iters;
  double nb_var_smoothing;
} MbHyperparameters;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *mb_version(void);

// Message for the last failing call on this thread, or null if none. The pointer stays
// valid until the next failing call on the same thread.
const char *mb_last_error(void);

void mb_clear_error(void);

struct MbLbpConfig mb_lbp_config_default(void);

struct MbHyperparameters mb_hyperparameters_default(void);

// Decodes a binary (P5) PGM.
//
// # Safety
// `bytes` must point to `len` readable bytes; `out` must be writable.
enum MbStatus mb_image_from_pgm(const uint8_t *bytes, size_t len, struct MbImage **out);

// Builds an image from `width * height` row-major 8-bit pixels.
//
// # Safety
// `pixels` must point to `width * height` readable bytes; `out` must be writable.
enum MbStatus mb_image_from_pixels(size_t width,
                                   size_t height,
                                   const uint8_t *pixels,
                                   struct MbImage **out);

// Width in pixels; 0 for a null handle.
//
// # Safety
// `img` must be null or a live image handle.
size_t mb_image_width(const struct MbImage *img);

// Height in pixels; 0 for a null handle.
//
// # Safety
// `img` must be null or a live image handle.
size_t mb_image_height(const struct MbImage *img);

// Copies the row-major pixels into `buf`.
//
// # Safety
// `img` must be a live image handle, `buf` null or writable for `cap` bytes, `written` writable.
enum MbStatus mb_image_copy_pixels(const struct MbImage *img,
                                   uint8_t *buf,
                                   size_t cap,
                                   size_t *written);

// Encodes the image as a binary PGM.
//
// # Safety
// As for [`mb_image_copy_pixels`].
enum MbStatus mb_image_encode_pgm(const struct MbImage *img,
                                  uint8_t *buf,
                                  size_t cap,
                                  size_t *written);

// Applies the synthetic mask assigned to record `(subject, index)` under `seed`, exactly as
// the batch masker does.
//
// # Safety
// `img` must be a live image handle; `out` must be writable.
enum MbStatus mb_image_mask(const struct MbImage *img,
                            uint64_t seed,
                            uint32_t subject,
                            uint32_t index,
                            struct MbImage **out);

// # Safety
// `img` must be null or a handle not yet freed.
void mb_image_free(struct MbImage *img);

// Feature dimension for `cfg` (defaults when null), after validating it.
//
// # Safety
// `cfg` must be null or readable; `out` must be writable.
enum MbStatus mb_lbp_dimension(const struct MbLbpConfig *cfg, size_t *out);

// Writes the LBP feature vector of `img` under `cfg` (defaults when null) into `out`,
// which must hold exactly the feature dimension.
//
// # Safety
// `img` must be a live image handle, `cfg` null or readable, `out` writable for `len` doubles.
enum MbStatus mb_extract_features(const struct MbImage *img,
                                  const struct MbLbpConfig *cfg,
                                  double *out,
                                  size_t len);

// Empty training set of `dim`-dimensional rows.
//
// # Safety
// `out` must be writable.
enum MbStatus mb_dataset_new(size_t dim, struct MbDataset **out);

// Appends one row with subject label `label`.
//
// # Safety
// `ds` must be a live dataset handle and `row` readable for `len` doubles.
enum MbStatus mb_dataset_push(struct MbDataset *ds, const double *row, size_t len, uint32_t label);

// Number of rows; 0 for a null handle.
//
// # Safety
// `ds` must be null or a live dataset handle.
size_t mb_dataset_len(const struct MbDataset *ds);

// # Safety
// `ds` must be null or a handle not yet freed.
void mb_dataset_free(struct MbDataset *ds);

// Trains `model_type` (an `MbModelType`) on `ds` with `hyper` (defaults when null).
//
// # Safety
// `ds` must be a live dataset handle, `hyper` null or readable, `out` writable.
enum MbStatus mb_model_train(const struct MbDataset *ds,
                             uint32_t model_type,
                             const struct MbHyperparameters *hyper,
                             struct MbModel **out);

// Predicts the subject label of one feature row.
//
// # Safety
// `model` must be a live model handle, `row` readable for `len` doubles, `label` writable.
enum MbStatus mb_model_predict(const struct MbModel *model,
                               const double *row,
                               size_t len,
                               uint32_t *label);

// Input dimension; 0 for a null handle.
//
// # Safety
// `model` must be null or a live model handle.
size_t mb_model_dimension(const struct MbModel *model);

// The `MbModelType` of the model.
//
// # Safety
// `model` must be a live model handle; `out` must be writable.
enum MbStatus mb_model_type(const struct MbModel *model, uint32_t *out);

// Serializes the model to the versioned binary format.
//
// # Safety
// `model` must be a live model handle, `buf` null or writable for `cap` bytes, `written` writable.
enum MbStatus mb_model_serialize(const struct MbModel *model,
                                 uint8_t *buf,
                                 size_t cap,
                                 size_t *written);

// # Safety
// `bytes` must point to `len` readable bytes; `out` must be writable.
enum MbStatus mb_model_deserialize(const uint8_t *bytes, size_t len, struct MbModel **out);

// # Safety
// `model` must be null or a handle not yet freed.
void mb_model_free(struct MbModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MASKBENCH_H */
