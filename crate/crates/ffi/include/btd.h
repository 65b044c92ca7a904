#ifndef BTD_H
#define BTD_H

#include <stddef.h>
#include <stdint.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum BtdStatus {
  BTD_STATUS_OK = 0,
  BTD_STATUS_NULL_ARGUMENT = 1,
  BTD_STATUS_IO = 2,
  BTD_STATUS_BAD_MODEL = 3,
  BTD_STATUS_BAD_IMAGE = 4,
  BTD_STATUS_INVALID_ARGUMENT = 5,
  BTD_STATUS_BUFFER_TOO_SMALL = 6,
  BTD_STATUS_RUNTIME = 7,
  BTD_STATUS_PANIC = 8,
} BtdStatus;

/**
 * Opaque trained model.
 */
typedef struct BtdModel BtdModel;

typedef struct BtdConfusion {
  uint64_t tp;
  uint64_t fp;
  uint64_t tn;
  uint64_t fn_;
} BtdConfusion;

/**
 * One metric as an exact fraction. When `defined` is 0 the denominator was
 * zero and the other fields are 0.
 */
typedef struct BtdMetric {
  uint8_t defined;
  uint64_t num;
  uint64_t den;
  double value;
  /**
   * Percent in hundredths, rounded half up (98.27% is 9827).
   */
  uint32_t percent_bp;
} BtdMetric;

typedef struct BtdMetrics {
  struct BtdMetric accuracy;
  struct BtdMetric sensitivity;
  struct BtdMetric specificity;
  struct BtdMetric precision;
} BtdMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next `btd_*` call on the same thread.
 */
const char *btd_last_error(void);

/**
 * Model container format version this library reads and writes.
 */
uint32_t btd_format_version(void);

/**
 * Loads a `.btdm` file. On success `*out` receives a handle to release with
 * `btd_model_free`.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string and `out` a valid pointer.
 */
enum BtdStatus btd_model_load(const char *path, struct BtdModel **out);

/**
 * Loads a model from an in-memory `.btdm` image.
 *
 * # Safety
 * `data` must point to `len` readable bytes and `out` be a valid pointer.
 */
enum BtdStatus btd_model_load_bytes(const uint8_t *data, size_t len, struct BtdModel **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must come from a `btd_model_load*` call and not be used afterwards.
 */
void btd_model_free(struct BtdModel *model);

/**
 * Number of output classes (the length of a score vector).
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum BtdStatus btd_model_num_classes(const struct BtdModel *model, size_t *out);

/**
 * Classifies a binary PGM image. `*out_class` receives 0 (healthy) or
 * 1 (tumor); `scores` (may be null when `scores_len` is 0) receives the head's
 * score vector, which needs `btd_model_num_classes` slots.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum BtdStatus btd_model_predict_pgm(const struct BtdModel *model,
                                     const uint8_t *pgm,
                                     size_t pgm_len,
                                     uint32_t *out_class,
                                     double *scores,
                                     size_t scores_len);

/**
 * Tallies a confusion matrix from class indices (0 healthy, 1 tumor).
 *
 * # Safety
 * `preds` and `labels` must each point to `n` values; `out` must be valid.
 */
enum BtdStatus btd_confusion(const uint32_t *preds,
                             const uint32_t *labels,
                             size_t n,
                             struct BtdConfusion *out);

/**
 * Accuracy, sensitivity, specificity and precision of a confusion matrix.
 *
 * # Safety
 * `cm` and `out` must be valid pointers.
 */
enum BtdStatus btd_metrics(const struct BtdConfusion *cm, struct BtdMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BTD_H */
