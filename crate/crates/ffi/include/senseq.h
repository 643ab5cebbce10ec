#ifndef SENSEQ_H
#define SENSEQ_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SenseqStatus {
  SENSEQ_STATUS_OK = 0,
  SENSEQ_STATUS_NULL_ARGUMENT = 1,
  SENSEQ_STATUS_INVALID_UTF8 = 2,
  SENSEQ_STATUS_IO = 3,
  SENSEQ_STATUS_PARSE = 4,
  SENSEQ_STATUS_METADATA = 5,
  SENSEQ_STATUS_INVALID_CONFIG = 6,
  SENSEQ_STATUS_DOMAIN = 7,
  SENSEQ_STATUS_DIMENSION = 8,
  SENSEQ_STATUS_NUMERICAL = 9,
  SENSEQ_STATUS_MODEL_MISMATCH = 10,
  SENSEQ_STATUS_BUFFER_TOO_SMALL = 11,
  SENSEQ_STATUS_PANIC = 12,
} SenseqStatus;

/*
 Timeslice data plus its house metadata.
 */
typedef struct SenseqDataset SenseqDataset;

/*
 A trained model together with the feature recipe it expects.
 */
typedef struct SenseqModel SenseqModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the most recent failure on this thread, or NULL. The pointer
 stays valid until the next failing call on the same thread.
 */
const char *senseq_last_error_message(void);

/*
 Frees a string returned by this library. NULL is ignored.

 # Safety
 `s` must come from this library and not have been freed.
 */
void senseq_string_free(char *s);

/*
 Loads a dataset file written by `senseq rasterize` (its `.meta.json`
 sidecar must sit next to it).

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SenseqStatus senseq_dataset_load(const char *path, struct SenseqDataset **out);

/*
 Rasterizes an events CSV over the span of its events.

 # Safety
 Both paths must be NUL-terminated strings; `out` must be writable.
 */
enum SenseqStatus senseq_dataset_from_events(const char *events_path,
                                             const char *meta_path,
                                             struct SenseqDataset **out);

/*
 # Safety
 `ds` must come from this library and not have been freed; NULL is ignored.
 */
void senseq_dataset_free(struct SenseqDataset *ds);

/*
 Timeslices, sensors, activities and days. Any output pointer may be NULL.

 # Safety
 `ds` must be a live handle; non-NULL outputs must be writable.
 */
enum SenseqStatus senseq_dataset_shape(const struct SenseqDataset *ds,
                                       size_t *n_timeslices,
                                       size_t *n_sensors,
                                       size_t *n_activities,
                                       size_t *n_days);

/*
 Leave-one-day-out cross-validation. `options_json` is an object like
 `{"model":"crf","features":{"representation":"ob","concat_k":5}}`; the
 full report is returned as JSON in `report_json`.

 # Safety
 `ds` must be a live handle, `options_json` a NUL-terminated string and
 `report_json` writable.
 */
enum SenseqStatus senseq_cross_validate(const struct SenseqDataset *ds,
                                        const char *options_json,
                                        char **report_json);

/*
 Trains on every day of `ds`.

 # Safety
 `ds` must be a live handle, `options_json` a NUL-terminated string and
 `out` writable.
 */
enum SenseqStatus senseq_train(const struct SenseqDataset *ds,
                               const char *options_json,
                               struct SenseqModel **out);

/*
 Loads a model JSON document.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SenseqStatus senseq_model_load(const char *path, struct SenseqModel **out);

/*
 # Safety
 `model` must be a live handle and `path` a NUL-terminated string.
 */
enum SenseqStatus senseq_model_save(const struct SenseqModel *model, const char *path);

/*
 The model document as JSON.

 # Safety
 `model` must be a live handle; `json` must be writable.
 */
enum SenseqStatus senseq_model_to_json(const struct SenseqModel *model, char **json);

/*
 # Safety
 `model` must come from this library and not have been freed; NULL is
 ignored.
 */
void senseq_model_free(struct SenseqModel *model);

/*
 Decodes every day of `ds` with the model's own feature recipe and writes
 one label per evaluation unit (minute or segment) into `labels`.
 `written` always receives the required length; if `capacity` is too small
 nothing else is written and `BufferTooSmall` is returned.

 # Safety
 Handles must be live; `labels` must point to `capacity` writable values
 (may be NULL when `capacity` is 0); `written` must be writable.
 */
enum SenseqStatus senseq_predict(const struct SenseqModel *model,
                                 const struct SenseqDataset *ds,
                                 size_t *labels,
                                 size_t capacity,
                                 size_t *written);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* SENSEQ_H */
