#ifndef ACTION_SEARCH_H
#define ACTION_SEARCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every exported function.
 */
typedef enum AsStatus {
  AS_STATUS_OK = 0,
  AS_STATUS_NULL_POINTER = 1,
  AS_STATUS_INVALID_ARGUMENT = 2,
  AS_STATUS_IO = 3,
  AS_STATUS_FORMAT = 4,
  AS_STATUS_NUMERIC = 5,
  AS_STATUS_BUFFER_TOO_SMALL = 6,
  AS_STATUS_PANIC = 7,
} AsStatus;

/**
 * Trained search model for one class.
 */
typedef struct AsModel AsModel;

/**
 * Per-frame feature timeline of one video.
 */
typedef struct AsTimeline AsTimeline;

/**
 * A scored interval, the element type of `as_nms`.
 */
typedef struct AsProposal {
  double start;
  double end;
  uint32_t class_id;
  double score;
  double anchor;
} AsProposal;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next call on the same thread.
 */
const char *as_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *as_version(void);

/**
 * Temporal intersection over union of `[s1, e1]` and `[s2, e2]`.
 *
 * # Safety
 * `out` must be null or point to writable storage for one double.
 */
enum AsStatus as_tiou(double s1, double e1, double s2, double e2, double *out);

/**
 * Class-wise non-maximum suppression. `out` needs room for `len` proposals;
 * the survivors are written in ranking order and their count to `out_len`.
 *
 * # Safety
 * `proposals` must point to `len` readable elements and `out` to `len`
 * writable ones. `out_len` must be writable.
 */
enum AsStatus as_nms(const struct AsProposal *proposals,
                     size_t len,
                     double threshold,
                     struct AsProposal *out,
                     size_t *out_len);

/**
 * Loads a search model checkpoint (`.asmd`) from disk.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum AsStatus as_model_load(const char *path, struct AsModel **out);

/**
 * Decodes a search model checkpoint held in memory.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `out` must be writable.
 */
enum AsStatus as_model_from_bytes(const uint8_t *data, size_t len, struct AsModel **out);

/**
 * Class id the model was trained for.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum AsStatus as_model_class_id(const struct AsModel *model, uint32_t *out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from `as_model_load` or `as_model_from_bytes` and not be
 * used afterwards.
 */
void as_model_free(struct AsModel *model);

/**
 * Loads an FTLN feature timeline; the video id is the file stem.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum AsStatus as_timeline_load(const char *path, struct AsTimeline **out);

/**
 * Decodes an FTLN feature timeline held in memory.
 *
 * # Safety
 * `video_id` must be a NUL-terminated string, `data` must point to `len`
 * readable bytes and `out` must be writable.
 */
enum AsStatus as_timeline_from_bytes(const char *video_id,
                                     const uint8_t *data,
                                     size_t len,
                                     struct AsTimeline **out);

/**
 * Duration of the timeline in seconds.
 *
 * # Safety
 * `timeline` must be a live handle; `out` must be writable.
 */
enum AsStatus as_timeline_duration(const struct AsTimeline *timeline, double *out);

/**
 * Releases a timeline. Null is ignored.
 *
 * # Safety
 * `timeline` must come from `as_timeline_load` or `as_timeline_from_bytes`
 * and not be used afterwards.
 */
void as_timeline_free(struct AsTimeline *timeline);

/**
 * Runs the search from `initial_position` for at most `steps` steps and
 * writes the visited positions (seconds) to `positions`. The search may stop
 * early, so `out_len` receives the number written. `capacity` must be at
 * least `steps`.
 *
 * # Safety
 * Handles must be live, `positions` must have `capacity` writable slots and
 * `out_len` must be writable.
 */
enum AsStatus as_run_search(const struct AsModel *model,
                            const struct AsTimeline *timeline,
                            double initial_position,
                            size_t steps,
                            double *positions,
                            size_t capacity,
                            size_t *out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ACTION_SEARCH_H */
