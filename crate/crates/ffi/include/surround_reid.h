#ifndef SURROUND_REID_H
#define SURROUND_REID_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum {
  SR_STATUS_OK = 0,
  SR_STATUS_NULL_POINTER = 1,
  SR_STATUS_INVALID_UTF8 = 2,
  SR_STATUS_INVALID_CONFIG = 3,
  SR_STATUS_INVALID_INPUT = 4,
  SR_STATUS_DIMENSION_MISMATCH = 5,
  SR_STATUS_SEQUENCE_MISMATCH = 6,
  SR_STATUS_INTERNAL = 7,
  SR_STATUS_PANIC = 8,
} SrStatus;

/**
 * Streaming engine handle. Create with [`sr_engine_new`], release with
 * [`sr_engine_free`].
 */
typedef struct SrEngine SrEngine;

/**
 * Axis-aligned box given by center and size, in pixels.
 */
typedef struct {
  double cx;
  double cy;
  double w;
  double h;
} SrBox;

/**
 * Message of the last failed call on this thread, or an empty string.
 * The pointer stays valid until the next call on the same thread.
 */
const char *sr_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` is null or was returned by this library and not yet freed.
 */
void sr_string_free(char *s);

/**
 * Overlap of two `r_side` squares centered on consecutive box centers.
 *
 * # Safety
 * `out` is valid for a write.
 */
SrStatus sr_iou_r(double prev_x,
                  double prev_y,
                  double curr_x,
                  double curr_y,
                  double r_side,
                  double *out);

/**
 * # Safety
 * `out` is valid for a write.
 */
SrStatus sr_reid_confidence(double c_t, double iou_r, double *out);

/**
 * Fraction of `subject` covered by `other`.
 *
 * # Safety
 * `subject` and `other` point to valid boxes; `out` is valid for a write.
 */
SrStatus sr_occlusion_coefficient(const SrBox *subject, const SrBox *other, double *out);

/**
 * Distance score `ln(1 / max(d, epsilon) + 1)`, shared by the appearance
 * and keypoint scores.
 *
 * # Safety
 * `out` is valid for a write.
 */
SrStatus sr_score(double distance, double epsilon, double *out);

/**
 * # Safety
 * `out` is valid for a write.
 */
SrStatus sr_fuse(double s1, double s2, double alpha, double beta, double *out);

/**
 * Renders the configured scenario into dataset lines.
 *
 * # Safety
 * `config_toml` is null (defaults) or a NUL-terminated string; `out` is
 * valid for a write.
 */
SrStatus sr_simulate(const char *config_toml, char **out);

/**
 * Runs the pipeline over dataset lines and returns results lines.
 *
 * # Safety
 * `config_toml` is null or a NUL-terminated string; `dataset_jsonl` is a
 * NUL-terminated string; `out` is valid for a write.
 */
SrStatus sr_track(const char *config_toml, const char *dataset_jsonl, char **out);

/**
 * Scores results lines against dataset lines; returns the report as JSON.
 *
 * # Safety
 * `config_toml` is null or a NUL-terminated string; the two inputs are
 * NUL-terminated strings; `out` is valid for a write.
 */
SrStatus sr_evaluate(const char *config_toml,
                     const char *dataset_jsonl,
                     const char *results_jsonl,
                     char **out);

/**
 * Creates a streaming engine. The tracker backend is the simulator's
 * oracle, so pushed records must carry their `truth` annotations.
 *
 * # Safety
 * `config_toml` is null or a NUL-terminated string; `out` is valid for a
 * write.
 */
SrStatus sr_engine_new(const char *config_toml, SrEngine **out);

/**
 * Processes one frame given as a JSON array of dataset records (at most
 * one per camera, all with the same sequence and frame). Cameras without
 * a record see an empty frame.
 *
 * # Safety
 * `engine` was returned by [`sr_engine_new`]; `frame_json` is a
 * NUL-terminated string.
 */
SrStatus sr_engine_push_frame(SrEngine *engine, const char *frame_json);

/**
 * Returns the results lines produced since the last call and clears them.
 *
 * # Safety
 * `engine` was returned by [`sr_engine_new`]; `out` is valid for a write.
 */
SrStatus sr_engine_take_results(SrEngine *engine, char **out);

/**
 * Releases an engine. Null is ignored.
 *
 * # Safety
 * `engine` is null or was returned by [`sr_engine_new`] and not yet freed.
 */
void sr_engine_free(SrEngine *engine);

#endif  /* SURROUND_REID_H */
