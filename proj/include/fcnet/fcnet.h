/* SPDX-License-Identifier: Apache-2.0 */

#ifndef FCNET_FCNET_H
#define FCNET_FCNET_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(FCNET_BUILDING_LIBRARY)
#define FCNET_EXPORT __declspec(dllexport)
#else
#define FCNET_EXPORT __declspec(dllimport)
#endif
#else
#define FCNET_EXPORT __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fcnet_status {
  FCNET_OK = 0,
  FCNET_ERR_INVALID_ARGUMENT = 1,
  FCNET_ERR_SHAPE = 2,
  FCNET_ERR_IO = 3,
  FCNET_ERR_FORMAT = 4,
  FCNET_ERR_CONFIG_MISMATCH = 5,
  FCNET_ERR_INTERNAL = 6
} fcnet_status;

/* Opaque model handle: parameters plus optimizer state, epoch and RNG state. */
typedef struct fcnet_model fcnet_model;

/* Receives one line of structured text (a JSON object, no trailing newline). */
typedef void (*fcnet_line_callback)(const char* line, void* user);

FCNET_EXPORT const char* fcnet_status_string(fcnet_status status);

/* Message of the last failure on the calling thread; "" when none. Valid until
 * the next failing call on the same thread. */
FCNET_EXPORT const char* fcnet_last_error(void);

/* `config_text` is key=value lines (model and training keys); NULL means defaults. */
FCNET_EXPORT fcnet_status fcnet_model_create(const char* config_text, uint64_t seed, fcnet_model** out);

/* With a non-NULL `config_text`, fails with FCNET_ERR_CONFIG_MISMATCH when the
 * stored model config differs. */
FCNET_EXPORT fcnet_status fcnet_model_load(const char* path, const char* config_text, fcnet_model** out);
FCNET_EXPORT fcnet_status fcnet_model_save(const fcnet_model* model, const char* path);
FCNET_EXPORT void fcnet_model_destroy(fcnet_model* model);

FCNET_EXPORT fcnet_status fcnet_model_param_count(const fcnet_model* model, uint64_t* out);
FCNET_EXPORT fcnet_status fcnet_model_depth(const fcnet_model* model, int* out);

/* `frames` is K×3×H×W planar float in [0,1]; `out` receives 3×H×W. */
FCNET_EXPORT fcnet_status fcnet_model_forward(const fcnet_model* model, const float* frames, int k, int h, int w,
                                              float* out);

/* Analytic counts for a config; FLOPs are multiply-accumulates. */
FCNET_EXPORT fcnet_status fcnet_count_params(const char* config_text, uint64_t* out);
FCNET_EXPORT fcnet_status fcnet_count_flops(const char* config_text, int k, int h, int w, uint64_t* out);

/* Canonical config text with every field. Copies at most `capacity` bytes
 * including the terminator; `needed` receives the full size. */
FCNET_EXPORT fcnet_status fcnet_config_canonical(const char* config_text, char* buffer, size_t capacity,
                                                 size_t* needed);

/* Reads `count` PNG paths, writes O^1 to `out_path`. A non-NULL `dump_dir`
 * also receives per-level F_l<i>.png and O_l<i>.png. */
FCNET_EXPORT fcnet_status fcnet_infer_files(const fcnet_model* model, const char* const* inputs, int count,
                                            const char* out_path, const char* dump_dir);

/* Trains on a JSONL manifest. `resume_checkpoint` may be NULL. Each step
 * record is passed to `on_step` (may be NULL). */
FCNET_EXPORT fcnet_status fcnet_train(const char* manifest, const char* config_text, const char* out_dir,
                                      const char* resume_checkpoint, fcnet_line_callback on_step, void* user);

/* `task` is one of sec, under-ef, over-ef, mef; `bypass` is NULL/"none", "gt"
 * or "best-input". `model` may be NULL when bypassing. The report (per-scene
 * rows then a mean row) is written to `report_path` when non-NULL and passed
 * row by row to `on_row`. */
FCNET_EXPORT fcnet_status fcnet_eval(const fcnet_model* model, const char* manifest, const char* task,
                                     const char* bypass, int workers, const char* report_path,
                                     fcnet_line_callback on_row, void* user);

FCNET_EXPORT fcnet_status fcnet_pyramid_debug(const char* image, int depth, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif /* FCNET_FCNET_H */
