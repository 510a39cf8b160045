#ifndef VTBENCH_H
#define VTBENCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VtStatus {
  VT_STATUS_OK = 0,
  VT_STATUS_NULL_POINTER = 1,
  VT_STATUS_INVALID_ARGUMENT = 2,
  VT_STATUS_PARSE = 3,
  VT_STATUS_VALIDATION = 4,
  VT_STATUS_BUDGET = 5,
  VT_STATUS_IO = 6,
  VT_STATUS_PANIC = 7,
} VtStatus;

/**
 * Opaque attack configuration.
 */
typedef struct VtAttackConfig VtAttackConfig;

/**
 * Opaque trained model.
 */
typedef struct VtModel VtModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next `vt_*` call on the same thread.
 */
const char *vt_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *vt_version(void);

/**
 * Loads a model JSON file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum VtStatus vt_model_load(const char *path, struct VtModel **out);

/**
 * Parses a model from JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a writable pointer.
 */
enum VtStatus vt_model_from_json(const char *json, struct VtModel **out);

/**
 * # Safety
 * `model` must be null or a handle from `vt_model_load` not yet freed.
 */
void vt_model_free(struct VtModel *model);

/**
 * Number of output classes, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t vt_model_num_classes(const struct VtModel *model);

/**
 * Number of input values `C*H*W`, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t vt_model_input_len(const struct VtModel *model);

/**
 * Writes the logits of `x` into `out` (`out_len` must equal the class count).
 *
 * # Safety
 * `x` must point to `len` doubles and `out` to `out_len` writable doubles.
 */
enum VtStatus vt_model_logits(const struct VtModel *model,
                              const double *x,
                              size_t len,
                              double *out,
                              size_t out_len);

/**
 * Predicted class of `x`, ties going to the lowest index.
 *
 * # Safety
 * `x` must point to `len` doubles and `out_class` be writable.
 */
enum VtStatus vt_model_predict(const struct VtModel *model,
                               const double *x,
                               size_t len,
                               size_t *out_class);

/**
 * Preset configuration for `method` (`"fgsm"`, `"ifgsm"`, `"mifgsm"`,
 * `"nifgsm"`, `"vmifgsm"`, `"vnifgsm"`) with budget `epsilon_255` over
 * `steps` iterations.
 *
 * # Safety
 * `method` must be a NUL-terminated string and `out` a writable pointer.
 */
enum VtStatus vt_config_new(const char *method,
                            double epsilon_255,
                            size_t steps,
                            struct VtAttackConfig **out);

/**
 * # Safety
 * `config` must be null or a handle from `vt_config_new` not yet freed.
 */
void vt_config_free(struct VtAttackConfig *config);

/**
 * # Safety
 * `config` must be a live handle.
 */
enum VtStatus vt_config_set_beta(struct VtAttackConfig *config, double beta);

/**
 * # Safety
 * `config` must be a live handle.
 */
enum VtStatus vt_config_set_samples(struct VtAttackConfig *config, size_t samples);

/**
 * # Safety
 * `config` must be a live handle.
 */
enum VtStatus vt_config_set_decay(struct VtAttackConfig *config, double decay);

/**
 * Step size in 0-255 units.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum VtStatus vt_config_set_step_size(struct VtAttackConfig *config, double step_size_255);

/**
 * # Safety
 * `config` must be a live handle.
 */
enum VtStatus vt_config_set_project_ball(struct VtAttackConfig *config, bool on);

/**
 * Crafts an adversarial example for `(x, label)` against `model`, writing
 * it to `out_x` (`len` doubles) and the gradient query count to
 * `out_queries` when that is non-null.
 *
 * # Safety
 * `x` and `out_x` must each point to `len` doubles; `out_queries` must be
 * null or writable.
 */
enum VtStatus vt_attack_run(const struct VtModel *model,
                            const struct VtAttackConfig *config,
                            const double *x,
                            size_t len,
                            size_t label,
                            uint64_t seed,
                            double *out_x,
                            size_t *out_queries);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VTBENCH_H */
