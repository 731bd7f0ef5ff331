/* C interface to the dpkan library. */

#ifndef DPKAN_H
#define DPKAN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define DPKAN_OK 0

#define DPKAN_ERR_NULL_POINTER -1

#define DPKAN_ERR_ARGUMENT -2

#define DPKAN_ERR_SHAPE -3

#define DPKAN_ERR_PARSE -4

#define DPKAN_ERR_FORMAT -5

#define DPKAN_ERR_IO -6

#define DPKAN_ERR_DIVERGED -7

#define DPKAN_ERR_INFEASIBLE -8

#define DPKAN_ERR_UTF8 -9

/**
 * Opaque handle to a trained model.
 */
typedef struct dpkan_model dpkan_model;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent error on this thread. The pointer
 * stays valid until the next failing dpkan call on the same thread.
 */
const char *dpkan_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *dpkan_version(void);

/**
 * Load a model from a file written by `dpkan_model_save` or the CLI.
 * Returns null on failure.
 */
struct dpkan_model *dpkan_model_load(const char *path);

/**
 * Write the model to a file.
 */
int32_t dpkan_model_save(const struct dpkan_model *model, const char *path);

/**
 * Release a model handle. Null is a no-op.
 */
void dpkan_model_free(struct dpkan_model *model);

/**
 * Number of trainable parameters, or 0 for a null handle.
 */
uint64_t dpkan_model_param_count(const struct dpkan_model *model);

/**
 * Input dimension, or 0 for a null handle.
 */
uint64_t dpkan_model_n_inputs(const struct dpkan_model *model);

/**
 * Output dimension, or 0 for a null handle.
 */
uint64_t dpkan_model_n_outputs(const struct dpkan_model *model);

/**
 * Run one forward pass. `input` must hold `n_in` values and `output`
 * space for `n_out` values, matching the model dimensions.
 */
int32_t dpkan_model_forward(const struct dpkan_model *model,
                            const double *input,
                            uint64_t n_in,
                            double *output,
                            uint64_t n_out);

/**
 * Total (epsilon, delta)-DP spend of Poisson-subsampled DP training.
 */
int32_t dpkan_compute_epsilon(double sigma,
                              uint64_t batch_size,
                              uint64_t dataset_size,
                              uint64_t epochs,
                              double delta,
                              double *out_epsilon);

/**
 * Noise multiplier that spends `target_epsilon` under the same mechanism.
 */
int32_t dpkan_calibrate_sigma(double target_epsilon,
                              double delta,
                              uint64_t batch_size,
                              uint64_t dataset_size,
                              uint64_t epochs,
                              double *out_sigma);

/**
 * Run a full experiment from a config file, optionally persisting
 * outputs to `out_dir` (nullable). On success writes the aggregate
 * test metric to `out_metric_mean`.
 */
int32_t dpkan_run_experiment(const char *config_path, const char *out_dir, double *out_metric_mean);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* DPKAN_H */
