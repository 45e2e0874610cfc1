#ifndef MCCKF_H
#define MCCKF_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum {
  MCC_STATUS_OK = 0,
  /**
   * Null pointer, bad length, invalid UTF-8 or an out-of-range argument.
   */
  MCC_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Unknown filter name, bad strategy or malformed JSON.
   */
  MCC_STATUS_CONFIG = 2,
  MCC_STATUS_INVALID_MODEL = 3,
  /**
   * Factorization or inversion failed, or a non-finite value appeared.
   */
  MCC_STATUS_NUMERICAL = 4,
  /**
   * Measurement or trajectory data does not fit the model.
   */
  MCC_STATUS_DATA = 5,
  MCC_STATUS_IO = 6,
  MCC_STATUS_PANIC = 7,
} MccStatus;

typedef struct MccFilter MccFilter;

typedef struct MccModel MccModel;

typedef struct MccTrajectory MccTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *mcc_last_error(void);

/**
 * Frees a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void mcc_string_free(char *s);

/**
 * Builds the four-state satellite model. With `zero_pi0` set the filters start
 * from a known initial state instead of the default prior.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage.
 */
MccStatus mcc_model_satellite(double q4, bool zero_pi0, MccModel **out);

/**
 * Parses a model from JSON with keys `F`, `G`, `H`, `Q`, `R`, `x0_mean`
 * and `Pi0`.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` writable.
 */
MccStatus mcc_model_from_json(const char *json, MccModel **out);

/**
 * # Safety
 * `model` must be a valid handle or null.
 */
MccStatus mcc_model_dims(const MccModel *model, size_t *state_dim, size_t *meas_dim);

/**
 * # Safety
 * `model` must come from this library and not be freed twice.
 */
void mcc_model_free(MccModel *model);

/**
 * Simulates `n_steps` transitions with a fixed seed. When `shot_noise` is
 * set, the default impulsive noise is added to the measurements.
 *
 * # Safety
 * `model` must be a valid handle and `out` writable.
 */
MccStatus mcc_trajectory_simulate(const MccModel *model,
                                  size_t n_steps,
                                  bool shot_noise,
                                  uint64_t seed,
                                  MccTrajectory **out);

/**
 * # Safety
 * `path` must be a nul-terminated string and `out` writable.
 */
MccStatus mcc_trajectory_load(const char *path, MccTrajectory **out);

/**
 * # Safety
 * `traj` must be a valid handle and `path` a nul-terminated string.
 */
MccStatus mcc_trajectory_save(const MccTrajectory *traj, const char *path);

/**
 * Number of time instants, `N + 1`.
 *
 * # Safety
 * `traj` must be a valid handle and `len` writable.
 */
MccStatus mcc_trajectory_len(const MccTrajectory *traj, size_t *len);

/**
 * Copies `y_k` into `buf`, which must hold exactly the measurement dimension.
 *
 * # Safety
 * `traj` must be a valid handle and `buf` must point to `len` doubles.
 */
MccStatus mcc_trajectory_measurement(const MccTrajectory *traj, size_t k, double *buf, size_t len);

/**
 * Copies `x_k` into `buf`, which must hold exactly the state dimension.
 *
 * # Safety
 * `traj` must be a valid handle and `buf` must point to `len` doubles.
 */
MccStatus mcc_trajectory_state(const MccTrajectory *traj, size_t k, double *buf, size_t len);

/**
 * # Safety
 * `traj` must come from this library and not be freed twice.
 */
void mcc_trajectory_free(MccTrajectory *traj);

/**
 * Creates a filter from a JSON spec such as
 * `{"name": "alg1", "strategy": "constant", "lambda": 0.6}`.
 * The model is copied; the handle may be freed afterwards.
 *
 * # Safety
 * `model` must be a valid handle, `spec_json` nul-terminated and `out`
 * writable.
 */
MccStatus mcc_filter_new(const MccModel *model, const char *spec_json, MccFilter **out);

/**
 * Processes one measurement. On success the kernel weight used at this step
 * is written to `lambda` when it is not null.
 *
 * # Safety
 * `filter` must be a valid handle and `y` must point to `len` doubles.
 */
MccStatus mcc_filter_step(MccFilter *filter, const double *y, size_t len, double *lambda);

/**
 * Copies the current one-step prediction into `buf`.
 *
 * # Safety
 * `filter` must be a valid handle and `buf` must point to `len` doubles.
 */
MccStatus mcc_filter_prediction(const MccFilter *filter, double *buf, size_t len);

/**
 * Displacement rank of a Chandrasekhar filter; -1 for Riccati filters.
 *
 * # Safety
 * `filter` must be a valid handle and `alpha` writable.
 */
MccStatus mcc_filter_alpha(const MccFilter *filter, int64_t *alpha);

/**
 * # Safety
 * `filter` must come from this library and not be freed twice.
 */
void mcc_filter_free(MccFilter *filter);

/**
 * Runs a Monte Carlo experiment described by `config_json` and returns the
 * report as JSON in `report`, to be released with [`mcc_string_free`].
 * `threads` above 1 parallelizes the accuracy pass.
 *
 * # Safety
 * `config_json` must be nul-terminated and `report` writable.
 */
MccStatus mcc_run_experiment_json(const char *config_json, size_t threads, char **report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MCCKF_H */
