#ifndef BATTCAL_H
#define BATTCAL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BattcalCalibratorKind {
  BATTCAL_CALIBRATOR_KIND_AGENT = 0,
  BATTCAL_CALIBRATOR_KIND_REGRESSOR = 1,
} BattcalCalibratorKind;

typedef enum BattcalStatus {
  BATTCAL_STATUS_OK = 0,
  BATTCAL_STATUS_NULL_POINTER = 1,
  BATTCAL_STATUS_INVALID_ARGUMENT = 2,
  BATTCAL_STATUS_INVALID_PARAMS = 3,
  BATTCAL_STATUS_SIMULATION = 4,
  BATTCAL_STATUS_IO = 5,
  BATTCAL_STATUS_SCHEMA = 6,
  BATTCAL_STATUS_KIND_MISMATCH = 7,
  BATTCAL_STATUS_DIMENSION = 8,
  BATTCAL_STATUS_CONFIG = 9,
  BATTCAL_STATUS_PANIC = 10,
} BattcalStatus;

typedef enum BattcalTarget {
  BATTCAL_TARGET_Q_MAX = 0,
  BATTCAL_TARGET_R_OHM = 1,
  BATTCAL_TARGET_JOINT = 2,
} BattcalTarget;

/**
 * A trained calibrator loaded from a checkpoint.
 */
typedef struct BattcalCalibrator BattcalCalibrator;

/**
 * A battery simulated step by step under the default cell constants.
 */
typedef struct BattcalSimulator BattcalSimulator;

/**
 * A real-time calibration session: feeds measured states to a calibrator
 * and keeps its own predicted state.
 */
typedef struct BattcalTracker BattcalTracker;

typedef struct BattcalParams {
  double q_max;
  double r_o;
} BattcalParams;

/**
 * Internal state of the cell, charges in C and voltages in V.
 */
typedef struct BattcalState {
  double q_sp;
  double q_bp;
  double q_bn;
  double q_sn;
  double v_o;
  double v_eta_p;
  double v_eta_n;
} BattcalState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *battcal_version(void);

/**
 * Copies the last error message of this thread into `buf` (truncated and
 * NUL-terminated) and returns the buffer size needed for the whole message,
 * or 0 when the last call succeeded.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t battcal_last_error(char *buf, size_t len);

/**
 * Starts a fully charged cell with the given parameters.
 *
 * # Safety
 * `out` must be a valid pointer to receive the handle.
 */
enum BattcalStatus battcal_simulator_new(struct BattcalParams params,
                                         struct BattcalSimulator **out);

/**
 * Advances the cell by one step at discharge current `current` (A).
 * Either output may be null.
 *
 * # Safety
 * `sim` must come from `battcal_simulator_new`; outputs must be valid or null.
 */
enum BattcalStatus battcal_simulator_step(struct BattcalSimulator *sim,
                                          double current,
                                          struct BattcalState *out_state,
                                          double *out_voltage);

/**
 * Current state and terminal voltage of the cell. Either output may be null.
 *
 * # Safety
 * `sim` must come from `battcal_simulator_new`; outputs must be valid or null.
 */
enum BattcalStatus battcal_simulator_state(const struct BattcalSimulator *sim,
                                           struct BattcalState *out_state,
                                           double *out_voltage);

/**
 * # Safety
 * `sim` must be null or a handle not yet freed.
 */
void battcal_simulator_free(struct BattcalSimulator *sim);

/**
 * Loads an agent or regressor checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` a valid pointer.
 */
enum BattcalStatus battcal_calibrator_load(const char *path, struct BattcalCalibrator **out);

/**
 * # Safety
 * `cal` must come from `battcal_calibrator_load`; outputs must be valid or null.
 */
enum BattcalStatus battcal_calibrator_info(const struct BattcalCalibrator *cal,
                                           enum BattcalCalibratorKind *out_kind,
                                           enum BattcalTarget *out_target);

/**
 * # Safety
 * `cal` must be null or a handle not yet freed.
 */
void battcal_calibrator_free(struct BattcalCalibrator *cal);

/**
 * Opens a tracking session whose predicted state starts fully charged at
 * the checkpoint's reference parameters. The session keeps the
 * calibrator alive on its own; `cal` may be freed afterwards.
 *
 * # Safety
 * `cal` must come from `battcal_calibrator_load`; `out` must be valid.
 */
enum BattcalStatus battcal_tracker_new(const struct BattcalCalibrator *cal,
                                       struct BattcalTracker **out);

/**
 * One calibration step. `measured_prev` and `measured_next` are the
 * cell's states before and after a step at `current` (A); agents only read
 * `measured_next` (so `measured_prev` may be null for them), regressors need
 * both. Writes the parameter estimate applied at this step.
 *
 * # Safety
 * `tracker` must come from `battcal_tracker_new`; pointers must be valid
 * where required.
 */
enum BattcalStatus battcal_tracker_step(struct BattcalTracker *tracker,
                                        const struct BattcalState *measured_prev,
                                        const struct BattcalState *measured_next,
                                        double current,
                                        struct BattcalParams *out_params);

/**
 * The session's predicted state.
 *
 * # Safety
 * `tracker` must come from `battcal_tracker_new`; `out_state` must be valid.
 */
enum BattcalStatus battcal_tracker_predicted(const struct BattcalTracker *tracker,
                                             struct BattcalState *out_state);

/**
 * # Safety
 * `tracker` must be null or a handle not yet freed.
 */
void battcal_tracker_free(struct BattcalTracker *tracker);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BATTCAL_H */
