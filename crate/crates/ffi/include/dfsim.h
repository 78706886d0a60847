#ifndef DFSIM_H
#define DFSIM_H

/* Generated by cbindgen from crates/ffi/src; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DfsimStatus {
  DFSIM_STATUS_OK = 0,
  DFSIM_STATUS_NULL_POINTER = 1,
  DFSIM_STATUS_INVALID_UTF8 = 2,
  DFSIM_STATUS_INVALID_ARGUMENT = 3,
  // Config could not be parsed or failed validation.
  DFSIM_STATUS_CONFIG = 4,
  DFSIM_STATUS_IO = 5,
  // Numerical failure such as a non-Hermitian or singular operator.
  DFSIM_STATUS_NUMERIC = 6,
  DFSIM_STATUS_PANIC = 7,
} DfsimStatus;

typedef enum DfsimSequence {
  DFSIM_SEQUENCE_CP = 0,
  DFSIM_SEQUENCE_TS = 1,
} DfsimSequence;

// Opaque experiment configuration.
typedef struct DfsimExperiment DfsimExperiment;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. The pointer is
// valid until the next `dfsim_*` call on the same thread.
const char *dfsim_last_error(void);

// Library version as a static NUL-terminated string.
const char *dfsim_version(void);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from a `dfsim_*` function and not be freed twice.
void dfsim_string_free(char *s);

// Attenuation coefficient of a CP train with `2 n` pulses spaced `tau`.
//
// # Safety
// `out` must be valid for writes.
enum DfsimStatus dfsim_cp_zeta(double strength, double tau_c, uint32_t n, double tau, double *out);

// Entanglement fidelity of the CP train for a given attenuation coefficient.
//
// # Safety
// `out` must be valid for writes.
enum DfsimStatus dfsim_cp_fidelity(double zeta, uint32_t n, double tau, double *out);

// Attenuation coefficients of the time-suspension train.
//
// # Safety
// `zeta1` and `zeta2` must be valid for writes.
enum DfsimStatus dfsim_ts_zetas(double strength,
                                double tau_c,
                                uint32_t n,
                                double tau,
                                double *zeta1,
                                double *zeta2);

// Entanglement fidelity of the time-suspension train.
//
// # Safety
// `out` must be valid for writes.
enum DfsimStatus dfsim_ts_fidelity(double zeta1, double zeta2, uint32_t n, double tau, double *out);

// Monte Carlo fidelity of a two-spin decoupling train (secular coupling)
// with `n_cycles` cycles filling `total_time` seconds. `delta_omega` is in
// rad/s, `j_hz` in Hz. Deterministic in `seed` for any thread count.
//
// # Safety
// `fidelity` and `stderr_out` must be valid for writes.
enum DfsimStatus dfsim_dd_fidelity_mc(enum DfsimSequence sequence,
                                      uint32_t n_cycles,
                                      double total_time,
                                      double strength,
                                      double tau_c,
                                      double delta_omega,
                                      double j_hz,
                                      size_t n_traj,
                                      uint64_t seed,
                                      double *fidelity,
                                      double *stderr_out);

// Parses a TOML experiment config. On success `*out` owns a new handle.
//
// # Safety
// `toml` must be a NUL-terminated string; `out` must be valid for writes.
enum DfsimStatus dfsim_experiment_from_toml(const char *toml, struct DfsimExperiment **out);

// Reads and parses a TOML experiment config file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid for writes.
enum DfsimStatus dfsim_experiment_load(const char *path, struct DfsimExperiment **out);

// Overrides the master seed.
//
// # Safety
// `exp` must be a live handle.
enum DfsimStatus dfsim_experiment_set_seed(struct DfsimExperiment *exp, uint64_t seed);

// Validates without running. Counts are written to the out-pointers; when
// `report` is non-NULL it receives one violation per line (free with
// `dfsim_string_free`). Violations are data, so this returns OK for an
// invalid config.
//
// # Safety
// `exp` must be a live handle; out-pointers must be valid for writes or NULL
// where noted.
enum DfsimStatus dfsim_experiment_validate(const struct DfsimExperiment *exp,
                                           size_t *n_errors,
                                           size_t *n_warnings,
                                           char **report);

// Runs the experiment, writing its CSV and `summary.toml` into `out_dir`.
// `rows` (may be NULL) receives the number of CSV rows; `csv_path` (may be
// NULL) receives the CSV path, to be freed with `dfsim_string_free`.
//
// # Safety
// `exp` must be a live handle and `out_dir` a NUL-terminated string.
enum DfsimStatus dfsim_experiment_run(const struct DfsimExperiment *exp,
                                      const char *out_dir,
                                      size_t *rows,
                                      char **csv_path);

// Releases a handle. NULL is ignored.
//
// # Safety
// `exp` must come from `dfsim_experiment_*` and not be freed twice.
void dfsim_experiment_free(struct DfsimExperiment *exp);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DFSIM_H */
