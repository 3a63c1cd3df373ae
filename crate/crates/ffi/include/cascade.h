#ifndef CASCADE_H
#define CASCADE_H

/* Generated by cbindgen from cascade-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define CASCADE_OK 0

#define CASCADE_ERR_VALIDATION 2

#define CASCADE_ERR_NUMERICS 3

#define CASCADE_ERR_NULL 4

/**
 * Opaque handle to a completed simulation.
 */
typedef struct CascadeSimulation CascadeSimulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Returns the library version as a static NUL-terminated string.
 */
const char *cascade_version(void);

/**
 * Message of the last error raised on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *cascade_last_error(void);

/**
 * Computes the certification constant c*(sigma) and its minimizer.
 */
int32_t cascade_c_star(double sigma, double *out_c_star, double *out_m_star);

/**
 * First-passage survival probability of drifted Brownian motion started at
 * y >= 0 over horizon t.
 */
int32_t cascade_fp_survival(double y, double t, double alpha, double sigma, double *out);

/**
 * Runs the particle simulation described by a JSON run configuration (the
 * same schema as the CLI). On success stores a handle in `out`; release it
 * with `cascade_simulation_free`.
 *
 * # Safety
 * `config_json` must be a valid NUL-terminated string and `out` a valid
 * pointer.
 */
int32_t cascade_simulate_json(const char *config_json, struct CascadeSimulation **out);

/**
 * Number of recorded time nodes.
 *
 * # Safety
 * `sim` must be a live handle from `cascade_simulate_json`.
 */
uintptr_t cascade_simulation_len(const struct CascadeSimulation *sim);

/**
 * Copies the time, survivor-fraction and cumulative-loss series into
 * caller-provided buffers of length `len` (from `cascade_simulation_len`).
 * Any buffer pointer may be NULL to skip that series.
 *
 * # Safety
 * `sim` must be a live handle; non-NULL buffers must hold `len` doubles.
 */
int32_t cascade_simulation_series(const struct CascadeSimulation *sim,
                                  double *times,
                                  double *survivor_fraction,
                                  double *cum_log_loss,
                                  uintptr_t len);

/**
 * Number of cascade events in the run.
 *
 * # Safety
 * `sim` must be a live handle.
 */
uintptr_t cascade_simulation_n_events(const struct CascadeSimulation *sim);

/**
 * Time at which every bank had defaulted. Returns 1 and writes the time if
 * it happened, 0 otherwise (negative codes are errors).
 *
 * # Safety
 * `sim` must be a live handle and `out` a valid pointer.
 */
int32_t cascade_simulation_tau0(const struct CascadeSimulation *sim, double *out);

/**
 * Writes the simulation to a run directory (same layout as the CLI).
 *
 * # Safety
 * `sim` must be a live handle; `dir` a valid NUL-terminated path.
 */
int32_t cascade_simulation_save(const struct CascadeSimulation *sim, const char *dir);

/**
 * Releases a simulation handle. NULL is a no-op.
 *
 * # Safety
 * `sim` must be NULL or a handle not previously freed.
 */
void cascade_simulation_free(struct CascadeSimulation *sim);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* CASCADE_H */
