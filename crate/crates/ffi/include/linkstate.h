/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef LINKSTATE_H
#define LINKSTATE_H

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum LsStatus {
  LS_STATUS_OK = 0,
  LS_STATUS_NULL_POINTER = 1,
  LS_STATUS_CONFIG = 2,
  LS_STATUS_DOMAIN = 3,
  LS_STATUS_SHAPE = 4,
  LS_STATUS_PARSE = 5,
  LS_STATUS_EMPTY = 6,
  LS_STATUS_OPTIMIZER = 7,
  LS_STATUS_MISSING_ARTIFACT = 8,
  LS_STATUS_IO = 9,
  LS_STATUS_INVALID_UTF8 = 10,
  LS_STATUS_OUT_OF_RANGE = 11,
  LS_STATUS_PANIC = 99,
} LsStatus;

// Opaque triangular fundamental diagram.
typedef struct LsFd LsFd;

// Opaque density matrix with per-cell observation flags.
typedef struct LsMatrix LsMatrix;

typedef struct LsGaParams {
  size_t population_size;
  size_t generations;
  size_t k_tournament;
  // Offspring pairs per generation.
  size_t crossover_fraction;
  // Mutation probability for candidates below the population mean.
  double p_low_fitness;
  double p_high_fitness;
  size_t restarts;
} LsGaParams;

// Space-time grid: link length (m), horizon (s), cell size (m, s).
typedef struct LsGrid {
  double link_length;
  double total_time;
  double dx;
  double dt;
} LsGrid;

// Upstream, middle and downstream densities at one step, and the middle
// density one step later.
typedef struct LsQuartet {
  double k_up;
  double k_mid;
  double k_down;
  double k_next;
} LsQuartet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` (always
// NUL-terminated when `len > 0`) and returns the full message length.
size_t ls_last_error(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *ls_version(void);

// Default hyperparameters of the calibration GA.
struct LsGaParams ls_ga_params_calibration(void);

// Default hyperparameters of the boundary-estimation GA.
struct LsGaParams ls_ga_params_estimation(void);

enum LsStatus ls_fd_new(double v_f, double k_c, double k_j, struct LsFd **fd_out);

// Reads the parameters; any output pointer may be null.
enum LsStatus ls_fd_get(const struct LsFd *fd, double *v_f, double *k_c, double *k_j, double *w_c);

void ls_fd_free(struct LsFd *fd);

// Triangular-FD flow between an upstream and a downstream density.
enum LsStatus ls_flow(const struct LsFd *fd, double k_up, double k_down, double *q_out);

// New matrix with every cell unobserved.
enum LsStatus ls_matrix_new(struct LsGrid grid, struct LsMatrix **matrix_out);

void ls_matrix_free(struct LsMatrix *m);

// Number of space cells (`alpha`) and time steps (`beta`).
enum LsStatus ls_matrix_shape(const struct LsMatrix *m, size_t *alpha, size_t *beta);

// Marks cell `(i, j)` observed with density `k` (veh/m).
enum LsStatus ls_matrix_set(struct LsMatrix *m, size_t i, size_t j, double k);

enum LsStatus ls_matrix_clear(struct LsMatrix *m, size_t i, size_t j);

// Reads cell `(i, j)`; `observed_out` receives 0 or 1 and `k_out` is
// written only for observed cells.
enum LsStatus ls_matrix_get(const struct LsMatrix *m,
                            size_t i,
                            size_t j,
                            double *k_out,
                            uint8_t *observed_out);

// Runs the CTM from initial densities (`alpha` values) and per-step inflow
// and outflow boundary densities (`beta` values each).
enum LsStatus ls_ctm_run(const struct LsFd *fd,
                         struct LsGrid grid,
                         const double *init,
                         const double *inflow,
                         const double *outflow,
                         struct LsMatrix **matrix_out);

// Calibrates `v_f` and `k_c` on `n` quartets at fixed jam density.
enum LsStatus ls_calibrate_fd(const struct LsQuartet *quartets,
                              size_t n,
                              struct LsGrid grid,
                              double k_j,
                              const struct LsGaParams *params,
                              uint64_t seed,
                              struct LsFd **fd_out,
                              double *rmse_out);

// Completes a partial matrix; `completed_out` receives a fully observed
// matrix and `fitness_out` (nullable) the negative RMSE on observed cells.
enum LsStatus ls_estimate_density(const struct LsMatrix *partial,
                                  const struct LsFd *fd,
                                  const struct LsGaParams *params,
                                  uint64_t seed,
                                  struct LsMatrix **completed_out,
                                  double *fitness_out);

// RMSE between two matrices over the cells flagged non-zero in `mask`
// (`alpha * beta` bytes, row-major by space cell).
enum LsStatus ls_masked_rmse(const struct LsMatrix *truth,
                             const struct LsMatrix *estimate,
                             const uint8_t *mask,
                             double *rmse_out);

// Runs the whole pipeline. `config_path` may be null for defaults;
// a non-null `out_dir` overrides the configured output directory.
enum LsStatus ls_run_pipeline(const char *config_path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LINKSTATE_H */
