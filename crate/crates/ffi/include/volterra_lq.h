#ifndef VOLTERRA_LQ_H
#define VOLTERRA_LQ_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VlqBound {
  VLQ_BOUND_THEOREM1 = 0,
  VLQ_BOUND_SCALED = 1,
  VLQ_BOUND_Q_PENALTY = 2,
} VlqBound;

typedef enum VlqStatus {
  VLQ_STATUS_OK = 0,
  VLQ_STATUS_NULL_POINTER = 1,
  VLQ_STATUS_INVALID_ARGUMENT = 2,
  VLQ_STATUS_DATA_ERROR = 3,
  VLQ_STATUS_DIMENSION_MISMATCH = 4,
  VLQ_STATUS_DOMAIN = 5,
  VLQ_STATUS_BUFFER_TOO_SMALL = 6,
  VLQ_STATUS_INTERNAL = 7,
} VlqStatus;

/**
 * Opaque training problem.
 */
typedef struct VlqObjective VlqObjective;

/**
 * Opaque fit result.
 */
typedef struct VlqReport VlqReport;

/**
 * Opaque model structure.
 */
typedef struct VlqStructure VlqStructure;

/**
 * Solver settings; zero fields mean "library default".
 */
typedef struct VlqSolverOptions {
  double gap_tol;
  size_t max_iters;
} VlqSolverOptions;

typedef struct VlqFitSummary {
  double objective;
  double gap;
  double norm_q;
  double norm_1;
  double radius;
  double r;
  size_t iterations;
  size_t dim;
  bool converged;
} VlqFitSummary;

typedef struct VlqBoundParams {
  size_t n;
  size_t tau;
  size_t d;
  double m;
  double sigma;
  /**
   * Dictionary scale; used by `VLQ_BOUND_SCALED`.
   */
  double r;
  /**
   * Sparsity level, 0 for none; used by `VLQ_BOUND_Q_PENALTY`.
   */
  size_t k;
  /**
   * Norm order; used by `VLQ_BOUND_Q_PENALTY`.
   */
  double q;
} VlqBoundParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Length in bytes of the last error message on this thread, excluding the
 * terminating NUL; 0 when there is none.
 */
size_t vlq_last_error_length(void);

/**
 * Copies the last error message (NUL-terminated, truncated to fit) into
 * `buf` and returns its full length.
 *
 * # Safety
 * `buf` must be valid for `cap` writes, or null with `cap == 0`.
 */
size_t vlq_last_error_message(char *buf, size_t cap);

/**
 * Creates a structure of degree `degree` with one memory length per order.
 *
 * # Safety
 * `memory_lengths` must hold `degree` values; `out` must be writable.
 */
enum VlqStatus vlq_structure_new(size_t degree,
                                 const size_t *memory_lengths,
                                 bool include_constant,
                                 struct VlqStructure **out_structure);

/**
 * # Safety
 * `structure` must be null or come from [`vlq_structure_new`], freed once.
 */
void vlq_structure_free(struct VlqStructure *structure);

/**
 * Number of dictionary terms `D`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum VlqStatus vlq_structure_count_params(const struct VlqStructure *structure, size_t *out_count);

/**
 * Builds the training problem from `n` input/output samples; the first
 * `tau` samples only provide history.
 *
 * # Safety
 * `u` and `y` must hold `n` values each; pointers must be valid.
 */
enum VlqStatus vlq_objective_new(const struct VlqStructure *structure,
                                 const double *u,
                                 const double *y,
                                 size_t n,
                                 size_t tau,
                                 struct VlqObjective **out_objective);

/**
 * # Safety
 * `objective` must be null or come from [`vlq_objective_new`], freed once.
 */
void vlq_objective_free(struct VlqObjective *objective);

/**
 * Minimizes the mean squared residual over `||theta||_q <= radius`.
 * `options` may be null. Hitting the iteration cap is not an error; check
 * `converged` in the summary.
 *
 * # Safety
 * Pointers must be valid.
 */
enum VlqStatus vlq_fit(const struct VlqObjective *objective,
                       double q,
                       double radius,
                       const struct VlqSolverOptions *options,
                       struct VlqReport **out_report);

/**
 * Selects the dictionary scale `R` so that the fitted norm lands just inside
 * `D^(1/q - 1)`, and returns that fit mapped back to the unscaled
 * dictionary. `relative_epsilon <= 0` uses the default band.
 *
 * # Safety
 * Pointers must be valid.
 */
enum VlqStatus vlq_tune_fit(const struct VlqObjective *objective,
                            double q,
                            double relative_epsilon,
                            const struct VlqSolverOptions *options,
                            struct VlqReport **out_report);

/**
 * # Safety
 * `report` must be null or come from this library, freed once.
 */
void vlq_report_free(struct VlqReport *report);

/**
 * # Safety
 * Pointers must be valid.
 */
enum VlqStatus vlq_report_summary(const struct VlqReport *report,
                                  struct VlqFitSummary *out_summary);

/**
 * Copies the `D` fitted coefficients (canonical term order) into `buf`.
 *
 * # Safety
 * `buf` must be valid for `len` writes.
 */
enum VlqStatus vlq_report_coefficients(const struct VlqReport *report, double *buf, size_t len);

/**
 * Minimizer of `<g, s>` over `||s||_q <= radius`, written to `out_s`.
 *
 * # Safety
 * `g` and `out_s` must hold `dim` values.
 */
enum VlqStatus vlq_lmo(const double *g, size_t dim, double q, double radius, double *out_s);

/**
 * Euclidean projection onto `||x||_1 <= radius`.
 *
 * # Safety
 * `point` and `out_x` must hold `dim` values.
 */
enum VlqStatus vlq_project_l1(const double *point, size_t dim, double radius, double *out_x);

/**
 * # Safety
 * Pointers must be valid.
 */
enum VlqStatus vlq_bound(enum VlqBound kind,
                         const struct VlqBoundParams *params,
                         double *out_value);

/**
 * `n` samples of the WH2 system driven by uniform white noise of unit
 * variance. `snr <= 0` leaves the output noiseless.
 *
 * # Safety
 * `out_u` and `out_y` must hold `n` values.
 */
enum VlqStatus vlq_simulate_wh2(size_t n, uint64_t seed, double snr, double *out_u, double *out_y);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOLTERRA_LQ_H */
