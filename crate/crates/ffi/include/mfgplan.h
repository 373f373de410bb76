#ifndef MFGPLAN_H
#define MFGPLAN_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result codes. `MFG_STATUS_OK` is zero; every failure is negative.
 */
typedef enum MfgStatus {
  MFG_STATUS_OK = 0,
  MFG_STATUS_NULL_POINTER = -1,
  MFG_STATUS_INVALID_ARGUMENT = -2,
  /**
   * Input outside the domain where a bound or schedule exists.
   */
  MFG_STATUS_DOMAIN = -3,
  /**
   * Malformed or mismatched field file.
   */
  MFG_STATUS_FORMAT = -4,
  MFG_STATUS_CONFIG = -5,
  MFG_STATUS_IO = -6,
  /**
   * The requested quantity was not produced (e.g. no value function near vacuum).
   */
  MFG_STATUS_UNAVAILABLE = -7,
  /**
   * Output buffer shorter than the data.
   */
  MFG_STATUS_BUFFER_TOO_SMALL = -8,
  /**
   * A string argument is not valid UTF-8.
   */
  MFG_STATUS_UTF8 = -9,
  /**
   * A Rust panic was caught at the boundary.
   */
  MFG_STATUS_PANIC = -10,
} MfgStatus;

/**
 * A field read from a file.
 */
typedef struct MfgField MfgField;

/**
 * A planning problem together with its solver settings.
 */
typedef struct MfgProblem MfgProblem;

/**
 * Solver output: `m`, `w`, optional `u` and the report.
 */
typedef struct MfgSolution MfgSolution;

/**
 * Grid dimensions as seen from C.
 */
typedef struct MfgGridInfo {
  size_t dim;
  size_t nx;
  /**
   * 1 in one dimension.
   */
  size_t ny;
  size_t nt;
  double horizon;
  /**
   * `nx * ny`.
   */
  size_t cells;
} MfgGridInfo;

/**
 * Scalar summary of a solve.
 */
typedef struct MfgSolveSummary {
  size_t iterations;
  bool converged;
  double final_residual;
  double final_energy;
  double continuity_residual;
  double max_mass_error;
  double min_density;
  /**
   * Whether `u` was recovered.
   */
  bool has_value;
} MfgSolveSummary;

/**
 * Shape of a field: grid, number of components and rows per component.
 */
typedef struct MfgFieldInfo {
  struct MfgGridInfo grid;
  size_t components;
  /**
   * `nt + 1` for slice fields, `nt` for interval fields.
   */
  size_t rows;
  /**
   * Total values, `components * rows * cells`.
   */
  size_t len;
} MfgFieldInfo;

/**
 * Inputs of the inverse-density recurrence with a constant Poincare constant.
 */
typedef struct MfgMoserInput {
  double alpha;
  double r;
  double c;
  double c_ell;
  /**
   * Starting value `M_{q_{N0}}`.
   */
  double m_start;
  double m_r;
  size_t horizon;
  /**
   * Run the degenerate self-test recurrence instead of the full one.
   */
  bool degenerate;
} MfgMoserInput;

typedef struct MfgMoserResult {
  size_t n0;
  size_t big_n0;
  double rho;
  double log_cap;
  /**
   * `M_{q_n}^{1/q_n}` at the last index.
   */
  double final_normalized;
  bool below_cap;
  bool converged;
  bool pass;
} MfgMoserResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the next call on
 * this thread.
 */
const char *mfg_last_error(void);

/**
 * Static name of a status code.
 */
const char *mfg_status_name(enum MfgStatus status);

/**
 * Library version string.
 */
const char *mfg_version(void);

/**
 * Builds a built-in scenario (`trivial`, `bump`, `small-cosine-potential`, `manufactured`).
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MfgStatus mfg_problem_from_scenario(const char *name, struct MfgProblem **out);

/**
 * Loads a TOML run configuration; relative paths inside resolve against its directory.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MfgStatus mfg_problem_from_config(const char *path, struct MfgProblem **out);

/**
 * Parses a TOML run configuration from memory; relative paths resolve against the
 * working directory.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MfgStatus mfg_problem_from_toml(const char *text, struct MfgProblem **out);

/**
 * # Safety
 * `problem` must come from a `mfg_problem_*` constructor or be null.
 */
void mfg_problem_free(struct MfgProblem *problem);

/**
 * # Safety
 * `problem` and `out` must be valid pointers.
 */
enum MfgStatus mfg_problem_grid(const struct MfgProblem *problem, struct MfgGridInfo *out);

/**
 * Overrides the iteration cap and stopping tolerance. Zero keeps the current value.
 *
 * # Safety
 * `problem` must be a valid handle.
 */
enum MfgStatus mfg_problem_set_solver(struct MfgProblem *problem,
                                      size_t max_iters,
                                      double tolerance);

/**
 * Runs the planning solver.
 *
 * # Safety
 * `problem` must be a valid handle and `out` a valid pointer.
 */
enum MfgStatus mfg_solve(const struct MfgProblem *problem, struct MfgSolution **out);

/**
 * # Safety
 * `solution` must come from [`mfg_solve`] or be null.
 */
void mfg_solution_free(struct MfgSolution *solution);

/**
 * # Safety
 * `solution` and `out` must be valid pointers.
 */
enum MfgStatus mfg_solution_summary(const struct MfgSolution *solution,
                                    struct MfgSolveSummary *out);

/**
 * Copies `m`, `(nt + 1) * cells` values in row-major `(t, cell)` order.
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum MfgStatus mfg_solution_density(const struct MfgSolution *solution, double *buf, size_t len);

/**
 * Copies `u` like [`mfg_solution_density`]; `MFG_STATUS_UNAVAILABLE` when it was not recovered.
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum MfgStatus mfg_solution_value(const struct MfgSolution *solution, double *buf, size_t len);

/**
 * Writes `m.bin`, `w.bin` and, when present, `u.bin` into `dir`.
 *
 * # Safety
 * `solution` must be a valid handle and `dir` a NUL-terminated string.
 */
enum MfgStatus mfg_solution_write(const struct MfgSolution *solution, const char *dir);

/**
 * Reads a field file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MfgStatus mfg_field_read(const char *path, struct MfgField **out);

/**
 * # Safety
 * `field` must come from [`mfg_field_read`] or be null.
 */
void mfg_field_free(struct MfgField *field);

/**
 * # Safety
 * `field` and `out` must be valid pointers.
 */
enum MfgStatus mfg_field_info(const struct MfgField *field, struct MfgFieldInfo *out);

/**
 * Copies the field name into `buf` (NUL-terminated).
 *
 * # Safety
 * `buf` must hold `len` bytes.
 */
enum MfgStatus mfg_field_name(const struct MfgField *field, char *buf, size_t len);

/**
 * Copies the values in `(component, t, cell)` order.
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum MfgStatus mfg_field_values(const struct MfgField *field, double *buf, size_t len);

/**
 * `(a; q)_inf` to relative tolerance `tol`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum MfgStatus mfg_q_pochhammer(double a, double q, double tol, double *out);

/**
 * Endpoint bound `max_t f(t)` for `f'' + c f >= 0` with `f(0) = a`, `f(T) = b`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum MfgStatus mfg_lemma_bound(double a, double b, double c, double horizon, double *out);

/**
 * Runs the inverse-density certificate. A failed certificate is still `MFG_STATUS_OK`;
 * inspect `pass`.
 *
 * # Safety
 * `input` and `out` must be valid pointers.
 */
enum MfgStatus mfg_certify_moser(const struct MfgMoserInput *input, struct MfgMoserResult *out);

/**
 * Runs the command-line tool with `argv[0..argc]` and returns its exit code
 * (0 ok, 1 error, 2 certificate failure). Null or non-UTF-8 arguments give 1.
 *
 * # Safety
 * `argv` must point to `argc` NUL-terminated strings.
 */
int mfg_run_cli(int argc, const char *const *argv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MFGPLAN_H */
