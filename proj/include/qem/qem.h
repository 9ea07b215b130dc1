#ifndef QEM_QEM_H
#define QEM_QEM_H

/* C interface to the quasi-Einstein verification toolkit for H^n x R.
 *
 * All functions return qem_status; QEM_OK means the output parameters are
 * valid. On any other status, qem_last_error() returns a thread-local
 * message describing the failure (and qem_last_error_position() the byte
 * offset for parse errors). Objects are created through qem_*_new/parse
 * factories and released with the matching qem_*_free; strings returned
 * through char** are released with qem_string_free.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#ifdef QEM_BUILD
#define QEM_API __declspec(dllexport)
#else
#define QEM_API __declspec(dllimport)
#endif
#else
#define QEM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum qem_status {
  QEM_OK = 0,
  QEM_ERR_INVALID_ARGUMENT = 1,
  QEM_ERR_PARSE = 2,
  QEM_ERR_EVAL = 3,
  QEM_ERR_SINGULAR = 4,
  QEM_ERR_MANIFEST = 5,
  QEM_ERR_IO = 6,
  QEM_ERR_INTERNAL = 7
} qem_status;

QEM_API const char* qem_version(void);

/* Message for the most recent failing call on this thread; "" after a
 * successful call. */
QEM_API const char* qem_last_error(void);
/* Byte offset of the most recent parse error on this thread; 0 otherwise. */
QEM_API size_t qem_last_error_position(void);

QEM_API void qem_string_free(char* s);

/* --------------------------------------------------------------------- */
/* Charts and expressions                                                 */

typedef struct qem_chart qem_chart;
typedef struct qem_expr qem_expr;
typedef struct qem_structure qem_structure;

/* The chart (x_1, ..., x_n, t) on H^n x R, with x_n > 0. n >= 2. */
QEM_API qem_status qem_chart_hnr(int n, qem_chart** out);
QEM_API int qem_chart_dim(const qem_chart* chart);
QEM_API void qem_chart_free(qem_chart* chart);

/* Grammar: numbers, coordinate names, + - * / ^, parentheses, and the
 * functions exp ln sqrt sin cos tan sinh cosh tanh sech. */
QEM_API qem_status qem_expr_parse(const qem_chart* chart, const char* text, qem_expr** out);
QEM_API qem_status qem_expr_to_string(const qem_expr* e, char** out);
QEM_API qem_status qem_expr_eval(const qem_expr* e, const double* point, int dim, double* out);
/* grad: dim entries; hess_packed: dim*(dim+1)/2 upper-triangle entries in
 * row order (0,0),(0,1),...,(0,dim-1),(1,1),... */
QEM_API qem_status qem_expr_eval_jet2(const qem_expr* e, const double* point, int dim,
                                      double* value, double* grad, double* hess_packed);
QEM_API void qem_expr_free(qem_expr* e);

/* --------------------------------------------------------------------- */
/* Quasi-Einstein structures on H^n x R                                   */

/* example: 1 (f = sign*sqrt((n-1)m)*t) or 2 (f = -m ln cosh(eta t + a)),
 * both with lambda = -(n-1). Requires finite m > 0. */
QEM_API qem_status qem_structure_example(int example, int n, double m, int sign, double a,
                                         qem_structure** out);
/* Arbitrary potential text over the chart. m_inf != 0 selects the gradient
 * Ricci soliton degeneration (the (1/m) term is dropped; m is ignored). */
QEM_API qem_status qem_structure_expr(int n, const char* f_text, double m, int m_inf,
                                      double lambda, qem_structure** out);
QEM_API void qem_structure_free(qem_structure* s);

/* Points carry n+1 coordinates (x_1, ..., x_n, t) with x_n > 0. */

/* Max |(Ric + Hess f - (1/m)df x df - lambda g)(E_a, E_b)| over the
 * orthonormal frame. */
QEM_API qem_status qem_qe_residual_frame_max(const qem_structure* s, const double* point,
                                             double* out);
/* The six scalar residuals of the coordinate PDE system. */
QEM_API qem_status qem_pde_residuals(const qem_structure* s, const double* point,
                                     double out_items[6]);
/* Delta e^(-f) + lambda e^(-f); the static condition at m = 1. */
QEM_API qem_status qem_static_residual(const qem_structure* s, const double* point, double* out);
/* Fiber Einstein constant mu = (m lambda - Delta f + |grad f|^2)/(m e^(2f/m)). */
QEM_API qem_status qem_mu_fiber(const qem_structure* s, const double* point, double* out);

/* --------------------------------------------------------------------- */
/* Classification                                                         */

/* tag values: 0 example1+, 1 example1-, 2 example2, 3 not-quasi-einstein. */
typedef struct qem_classification {
  int tag;
  double a;                /* fitted shift, example2 only */
  double max_pde_residual; /* max |PDE residual| over the sample grid */
  char failed_step[32];    /* first failing step, not-quasi-einstein only */
} qem_classification;

/* Classifies s->f on the default sample grid with the given seed.
 * tol <= 0 selects the default classification tolerance 1e-7. */
QEM_API qem_status qem_classify(const qem_structure* s, uint64_t seed, double tol,
                                qem_classification* out);

/* --------------------------------------------------------------------- */
/* Reduction ODE h' = h^2/m + lambda                                      */

/* tag values: 0 constant+, 1 constant-, 2 constant0, 3 tanh, 4 coth,
 * 5 tan, 6 rational. rejected marks families with finite-time blow-up. */
typedef struct qem_ode_branch {
  int tag;
  double param;
  double t_min;
  double t_max;
  int rejected;
} qem_ode_branch;

QEM_API qem_status qem_ode_classify(double m, double lambda, double h0, qem_ode_branch* out);
QEM_API qem_status qem_ode_closed_form(const qem_ode_branch* branch, double m, double lambda,
                                       double t, double* out);
/* Fixed-step RK4 from (t0, h0) to t1 (t1 < t0 integrates backward). Writes
 * up to capacity (t, h) samples and the count actually written; stops early
 * with *blew_up = 1 when |h| escapes. ts/hs may be NULL when capacity is 0. */
QEM_API qem_status qem_ode_integrate(double m, double lambda, double h0, double t0, double t1,
                                     int steps, double* ts, double* hs, size_t capacity,
                                     size_t* count, int* blew_up, double* blowup_time);

/* --------------------------------------------------------------------- */
/* Manifest runs and tabular outputs                                      */

/* Runs every check requested by the manifest and writes report.json and
 * residuals.csv under out_dir. has_seed/has_tol select the optional
 * overrides. exit_code: 0 all checks passed, 1 some check failed.
 * report_json receives the report document. */
QEM_API qem_status qem_run_manifest(const char* manifest_path, const char* out_dir,
                                    uint64_t seed, int has_seed, double tol, int has_tol,
                                    int jobs, int* exit_code, char** report_json);

/* CSV with header m,lambda,h0,branch,param,blowup_time,max_deviation and
 * one row per (m, lambda, h0) combination. */
QEM_API qem_status qem_sweep_ode(const double* ms, size_t n_ms, const double* lambdas,
                                 size_t n_lambdas, const double* h0s, size_t n_h0s, double t0,
                                 double t1, int steps, char** csv);

/* Derives plotting CSVs (profiles, trajectory, classification evidence)
 * from a report.json produced by qem_run_manifest. files_list receives a
 * newline-separated list of the files written. */
QEM_API qem_status qem_plot_data(const char* report_path, const char* out_dir,
                                 char** files_list);

#ifdef __cplusplus
}
#endif

#endif /* QEM_QEM_H */
