/* C interface of the fgam library.
 *
 * Objects are opaque handles created by fgam_*_create/_load/_run functions and
 * released with the matching _free function (free functions accept NULL).
 * Every fallible call returns an fgam_status; on failure a description is
 * available from fgam_last_error() on the same thread. Matrices are passed
 * row-major. Strings returned through char** are owned by the caller and
 * released with fgam_string_free().
 */
#ifndef FGAM_FGAM_H
#define FGAM_FGAM_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(FGAM_BUILDING_LIBRARY)
#    define FGAM_API __declspec(dllexport)
#  else
#    define FGAM_API __declspec(dllimport)
#  endif
#else
#  define FGAM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fgam_status {
  FGAM_OK = 0,
  FGAM_ERR_PARAMETER = 1,   /* invalid argument value */
  FGAM_ERR_SHAPE = 2,       /* mismatched dimensions */
  FGAM_ERR_DOMAIN = 3,      /* evaluation point outside a basis domain */
  FGAM_ERR_DATA = 4,        /* malformed input data or files */
  FGAM_ERR_NUMERICAL = 5,   /* singular or ill-conditioned system */
  FGAM_ERR_CONVERGENCE = 6, /* optimizer did not converge */
  FGAM_ERR_DEGENERATE = 7,  /* tested effect not identifiable */
  FGAM_ERR_CONFIG = 8,      /* invalid study configuration */
  FGAM_ERR_IO = 9,          /* file could not be read or written */
  FGAM_ERR_CAPACITY = 10,   /* design too large */
  FGAM_ERR_INTERNAL = 11
} fgam_status;

typedef enum fgam_model { FGAM_MODEL_FGAMM = 0, FGAM_MODEL_FLM = 1, FGAM_MODEL_GCV = 2 } fgam_model;

typedef enum fgam_quadrature { FGAM_QUAD_TRAPEZOID = 0, FGAM_QUAD_MIDPOINT = 1 } fgam_quadrature;

typedef enum fgam_test_method {
  FGAM_TEST_EQUALVC = 0,
  FGAM_TEST_BONFERRONI = 1,
  FGAM_TEST_BOOTSTRAP = 2,
  FGAM_TEST_NO_EFFECT = 3,
  FGAM_TEST_LINEAR_IN_T = 4,
  FGAM_TEST_KNOWNSIG1 = 5
} fgam_test_method;

/* Random-effect block(s) whose variance the simulated null refers to. */
typedef enum fgam_null_block {
  FGAM_NULL_SIGMA23 = 0, /* merged Z2, Z3 (EqualVC) */
  FGAM_NULL_SIGMA1 = 1,  /* Z1 (linear-in-t) */
  FGAM_NULL_SIGMA2 = 2,
  FGAM_NULL_SIGMA3 = 3
} fgam_null_block;

typedef struct fgam_dataset fgam_dataset;
typedef struct fgam_fit fgam_fit;
typedef struct fgam_test_result fgam_test_result;
typedef struct fgam_null_sample fgam_null_sample;
typedef struct fgam_study fgam_study;

typedef struct fgam_test_options {
  int kx;
  int kt;
  fgam_quadrature quadrature;
  int nsim; /* 0 = method default */
  uint64_t seed;
  double alpha;
  int threads; /* 0 = all hardware threads */
  int bonferroni_separate_fits;
} fgam_test_options;

typedef void (*fgam_progress_fn)(int done, int total, void* user);

FGAM_API const char* fgam_version(void);
FGAM_API const char* fgam_status_name(fgam_status status);
/* Message of the last failed call on this thread ("" if none). */
FGAM_API const char* fgam_last_error(void);
FGAM_API void fgam_string_free(char* s);

/* ---- datasets ---- */

/* y may be NULL (prediction-only data). x is n*j row-major, t has j entries. */
FGAM_API fgam_status fgam_dataset_create(int n, int j, const double* y, const double* x, const double* t,
                                         fgam_dataset** out);
/* y_path may be NULL or "". */
FGAM_API fgam_status fgam_dataset_load_csv(const char* y_path, const char* x_path, const char* t_path,
                                           int header, fgam_dataset** out);
FGAM_API fgam_status fgam_dataset_write_csv(const fgam_dataset* d, const char* y_path, const char* x_path,
                                            const char* t_path);
FGAM_API void fgam_dataset_free(fgam_dataset* d);
FGAM_API int fgam_dataset_n(const fgam_dataset* d);
FGAM_API int fgam_dataset_j(const fgam_dataset* d);
FGAM_API int fgam_dataset_has_response(const fgam_dataset* d);
/* Copies into caller buffers of length n, n*j and j. */
FGAM_API fgam_status fgam_dataset_get(const fgam_dataset* d, double* y, double* x, double* t);

/* Convex-combination data: integral of phi F1 + (1 - phi) F2 plus N(0,1) noise. */
FGAM_API fgam_status fgam_generate_convex(int n, int j, double phi, uint64_t seed, fgam_dataset** out);
/* Mixed-model data on the (kx, kt) design. b1_out (kt - 2 entries) may be NULL. */
FGAM_API fgam_status fgam_generate_mixed(int n, int j, double sigma2_2, double sigma2_3, int kx, int kt,
                                         fgam_quadrature quadrature, uint64_t seed, fgam_dataset** out,
                                         double* b1_out);

/* ---- fits ---- */

/* kx is ignored for FGAM_MODEL_FLM. */
FGAM_API fgam_status fgam_fit_model(const fgam_dataset* d, fgam_model model, int kx, int kt,
                                    fgam_quadrature quadrature, fgam_fit** out);
FGAM_API void fgam_fit_free(fgam_fit* f);
FGAM_API int fgam_fit_n(const fgam_fit* f);
FGAM_API fgam_status fgam_fit_fitted(const fgam_fit* f, double* out);
/* JSON summary with every coefficient; see fgam_fitted_from_summary. */
FGAM_API fgam_status fgam_fit_summary_json(const fgam_fit* f, char** out);
/* Predicted means for n new curves on grid t (j points); clamped may be NULL. */
FGAM_API fgam_status fgam_fit_predict(const fgam_fit* f, int n, int j, const double* x, const double* t,
                                      double* out, int* clamped);
/* Surface on an nx-by-nt grid over the training ranges. x_out (nx), t_out (nt)
 * and each component buffer (nx*nt, row-major by x) may be NULL. */
FGAM_API fgam_status fgam_fit_surface(const fgam_fit* f, int nx, int nt, double* x_out, double* t_out,
                                      double* parametric, double* x_linear, double* x_smooth,
                                      double* nonparametric, double* total);
/* Recomputes fitted values (n entries) from a JSON summary and a dataset. */
FGAM_API fgam_status fgam_fitted_from_summary(const char* summary_json, const fgam_dataset* d, double* out);

/* ---- tests ---- */

FGAM_API void fgam_test_options_init(fgam_test_options* opt);
FGAM_API fgam_status fgam_test_method_from_name(const char* name, fgam_test_method* out);
FGAM_API const char* fgam_test_method_name(fgam_test_method m);
/* true_b1 (b1_len entries) is required for FGAM_TEST_KNOWNSIG1 only. */
FGAM_API fgam_status fgam_test_run(const fgam_dataset* d, fgam_test_method method, const fgam_test_options* opt,
                                   const double* true_b1, int b1_len, fgam_test_result** out);
FGAM_API void fgam_test_result_free(fgam_test_result* r);
FGAM_API double fgam_test_result_statistic(const fgam_test_result* r);
FGAM_API double fgam_test_result_p_value(const fgam_test_result* r);
FGAM_API int fgam_test_result_reject(const fgam_test_result* r);
FGAM_API fgam_status fgam_test_result_json(const fgam_test_result* r, char** out);

/* ---- simulated null distributions ---- */

/* Spectral draws of the RLRT null for one block of the (kx, kt) design. */
FGAM_API fgam_status fgam_null_simulate(const fgam_dataset* d, int kx, int kt, fgam_quadrature quadrature,
                                        fgam_null_block block, int nsim, uint64_t seed, int threads,
                                        fgam_null_sample** out);
FGAM_API void fgam_null_sample_free(fgam_null_sample* s);
FGAM_API int fgam_null_sample_size(const fgam_null_sample* s);
/* Copies the draws (size entries, ascending). */
FGAM_API fgam_status fgam_null_sample_values(const fgam_null_sample* s, double* out);
FGAM_API double fgam_null_sample_zero_fraction(const fgam_null_sample* s);
FGAM_API fgam_status fgam_null_sample_quantile(const fgam_null_sample* s, double p, double* out);
/* Size, zero fraction and upper quantiles as JSON. */
FGAM_API fgam_status fgam_null_sample_json(const fgam_null_sample* s, char** out);

/* ---- rejection-rate studies ---- */

/* TOML, or JSON when the path ends in ".json". Every violation is listed in
 * fgam_last_error(). */
FGAM_API fgam_status fgam_study_load(const char* path, fgam_study** out);
FGAM_API fgam_status fgam_study_parse(const char* text, int is_json, fgam_study** out);
FGAM_API void fgam_study_free(fgam_study* s);
/* Overrides; values < 0 leave the configured value untouched. */
FGAM_API fgam_status fgam_study_override(fgam_study* s, int reps, int threads, int64_t seed);
FGAM_API fgam_status fgam_study_config_json(const fgam_study* s, char** out);
FGAM_API fgam_status fgam_study_run(fgam_study* s, fgam_progress_fn progress, void* user);
/* Available after a successful run. */
FGAM_API fgam_status fgam_study_table_csv(const fgam_study* s, char** out);
FGAM_API fgam_status fgam_study_table_json(const fgam_study* s, char** out);

#ifdef __cplusplus
}
#endif

#endif /* FGAM_FGAM_H */
