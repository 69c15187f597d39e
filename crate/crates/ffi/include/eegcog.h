#ifndef EEGCOG_H
#define EEGCOG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EegcogStatus {
  EEGCOG_STATUS_OK = 0,
  EEGCOG_STATUS_NULL_POINTER = 1,
  EEGCOG_STATUS_INVALID_ARGUMENT = 2,
  EEGCOG_STATUS_COMPUTATION = 3,
  EEGCOG_STATUS_IO = 4,
  EEGCOG_STATUS_PARSE = 5,
  EEGCOG_STATUS_CONFIG = 6,
  EEGCOG_STATUS_BUFFER_TOO_SMALL = 7,
  EEGCOG_STATUS_PANIC = 8,
} EegcogStatus;

typedef enum EegcogTestMethod {
  EEGCOG_TEST_METHOD_RANK_SUM_EXACT = 0,
  EEGCOG_TEST_METHOD_RANK_SUM_NORMAL = 1,
  EEGCOG_TEST_METHOD_KRUSKAL_WALLIS = 2,
} EegcogTestMethod;

typedef enum EegcogKernelKind {
  EEGCOG_KERNEL_KIND_LINEAR = 0,
  EEGCOG_KERNEL_KIND_RBF = 1,
  EEGCOG_KERNEL_KIND_SIGMOID = 2,
} EegcogKernelKind;

// Trained SVM. Opaque to C.
typedef struct EegcogSvm EegcogSvm;

typedef struct EegcogTestResult {
  double statistic;
  double p_value;
  enum EegcogTestMethod method;
} EegcogTestResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *eegcog_version(void);

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next failing call on this thread.
const char *eegcog_last_error(void);

// # Safety
// `s` must be null or a string returned by this library and not yet freed.
void eegcog_string_free(char *s);

// Two-sided Wilcoxon rank-sum test of `x` against `y`.
//
// # Safety
// `x` and `y` must point to `nx` and `ny` readable doubles; `out` must be writable.
enum EegcogStatus eegcog_rank_sum(const double *x,
                                  size_t nx,
                                  const double *y,
                                  size_t ny,
                                  struct EegcogTestResult *out);

// Kruskal-Wallis test. `values` holds the groups back to back; group `g`
// has `group_sizes[g]` entries.
//
// # Safety
// `group_sizes` must hold `n_groups` entries and `values` their sum; `out` must be writable.
enum EegcogStatus eegcog_kruskal_wallis(const double *values,
                                        const size_t *group_sizes,
                                        size_t n_groups,
                                        struct EegcogTestResult *out);

// Welch PSD of one channel. Writes up to `capacity` bins into `freqs` and
// `power` and the bin count into `n_bins`. When `capacity` is too small,
// only `n_bins` is written and `BufferTooSmall` is returned.
//
// # Safety
// `signal` must hold `len` doubles; `freqs` and `power` must each hold
// `capacity` doubles; `n_bins` must be writable.
enum EegcogStatus eegcog_welch(const double *signal,
                               size_t len,
                               double fs,
                               size_t window_len,
                               double overlap,
                               double *freqs,
                               double *power,
                               size_t capacity,
                               size_t *n_bins);

// Trains a binary SVM on row-major `x` (`n_rows × n_cols`) with labels ±1.
// `kernel` is an [`EegcogKernelKind`] value. `gamma` is ignored for the
// linear kernel; `coef0` is used by sigmoid only.
//
// # Safety
// `x` must hold `n_rows·n_cols` doubles, `y` `n_rows` doubles; `out` must be writable.
enum EegcogStatus eegcog_svm_train(const double *x,
                                   size_t n_rows,
                                   size_t n_cols,
                                   const double *y,
                                   uint32_t kernel,
                                   double gamma,
                                   double coef0,
                                   double c,
                                   struct EegcogSvm **out);

// Decision values `f(x)` for each row of `x`, written into `out`.
//
// # Safety
// `model` must come from [`eegcog_svm_train`]; `x` must hold
// `n_rows·n_cols` doubles and `out` `n_rows` doubles.
enum EegcogStatus eegcog_svm_decision(const struct EegcogSvm *model,
                                      const double *x,
                                      size_t n_rows,
                                      size_t n_cols,
                                      double *out);

// Number of support vectors, or 0 for a null model.
//
// # Safety
// `model` must be null or come from [`eegcog_svm_train`].
size_t eegcog_svm_n_support(const struct EegcogSvm *model);

// # Safety
// `model` must be null or come from [`eegcog_svm_train`] and not yet freed.
void eegcog_svm_free(struct EegcogSvm *model);

// Default run configuration as TOML. Free with [`eegcog_string_free`].
char *eegcog_default_config(void);

// Runs the configured pipeline on a synthetic cohort and returns the JSON
// report in `out_json`. A null `config_toml` means the default config.
//
// # Safety
// `config_toml` must be null or a NUL-terminated UTF-8 string; `out_json`
// must be writable. Free the result with [`eegcog_string_free`].
enum EegcogStatus eegcog_evaluate_synthetic(const char *config_toml, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EEGCOG_H */
