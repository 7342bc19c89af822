#ifndef REFMI_H
#define REFMI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RefmiStatus {
  REFMI_STATUS_OK = 0,
  REFMI_STATUS_NULL_POINTER = 1,
  REFMI_STATUS_INVALID_ARGUMENT = 2,
  REFMI_STATUS_IO = 3,
  // Malformed or inconsistent trial data.
  REFMI_STATUS_DATA = 4,
  // Fitting or linear algebra failed.
  REFMI_STATUS_NUMERIC = 5,
  REFMI_STATUS_CONFIG = 6,
  // A simulation had too many failing replications.
  REFMI_STATUS_SIMULATION = 7,
  REFMI_STATUS_PANIC = 8,
} RefmiStatus;

typedef enum RefmiStrategy {
  REFMI_STRATEGY_MAR = 0,
  REFMI_STRATEGY_J2R = 1,
} RefmiStrategy;

typedef enum RefmiAnalysis {
  REFMI_ANALYSIS_DIFF_MEANS = 0,
  REFMI_ANALYSIS_ANCOVA = 1,
} RefmiAnalysis;

// A validated trial dataset.
typedef struct RefmiDataset RefmiDataset;

// Completed copies of a dataset.
typedef struct RefmiImputations RefmiImputations;

// Rubin's-rules result.
typedef struct RefmiPooled {
  double estimate;
  double se;
  double df;
  double ci_lower;
  double ci_upper;
  double within;
  double between;
  double total;
  size_t imputations;
} RefmiPooled;

// Bootstrap-then-impute result.
typedef struct RefmiBootMi {
  double estimate;
  double variance;
  double df;
  double ci_lower;
  double ci_upper;
  double sigma2_between;
  double sigma2_within;
  size_t bootstraps;
  size_t imputations;
} RefmiBootMi;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *refmi_last_error(void);

// Library version as a static NUL-terminated string.
const char *refmi_version(void);

// Loads a trial CSV (`id,arm,y0,...,yJ`).
//
// # Safety
// `path` must be a valid NUL-terminated string and `out` a valid pointer.
enum RefmiStatus refmi_dataset_load_csv(const char *path, struct RefmiDataset **out);

// Parses a trial CSV held in memory.
//
// # Safety
// `text` must be a valid NUL-terminated string and `out` a valid pointer.
enum RefmiStatus refmi_dataset_parse_csv(const char *text, struct RefmiDataset **out);

// Number of patients, or 0 for a null handle.
//
// # Safety
// `data` must be null or a live handle.
size_t refmi_dataset_len(const struct RefmiDataset *data);

// Index `J` of the final visit, or 0 for a null handle.
//
// # Safety
// `data` must be null or a live handle.
size_t refmi_dataset_last_visit(const struct RefmiDataset *data);

// # Safety
// `data` must be null or a handle not yet freed.
void refmi_dataset_free(struct RefmiDataset *data);

// Draws `m` completed copies of `data`. `proper` draws fresh parameters
// for every imputation; otherwise all condition on the MLE.
//
// # Safety
// `data` must be a live handle and `out` a valid pointer.
enum RefmiStatus refmi_impute(const struct RefmiDataset *data,
                              enum RefmiStrategy strategy,
                              size_t m,
                              bool proper,
                              uint64_t seed,
                              struct RefmiImputations **out);

// # Safety
// `imps` must be null or a live handle.
size_t refmi_imputations_count(const struct RefmiImputations *imps);

// Writes completed dataset `index` (0-based) as CSV.
//
// # Safety
// `imps` must be a live handle and `path` a valid NUL-terminated string.
enum RefmiStatus refmi_imputations_write_csv(const struct RefmiImputations *imps,
                                             size_t index,
                                             const char *path);

// # Safety
// `imps` must be null or a handle not yet freed.
void refmi_imputations_free(struct RefmiImputations *imps);

// Analyzes every completed dataset and pools with Rubin's rules.
//
// # Safety
// `imps` must be a live handle and `out` a valid pointer.
enum RefmiStatus refmi_pool_rubin(const struct RefmiImputations *imps,
                                  enum RefmiAnalysis method,
                                  double alpha,
                                  struct RefmiPooled *out);

// Bootstrap-then-impute with `b` resamples and `m` imputations each.
//
// # Safety
// `data` must be a live handle and `out` a valid pointer.
enum RefmiStatus refmi_bootstrap(const struct RefmiDataset *data,
                                 enum RefmiStrategy strategy,
                                 enum RefmiAnalysis method,
                                 size_t b,
                                 size_t m,
                                 uint64_t seed,
                                 double alpha,
                                 struct RefmiBootMi *out);

// Runs a scenario given as JSON and returns the report as JSON without
// timing, so identical configs give identical strings. Free the result
// with [`refmi_string_free`].
//
// # Safety
// `config_json` must be a valid NUL-terminated string and `out` a valid pointer.
enum RefmiStatus refmi_simulate_json(const char *config_json, char **out);

// # Safety
// `s` must be null or a string returned by this library and not yet freed.
void refmi_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REFMI_H */
