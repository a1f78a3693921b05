#ifndef VERITEXT_H
#define VERITEXT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define VT_LABEL_REAL 0

#define VT_LABEL_FAKE 1

#define VT_PIPELINE_RAW 0

#define VT_PIPELINE_CLASSIC 1

// Status codes. Values 2 through 5 match the command-line exit codes.
typedef enum VtStatus {
  VT_STATUS_OK = 0,
  VT_STATUS_INVALID = 2,
  VT_STATUS_INVALID_PAIR = 3,
  VT_STATUS_TRAINING = 4,
  VT_STATUS_VERSION_MISMATCH = 5,
  VT_STATUS_NULL_ARGUMENT = 10,
  VT_STATUS_INVALID_UTF8 = 11,
  VT_STATUS_PANIC = 12,
} VtStatus;

// A trained classifier together with the configuration it was fitted with.
typedef struct VtModel VtModel;

typedef struct VtMetrics {
  double accuracy;
  double precision;
  double recall;
  double f1_positive;
  double f1_negative;
  double f1_weighted;
  uint64_t tp;
  uint64_t fp;
  uint64_t fn_;
  uint64_t tn;
} VtMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *vt_version(void);

// Message for the last failed call on this thread, or null. The pointer is
// valid until the next call into this library from the same thread.
const char *vt_last_error_message(void);

// Read a model file written by `veritext train` or `vt_model_save`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum VtStatus vt_model_load(const char *path, struct VtModel **out);

// Fit a classifier on a labeled CSV or TSV file. `model` and `features`
// take the command-line names ("svm", "tfidf", ...). `config_path` may be
// null for the default hyperparameters.
//
// # Safety
// String arguments must be NUL-terminated and `out` a valid pointer.
enum VtStatus vt_model_train(const char *model,
                             const char *features,
                             const char *data_path,
                             const char *config_path,
                             struct VtModel **out);

// Write the model to `path` in the artifact format.
//
// # Safety
// `model` must come from this library and `path` be NUL-terminated.
enum VtStatus vt_model_save(const struct VtModel *model, const char *path);

// Label `n` posts. Writes `VT_LABEL_FAKE` or `VT_LABEL_REAL` to
// `out_labels[i]` and, when `out_scores` is not null, the model's score to
// `out_scores[i]`. Naive Bayes and the tree ensembles report a FAKE
// probability; the linear models and the encoder report a signed margin.
// Larger always means more likely FAKE.
//
// # Safety
// `texts` must hold `n` NUL-terminated strings; the output arrays must
// have room for `n` values.
enum VtStatus vt_model_predict(const struct VtModel *model,
                               const char *const *texts,
                               size_t n,
                               int *out_labels,
                               double *out_scores);

// Release a model. Null is ignored.
//
// # Safety
// `model` must come from this library and not be used afterwards.
void vt_model_free(struct VtModel *model);

// Tokenize `text` with `VT_PIPELINE_RAW` or `VT_PIPELINE_CLASSIC` and write
// the tokens joined by single spaces. Free the result with `vt_string_free`.
//
// # Safety
// `text` must be NUL-terminated and `out` a valid pointer.
enum VtStatus vt_preprocess(const char *text, int pipeline, char **out);

// # Safety
// `s` must come from `vt_preprocess` or be null.
void vt_string_free(char *s);

// Confusion-matrix metrics with FAKE as the positive class. `n` must be
// at least 1.
//
// # Safety
// `predicted` and `truth` must hold `n` label codes; `out` must be valid.
enum VtStatus vt_metrics(const int *predicted, const int *truth, size_t n, struct VtMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VERITEXT_H */
