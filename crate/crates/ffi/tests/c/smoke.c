#include <stdio.h>
#include <string.h>

#include "veritext.h"

#define CHECK(expr)                                                            \
  do {                                                                         \
    VtStatus s_ = (expr);                                                      \
    if (s_ != VT_STATUS_OK) {                                                  \
      const char *m_ = vt_last_error_message();                                \
      fprintf(stderr, "%s failed: %d %s\n", #expr, (int)s_, m_ ? m_ : "");     \
      return 1;                                                                \
    }                                                                          \
  } while (0)

int main(int argc, char **argv) {
  if (argc != 3) {
    fprintf(stderr, "usage: smoke DATA MODEL_OUT\n");
    return 2;
  }
  VtModel *model = NULL;
  CHECK(vt_model_train("logreg", "tfidf", argv[1], NULL, &model));
  CHECK(vt_model_save(model, argv[2]));
  vt_model_free(model);

  model = NULL;
  CHECK(vt_model_load(argv[2], &model));
  const char *texts[2] = {"miracle cure hidden by doctors",
                          "ministry reports new cases"};
  int labels[2];
  double scores[2];
  CHECK(vt_model_predict(model, texts, 2, labels, scores));
  vt_model_free(model);

  int truth[2] = {VT_LABEL_FAKE, VT_LABEL_REAL};
  VtMetrics m;
  CHECK(vt_metrics(labels, truth, 2, &m));

  char *tokens = NULL;
  CHECK(vt_preprocess("The cure is HERE", VT_PIPELINE_CLASSIC, &tokens));
  int tokens_ok = strcmp(tokens, "cure") == 0;
  vt_string_free(tokens);

  VtModel *missing = NULL;
  VtStatus st = vt_model_load("/nonexistent/model.vtm", &missing);

  printf("version %s accuracy %.3f tokens_ok %d missing %d\n", vt_version(),
         m.accuracy, tokens_ok, (int)st);
  return (m.accuracy == 1.0 && tokens_ok && st == VT_STATUS_INVALID) ? 0 : 1;
}
