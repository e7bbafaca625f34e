/*
 * Copyright 2026 The mfuse Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


/* Exercises the shared library through its C header alone. Usage:
 * test_capi WORK_DIR */

#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "mfuse/mfuse.h"

static int failures = 0;

#define CHECK(cond)                                                     \
  do {                                                                  \
    if (!(cond)) {                                                      \
      fprintf(stderr, "%s:%d: CHECK(%s) failed; last error: %s\n",      \
              __FILE__, __LINE__, #cond, mfuse_last_error());           \
      ++failures;                                                       \
    }                                                                   \
  } while (0)

static void join(char* out, size_t size, const char* dir, const char* name) {
  const int n = snprintf(out, size, "%s/%s", dir, name);
  if (n < 0 || (size_t)n >= size) {
    fprintf(stderr, "path too long: %s/%s\n", dir, name);
    exit(2);
  }
}

static void test_basics(const char* work) {
  char path[4096];
  char hex[65];
  FILE* f;

  CHECK(strcmp(mfuse_status_name(MFUSE_OK), "ok") == 0);
  CHECK(strlen(mfuse_version()) > 0);
  CHECK(strstr(mfuse_verbs(), "train") != NULL);
  CHECK(mfuse_exit_code(MFUSE_OK) == 0);
  CHECK(mfuse_exit_code(MFUSE_ERR_CONFIG) == 2);
  CHECK(mfuse_exit_code(MFUSE_ERR_IO) == 3);

  join(path, sizeof path, work, "abc.txt");
  f = fopen(path, "wb");
  CHECK(f != NULL);
  if (f) {
    fputs("abc", f);
    fclose(f);
  }
  CHECK(mfuse_sha256_file(path, hex) == MFUSE_OK);
  CHECK(strcmp(hex, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad") == 0);
  CHECK(mfuse_sha256_file("/nonexistent/mfuse", hex) == MFUSE_ERR_IO);
  CHECK(strlen(mfuse_last_error()) > 0);
}

static void test_metrics(void) {
  const double scores[] = {0.6, 0.7, 0.2};
  const int64_t labels[] = {1, 0, 0};
  const int64_t one_class[] = {1, 1, 1};
  const size_t counts[] = {112845, 36978};
  double auc = -1.0, f1 = -1.0, max_f1 = -1.0, thr = 0.0, acc = -1.0, w[2] = {0.0, 0.0};

  CHECK(mfuse_auc_roc(scores, labels, 3, &auc) == MFUSE_OK);
  CHECK(auc == 0.5);
  CHECK(mfuse_auc_roc(scores, one_class, 3, &auc) == MFUSE_ERR_PRECONDITION);
  CHECK(mfuse_auc_roc(NULL, labels, 3, &auc) == MFUSE_ERR_INVALID_ARGUMENT);
  CHECK(mfuse_f_scores(scores, labels, 3, &f1, &max_f1, &thr) == MFUSE_OK);
  CHECK(fabs(max_f1 - 2.0 / 3.0) <= 1e-15);
  CHECK(fabs(f1 - 2.0 / 3.0) <= 1e-15);
  CHECK(mfuse_balanced_accuracy(scores, labels, 3, 0.5, &acc) == MFUSE_OK);
  CHECK(acc == 75.0);
  CHECK(mfuse_class_weights(counts, 2, w) == MFUSE_OK);
  CHECK(w[1] >= 2.025 && w[1] <= 2.027);
  CHECK(w[0] >= 0.663 && w[0] <= 0.665);
}

static void test_config(const char* work) {
  mfuse_config* c = NULL;
  char path[4096];
  FILE* f;

  CHECK(mfuse_config_new(&c) == MFUSE_OK);
  CHECK(mfuse_config_set(c, "Bad Key", "1") == MFUSE_ERR_CONFIG);
  CHECK(mfuse_config_override(c, "no-equals") == MFUSE_ERR_CONFIG);
  CHECK(mfuse_config_override(c, "train.lr=1e-3") == MFUSE_OK);
  mfuse_config_free(c);
  mfuse_config_free(NULL);

  join(path, sizeof path, work, "run.cfg");
  f = fopen(path, "w");
  CHECK(f != NULL);
  if (f) {
    fputs("# settings\nsynth.n_train = 4\n", f);
    fclose(f);
  }
  c = NULL;
  CHECK(mfuse_config_load(path, &c) == MFUSE_OK);
  mfuse_config_free(c);
  CHECK(mfuse_config_load("/nonexistent/mfuse.cfg", &c) == MFUSE_ERR_IO);
  CHECK(mfuse_config_new(NULL) == MFUSE_ERR_INVALID_ARGUMENT);
}

static void test_runs(const char* work) {
  char synth_dir[4096], train_dir[4096], rerun_dir[4096], manifest[4096], image[4096];
  char a[4096], b[4096], ha[65], hb[65];
  char data_dir[4200];
  mfuse_config* c = NULL;
  mfuse_model* model = NULL;
  char* summary = NULL;
  double p = -1.0, q = -1.0;

  join(synth_dir, sizeof synth_dir, work, "synth");
  join(train_dir, sizeof train_dir, work, "train");
  join(rerun_dir, sizeof rerun_dir, work, "train_rerun");

  CHECK(mfuse_run("frobnicate", NULL, synth_dir, &summary) == MFUSE_ERR_CONFIG);
  CHECK(summary == NULL);

  CHECK(mfuse_config_new(&c) == MFUSE_OK);
  CHECK(mfuse_config_override(c, "seed=2") == MFUSE_OK);
  CHECK(mfuse_config_override(c, "synth.n_train=64") == MFUSE_OK);
  CHECK(mfuse_config_override(c, "synth.n_val=16") == MFUSE_OK);
  CHECK(mfuse_config_override(c, "synth.n_test=16") == MFUSE_OK);
  CHECK(mfuse_run("synth", c, synth_dir, &summary) == MFUSE_OK);
  CHECK(summary != NULL && strlen(summary) > 0);
  mfuse_string_free(summary);
  mfuse_config_free(c);

  CHECK(mfuse_config_new(&c) == MFUSE_OK);
  snprintf(data_dir, sizeof data_dir, "data.dir=%s", synth_dir);
  CHECK(mfuse_config_override(c, data_dir) == MFUSE_OK);
  CHECK(mfuse_config_override(c, "model.variant=tkm") == MFUSE_OK);
  CHECK(mfuse_config_override(c, "train.lr=1e-3") == MFUSE_OK);
  CHECK(mfuse_run("train", c, train_dir, &summary) == MFUSE_OK);
  mfuse_string_free(summary);
  CHECK(mfuse_config_override(c, "train.bogus=1") == MFUSE_OK);
  CHECK(mfuse_run("train", c, rerun_dir, &summary) == MFUSE_ERR_CONFIG);
  CHECK(strstr(mfuse_last_error(), "train.bogus") != NULL);
  CHECK(summary == NULL);
  mfuse_config_free(c);

  join(manifest, sizeof manifest, train_dir, "manifest.json");
  CHECK(mfuse_run_manifest(manifest, "eval", rerun_dir, &summary) == MFUSE_ERR_CONFIG);
  CHECK(mfuse_run_manifest(manifest, "train", rerun_dir, &summary) == MFUSE_OK);
  mfuse_string_free(summary);
  join(a, sizeof a, train_dir, "checkpoint.bin");
  join(b, sizeof b, rerun_dir, "checkpoint.bin");
  CHECK(mfuse_sha256_file(a, ha) == MFUSE_OK);
  CHECK(mfuse_sha256_file(b, hb) == MFUSE_OK);
  CHECK(strcmp(ha, hb) == 0);

  CHECK(mfuse_model_load(train_dir, &model) == MFUSE_OK);
  join(image, sizeof image, synth_dir, "images/test-0.ppm");
  CHECK(mfuse_model_score(model, "zorp w1 w2", "w3 w4 w5", image, NULL, &p) == MFUSE_OK);
  CHECK(p >= 0.0 && p <= 1.0);
  CHECK(mfuse_model_score(model, "zorp w1 w2", "w3 w4 w5", NULL, NULL, &p) == MFUSE_ERR_INVALID_ARGUMENT);
  CHECK(mfuse_model_score(model, "zorp w1 w2", "w3 w4 w5", NULL, "TT,IT", &p) == MFUSE_OK);
  CHECK(mfuse_model_score(model, "zorp w1 w2", "other words here", image, "TT", &q) == MFUSE_OK);
  CHECK(mfuse_model_score(model, "zorp w1 w2", "w3 w4 w5", NULL, "TT", &p) == MFUSE_OK);
  CHECK(p == q);
  CHECK(mfuse_model_score(model, "zorp", "", NULL, "", &p) == MFUSE_ERR_CONFIG);
  mfuse_model_free(model);
  CHECK(mfuse_model_load("/nonexistent/mfuse", &model) == MFUSE_ERR_IO);
}

int main(int argc, char** argv) {
  char cmd[4200];
  if (argc != 2) {
    fprintf(stderr, "usage: %s WORK_DIR\n", argv[0]);
    return 2;
  }
  snprintf(cmd, sizeof cmd, "mkdir -p '%s'", argv[1]);
  if (system(cmd) != 0) return 2;
  test_basics(argv[1]);
  test_metrics();
  test_config(argv[1]);
  test_runs(argv[1]);
  if (failures) {
    fprintf(stderr, "%d check(s) failed\n", failures);
    return 1;
  }
  printf("all C API checks passed\n");
  return 0;
}
