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

/* C interface to libmfuse. Every function that can fail returns a status;
 * on failure mfuse_last_error() describes the problem (per thread, valid
 * until the next failing call on that thread). Handles are opaque and owned
 * by the caller once created. Strings returned through char** are
 * heap-allocated; release them with mfuse_string_free(). */

#ifndef MFUSE_MFUSE_H_
#define MFUSE_MFUSE_H_

#include <stddef.h>
#include <stdint.h>

#if defined(MFUSE_BUILDING_LIBRARY)
#define MFUSE_API __attribute__((visibility("default")))
#else
#define MFUSE_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mfuse_status {
  MFUSE_OK = 0,
  MFUSE_ERR_INVALID_ARGUMENT = 1,
  MFUSE_ERR_CONFIG = 2,
  MFUSE_ERR_IO = 3,
  MFUSE_ERR_DATA = 4,
  MFUSE_ERR_PRECONDITION = 5,
  MFUSE_ERR_NUMERIC = 6,
  MFUSE_ERR_STATE = 7,
  MFUSE_ERR_INTERNAL = 8
} mfuse_status;

MFUSE_API const char* mfuse_version(void);
MFUSE_API const char* mfuse_status_name(mfuse_status status);
MFUSE_API const char* mfuse_last_error(void);
/* Process exit status for a run outcome: 0 ok, 2 config or invalid
 * argument, 3 io, 4 data, 5 precondition, 6 numeric, 1 otherwise. */
MFUSE_API int mfuse_exit_code(mfuse_status status);
MFUSE_API void mfuse_string_free(char* s);

/* Space-separated verb names accepted by mfuse_run. */
MFUSE_API const char* mfuse_verbs(void);

/* ---- configuration ---------------------------------------------------- */

typedef struct mfuse_config mfuse_config;

MFUSE_API mfuse_status mfuse_config_new(mfuse_config** out);
MFUSE_API mfuse_status mfuse_config_load(const char* path, mfuse_config** out);
MFUSE_API mfuse_status mfuse_config_set(mfuse_config* config, const char* key, const char* value);
/* "key=value"; later assignments win. */
MFUSE_API mfuse_status mfuse_config_override(mfuse_config* config, const char* assignment);
MFUSE_API void mfuse_config_free(mfuse_config* config);

/* ---- pipeline --------------------------------------------------------- */

/* Runs a verb with its outputs (and manifest.json) in out_dir. On success a
 * non-null summary receives a human-readable report; on failure it is set
 * to NULL and the manifest records status "failed". */
MFUSE_API mfuse_status mfuse_run(const char* verb, const mfuse_config* config,
                                 const char* out_dir, char** summary);
/* Re-runs the verb and resolved config recorded in a manifest. A non-null
 * expected_verb must match the recorded verb (MFUSE_ERR_CONFIG otherwise). */
MFUSE_API mfuse_status mfuse_run_manifest(const char* manifest_path, const char* expected_verb,
                                          const char* out_dir, char** summary);

/* out_hex receives 64 hex digits and a terminating NUL. */
MFUSE_API mfuse_status mfuse_sha256_file(const char* path, char out_hex[65]);

/* ---- metrics ---------------------------------------------------------- */
/* scores: hate probabilities; labels: 1 hate, 0 not hate. */

MFUSE_API mfuse_status mfuse_auc_roc(const double* scores, const int64_t* labels, size_t n,
                                     double* out);
MFUSE_API mfuse_status mfuse_f_scores(const double* scores, const int64_t* labels, size_t n,
                                      double* f1_at_half, double* max_f1, double* best_threshold);
/* Percent. */
MFUSE_API mfuse_status mfuse_balanced_accuracy(const double* scores, const int64_t* labels,
                                               size_t n, double threshold, double* out);
/* w_c = N / (C * count_c). */
MFUSE_API mfuse_status mfuse_class_weights(const size_t* counts, size_t n, double* out);

/* ---- trained models --------------------------------------------------- */

typedef struct mfuse_model mfuse_model;

/* Loads checkpoint.bin, model.cfg and vocab.txt from a train output dir. */
MFUSE_API mfuse_status mfuse_model_load(const char* train_dir, mfuse_model** out);
/* Hate probability for one publication. image_ppm_path may be NULL when the
 * mask excludes the image; mask (e.g. "TT,IT") NULL means the training
 * mask. */
MFUSE_API mfuse_status mfuse_model_score(mfuse_model* model, const char* tweet_text,
                                         const char* image_text, const char* image_ppm_path,
                                         const char* mask, double* out);
MFUSE_API void mfuse_model_free(mfuse_model* model);

#ifdef __cplusplus
}
#endif

#endif /* MFUSE_MFUSE_H_ */
