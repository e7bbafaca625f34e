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

#include "mfuse/mfuse.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include "mfuse/config.hpp"
#include "mfuse/evaluation.hpp"
#include "mfuse/image.hpp"
#include "mfuse/pipeline.hpp"
#include "mfuse/text.hpp"
#include "mfuse/training.hpp"

struct mfuse_config {
  mfuse::Config config;
};

struct mfuse_model {
  mfuse::FusionModel model;
  mfuse::ParameterStore params;
  mfuse::Vocabulary vocab;
  mfuse::InputMask mask;
};

namespace {

thread_local std::string g_last_error;

mfuse_status to_status(mfuse::ErrorKind kind) {
  switch (kind) {
    case mfuse::ErrorKind::kInvalidArgument: return MFUSE_ERR_INVALID_ARGUMENT;
    case mfuse::ErrorKind::kConfig: return MFUSE_ERR_CONFIG;
    case mfuse::ErrorKind::kIo: return MFUSE_ERR_IO;
    case mfuse::ErrorKind::kData: return MFUSE_ERR_DATA;
    case mfuse::ErrorKind::kPrecondition: return MFUSE_ERR_PRECONDITION;
    case mfuse::ErrorKind::kNumeric: return MFUSE_ERR_NUMERIC;
    case mfuse::ErrorKind::kState: return MFUSE_ERR_STATE;
  }
  return MFUSE_ERR_INTERNAL;
}

mfuse_status fail_with(mfuse_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

// Runs `fn`, translating exceptions into a status and the thread's last error.
template <typename Fn>
mfuse_status guarded(Fn&& fn) {
  try {
    fn();
    return MFUSE_OK;
  } catch (const mfuse::Error& e) {
    return fail_with(to_status(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail_with(MFUSE_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail_with(MFUSE_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail_with(MFUSE_ERR_INTERNAL, "unknown error");
  }
}

void require(bool ok, const char* what) {
  if (!ok) mfuse::fail(mfuse::ErrorKind::kInvalidArgument, what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<mfuse::ScoredExample> scored(const double* scores, const int64_t* labels, size_t n) {
  require(n == 0 || (scores && labels), "scores and labels must be non-null");
  std::vector<mfuse::ScoredExample> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = {std::to_string(i), scores[i], labels[i]};
  return out;
}

mfuse_status run_request(mfuse::RunRequest request, char** summary) {
  if (summary) *summary = nullptr;
  return guarded([&] {
    const mfuse::RunResult r = mfuse::run(std::move(request));
    if (summary) *summary = dup_string(r.summary);
  });
}

}  // namespace

extern "C" {

const char* mfuse_version(void) { return "0.1.0"; }

const char* mfuse_status_name(mfuse_status status) {
  switch (status) {
    case MFUSE_OK: return "ok";
    case MFUSE_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case MFUSE_ERR_CONFIG: return "config";
    case MFUSE_ERR_IO: return "io";
    case MFUSE_ERR_DATA: return "data";
    case MFUSE_ERR_PRECONDITION: return "precondition";
    case MFUSE_ERR_NUMERIC: return "numeric";
    case MFUSE_ERR_STATE: return "state";
    case MFUSE_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* mfuse_last_error(void) { return g_last_error.c_str(); }

int mfuse_exit_code(mfuse_status status) {
  switch (status) {
    case MFUSE_OK: return 0;
    case MFUSE_ERR_CONFIG:
    case MFUSE_ERR_INVALID_ARGUMENT: return 2;
    case MFUSE_ERR_IO: return 3;
    case MFUSE_ERR_DATA: return 4;
    case MFUSE_ERR_PRECONDITION: return 5;
    case MFUSE_ERR_NUMERIC: return 6;
    default: return 1;
  }
}

void mfuse_string_free(char* s) { std::free(s); }

const char* mfuse_verbs(void) { return "prepare synth train eval ablate gradcheck report"; }

mfuse_status mfuse_config_new(mfuse_config** out) {
  return guarded([&] {
    require(out, "out must be non-null");
    *out = new mfuse_config();
  });
}

mfuse_status mfuse_config_load(const char* path, mfuse_config** out) {
  return guarded([&] {
    require(path && out, "path and out must be non-null");
    *out = nullptr;
    auto c = std::make_unique<mfuse_config>();
    c->config = mfuse::Config::load(path);
    *out = c.release();
  });
}

mfuse_status mfuse_config_set(mfuse_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config && key && value, "config, key and value must be non-null");
    config->config.set(key, value);
  });
}

mfuse_status mfuse_config_override(mfuse_config* config, const char* assignment) {
  return guarded([&] {
    require(config && assignment, "config and assignment must be non-null");
    config->config.apply_override(assignment);
  });
}

void mfuse_config_free(mfuse_config* config) { delete config; }

mfuse_status mfuse_run(const char* verb, const mfuse_config* config, const char* out_dir,
                       char** summary) {
  if (summary) *summary = nullptr;
  if (!verb || !out_dir) return fail_with(MFUSE_ERR_INVALID_ARGUMENT, "verb and out_dir must be non-null");
  const auto v = mfuse::parse_verb(verb);
  if (!v) {
    return fail_with(MFUSE_ERR_CONFIG, std::string("unknown verb '") + verb + "'; expected one of: " +
                                           mfuse_verbs());
  }
  mfuse::RunRequest request;
  request.verb = *v;
  if (config) request.config = config->config;
  request.out_dir = out_dir;
  return run_request(std::move(request), summary);
}

mfuse_status mfuse_run_manifest(const char* manifest_path, const char* expected_verb,
                                const char* out_dir, char** summary) {
  if (summary) *summary = nullptr;
  mfuse::RunRequest request;
  const mfuse_status s = guarded([&] {
    require(manifest_path && out_dir, "manifest_path and out_dir must be non-null");
    request = mfuse::request_from_manifest(manifest_path, out_dir);
    if (expected_verb && mfuse::verb_name(request.verb) != expected_verb) {
      mfuse::fail(mfuse::ErrorKind::kConfig, std::string(manifest_path) + " records verb '" +
                                                 std::string(mfuse::verb_name(request.verb)) +
                                                 "', not '" + expected_verb + "'");
    }
  });
  if (s != MFUSE_OK) return s;
  return run_request(std::move(request), summary);
}

mfuse_status mfuse_sha256_file(const char* path, char out_hex[65]) {
  return guarded([&] {
    require(path && out_hex, "path and out_hex must be non-null");
    const std::string h = mfuse::sha256_file(path);
    std::memcpy(out_hex, h.c_str(), 65);
  });
}

mfuse_status mfuse_auc_roc(const double* scores, const int64_t* labels, size_t n, double* out) {
  return guarded([&] {
    require(out, "out must be non-null");
    *out = mfuse::auc_roc(scored(scores, labels, n));
  });
}

mfuse_status mfuse_f_scores(const double* scores, const int64_t* labels, size_t n,
                            double* f1_at_half, double* max_f1, double* best_threshold) {
  return guarded([&] {
    const mfuse::FScores f = mfuse::f_scores(scored(scores, labels, n));
    if (f1_at_half) *f1_at_half = f.f1_at_half;
    if (max_f1) *max_f1 = f.max_f1;
    if (best_threshold) *best_threshold = f.best_threshold;
  });
}

mfuse_status mfuse_balanced_accuracy(const double* scores, const int64_t* labels, size_t n,
                                     double threshold, double* out) {
  return guarded([&] {
    require(out, "out must be non-null");
    *out = mfuse::balanced_accuracy(scored(scores, labels, n), threshold);
  });
}

mfuse_status mfuse_class_weights(const size_t* counts, size_t n, double* out) {
  return guarded([&] {
    require(counts && out, "counts and out must be non-null");
    const std::vector<std::size_t> c(counts, counts + n);
    const std::vector<double> w = mfuse::class_weights(c);
    for (size_t i = 0; i < n; ++i) out[i] = w[i];
  });
}

mfuse_status mfuse_model_load(const char* train_dir, mfuse_model** out) {
  return guarded([&] {
    require(train_dir && out, "train_dir and out must be non-null");
    *out = nullptr;
    const std::filesystem::path dir(train_dir);
    mfuse::Config cfg = mfuse::Config::load(dir / "model.cfg");
    mfuse::FusionModelConfig mc = mfuse::read_model_config(cfg, mfuse::Variant::kTkm);
    mfuse::Vocabulary vocab = mfuse::Vocabulary::load(dir / "vocab.txt");
    mc.text.vocab_size = vocab.size();
    const mfuse::InputMask mask = mfuse::parse_mask(cfg.raw("train.mask").value_or("TT,IT,I"));
    auto m = std::unique_ptr<mfuse_model>(new mfuse_model{
        mfuse::FusionModel(mc), mfuse::load_checkpoint(dir / "checkpoint.bin"), std::move(vocab), mask});
    *out = m.release();
  });
}

mfuse_status mfuse_model_score(mfuse_model* model, const char* tweet_text, const char* image_text,
                               const char* image_ppm_path, const char* mask, double* out) {
  return guarded([&] {
    require(model && out, "model and out must be non-null");
    const mfuse::InputMask m = mask ? mfuse::parse_mask(mask) : model->mask;
    mfuse::Sample s;
    s.id = "input";
    s.tweet = model->vocab.encode(mfuse::preprocess_tweet_text(tweet_text ? tweet_text : ""));
    s.image_text = model->vocab.encode(mfuse::preprocess_tweet_text(image_text ? image_text : ""));
    const bool needs_image = model->model.config().variant != mfuse::Variant::kLstm && m.image;
    if (needs_image) {
      require(image_ppm_path, "this model and mask need an image");
      s.image = std::make_shared<const mfuse::Image8>(mfuse::read_ppm(image_ppm_path));
    }
    const std::vector<mfuse::Sample> one = {std::move(s)};
    *out = mfuse::score_dataset(model->model, model->params, one, m).front().score;
  });
}

void mfuse_model_free(mfuse_model* model) { delete model; }

}  // extern "C"
