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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mfuse/config.hpp"
#include "mfuse/error.hpp"
#include "mfuse/fusion.hpp"
#include "mfuse/training.hpp"

namespace mfuse {

enum class Verb { kPrepare, kSynth, kTrain, kEval, kAblate, kGradcheck, kReport };

std::string_view verb_name(Verb v) noexcept;
std::optional<Verb> parse_verb(std::string_view name) noexcept;

struct RunRequest {
  Verb verb = Verb::kTrain;
  Config config;
  std::filesystem::path out_dir;
};

struct RunResult {
  std::filesystem::path manifest;
  std::vector<std::string> artifacts;  // paths relative to the output directory
  std::string summary;                 // human-readable, one line per fact
};

// Runs one verb. The output directory is created if needed and always gets a
// manifest.json: status "incomplete" while running, then "complete" or
// "failed" (with the error) at the end. Keys outside the verb's namespaces
// are ignored; unknown keys inside them are a config error. When the config
// has no `seed`, MFUSE_SEED is used, then 0.
RunResult run(RunRequest request);

// Rebuilds the request recorded in a manifest: same verb, the fully
// resolved config, and a new output directory.
RunRequest request_from_manifest(const std::filesystem::path& manifest,
                                 const std::filesystem::path& out_dir);

// Process exit status for an error class: 2 config/invalid argument, 3 io,
// 4 data, 5 precondition, 6 numeric, 1 otherwise.
int exit_status(ErrorKind kind) noexcept;

// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

// Model description from model.*, backbone.* and text.* keys; `variant`
// applies when model.variant is absent. vocab_size is left at its default.
FusionModelConfig read_model_config(Config& config, Variant variant);

// "FCM", "SCM", "TKM", "LSTM".
std::string variant_label(Variant v);

}  // namespace mfuse
