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

// mfuse command line. Talks to the library only through mfuse.h.

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mfuse/mfuse.h"

namespace {

constexpr const char* kFooter =
    "Settings are key=value pairs applied after --config, e.g. train.epochs=3.\n"
    "With --manifest the recorded verb and resolved config are rerun as-is.\n"
    "If no seed is given, MFUSE_SEED is used, then 0.\n"
    "Exit status: 0 ok, 1 internal, 2 config/usage, 3 io, 4 data,\n"
    "5 precondition, 6 numeric (divergence, gradient check failure).";

int report(mfuse_status status, char* summary) {
  if (status == MFUSE_OK) {
    if (summary) std::fputs(summary, stdout);
  } else {
    std::fprintf(stderr, "mfuse: %s: %s\n", mfuse_status_name(status), mfuse_last_error());
  }
  mfuse_string_free(summary);
  return mfuse_exit_code(status);
}

bool is_verb(const std::string& v) {
  std::istringstream in(mfuse_verbs());
  for (std::string w; in >> w;) {
    if (w == v) return true;
  }
  return false;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string("mfuse ") + mfuse_version() + ": multimodal hate speech classifiers",
               "mfuse"};
  app.footer(kFooter);

  std::string verb;
  std::string config_path;
  std::string out_dir;
  std::string manifest;
  std::vector<std::string> settings;

  app.add_option("verb", verb, std::string("One of: ") + mfuse_verbs())->required();
  app.add_option("settings", settings, "key=value overrides");
  app.add_option("-c,--config", config_path, "Config file of key = value lines");
  app.add_option("-o,--out", out_dir, "Output directory")->required();
  app.add_option("--manifest", manifest, "Rerun the run recorded in this manifest.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (!is_verb(verb)) {
    std::fprintf(stderr, "mfuse: unknown verb '%s'\n%s", verb.c_str(), app.help().c_str());
    return 2;
  }

  char* summary = nullptr;
  if (!manifest.empty()) {
    if (!config_path.empty() || !settings.empty()) {
      std::fprintf(stderr, "mfuse: --manifest cannot be combined with --config or settings\n");
      return 2;
    }
    return report(mfuse_run_manifest(manifest.c_str(), verb.c_str(), out_dir.c_str(), &summary),
                  summary);
  }

  mfuse_config* config = nullptr;
  mfuse_status s = config_path.empty() ? mfuse_config_new(&config)
                                       : mfuse_config_load(config_path.c_str(), &config);
  for (const std::string& kv : settings) {
    if (s != MFUSE_OK) break;
    s = mfuse_config_override(config, kv.c_str());
  }
  if (s == MFUSE_OK) s = mfuse_run(verb.c_str(), config, out_dir.c_str(), &summary);
  mfuse_config_free(config);
  return report(s, summary);
}
