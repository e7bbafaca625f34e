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

#include "mfuse/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "json.hpp"

#include "mfuse/dataset.hpp"
#include "mfuse/evaluation.hpp"
#include "mfuse/gradsuite.hpp"
#include "mfuse/image.hpp"
#include "mfuse/parameters.hpp"
#include "mfuse/synth.hpp"
#include "mfuse/text.hpp"

namespace mfuse {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr std::array<std::string_view, 7> kVerbNames = {"prepare", "synth",     "train", "eval",
                                                        "ablate",  "gradcheck", "report"};
constexpr std::string_view kManifestFormat = "mfuse-manifest/1";
constexpr std::string_view kDefaultAblateMasks = "TT;TT,IT;I;TT,IT,I";

const std::set<std::string, std::less<>> kAllNamespaces = {
    "data", "model", "backbone", "text", "train", "eval", "ablate", "gradcheck", "report",
    "prepare", "synth"};

std::set<std::string, std::less<>> verb_namespaces(Verb v) {
  switch (v) {
    case Verb::kPrepare: return {"prepare"};
    case Verb::kSynth: return {"synth"};
    case Verb::kTrain: return {"data", "model", "backbone", "text", "train"};
    case Verb::kEval: return {"data", "eval"};
    case Verb::kAblate: return {"data", "model", "backbone", "text", "train", "eval", "ablate"};
    case Verb::kGradcheck: return {"gradcheck"};
    case Verb::kReport: return {"report"};
  }
  return {};
}

// Rejects keys the verb owns but did not read, and keys nobody owns.
void check_keys(const Config& config, Verb verb) {
  const auto own = verb_namespaces(verb);
  std::string unknown;
  for (const std::string& key : config.unconsumed()) {
    const auto dot = key.find('.');
    const std::string ns = dot == std::string::npos ? "" : key.substr(0, dot);
    if (!ns.empty() && kAllNamespaces.count(ns) && !own.count(ns)) continue;
    if (!unknown.empty()) unknown += ", ";
    unknown += key;
  }
  if (!unknown.empty()) {
    fail(ErrorKind::kConfig,
         "unknown config keys for '" + std::string(verb_name(verb)) + "': " + unknown);
  }
}

std::uint64_t read_seed(Config& config) {
  if (!config.contains("seed")) {
    if (const char* env = std::getenv("MFUSE_SEED"); env && *env) config.set("seed", env);
  }
  return config.get_u64("seed", 0);
}

std::string hex(const unsigned char* bytes, unsigned n) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < n; ++i) {
    out += kDigits[bytes[i] >> 4];
    out += kDigits[bytes[i] & 15];
  }
  return out;
}

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) {
      fail(ErrorKind::kState, "sha256: digest initialisation failed");
    }
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_, data, n); }
  void update(std::string_view s) { update(s.data(), s.size()); }
  std::string hex_digest() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned n = 0;
    EVP_DigestFinal_ex(ctx_, md, &n);
    return hex(md, n);
  }

 private:
  EVP_MD_CTX* ctx_;
};

std::string sha256_string(std::string_view s) {
  Sha256 h;
  h.update(s);
  return h.hex_digest();
}

// Digest over the sorted (relative name, file digest) pairs of a directory.
std::string sha256_tree(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  Sha256 h;
  for (const fs::path& f : files) {
    h.update(fs::relative(f, dir).generic_string());
    h.update("\n");
    h.update(sha256_file(f));
    h.update("\n");
  }
  return h.hex_digest();
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  return out;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::kData, path.string() + ": " + e.what());
  }
}

std::vector<std::string> read_word_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot read word list " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r");
    out.push_back(line.substr(b, e - b + 1));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

class Manifest {
 public:
  Manifest(fs::path dir, Verb verb) : dir_(std::move(dir)) {
    doc_["format"] = kManifestFormat;
    doc_["verb"] = verb_name(verb);
    doc_["status"] = "incomplete";
    doc_["artifacts"] = json::object();
  }

  void set_config(const Config& config, std::uint64_t seed) {
    json c = json::object();
    for (const auto& [k, v] : config.resolved()) c[k] = v;
    doc_["config"] = c;
    doc_["seeds"] = {{"seed", seed}};
  }
  void add_artifact(const std::string& name) {
    doc_["artifacts"][name] = sha256_file(dir_ / name);
    names_.push_back(name);
  }
  void add_tree(const std::string& name) {
    doc_["artifacts"][name + "/"] = sha256_tree(dir_ / name);
    names_.push_back(name + "/");
  }
  void add_input(const std::string& name, const fs::path& path) {
    doc_["inputs"][name] = sha256_file(path);
  }
  json& summary() { return doc_["summary"]; }
  json& doc() { return doc_; }
  const std::vector<std::string>& artifacts() const { return names_; }
  fs::path path() const { return dir_ / "manifest.json"; }

  void write(std::string_view status, const std::string& error = "") {
    doc_["status"] = status;
    if (!error.empty()) doc_["error"] = error;
    const fs::path tmp = dir_ / "manifest.json.tmp";
    {
      std::ofstream out = open_out(tmp);
      out << doc_.dump(2) << '\n';
      if (!out) fail(ErrorKind::kIo, "cannot write " + tmp.string());
    }
    fs::rename(tmp, path());
  }

 private:
  fs::path dir_;
  json doc_;
  std::vector<std::string> names_;
};

// ---------------------------------------------------------------------------
// Data

struct DataSettings {
  fs::path examples;
  fs::path image_root;
};

DataSettings read_data_settings(Config& c) {
  const auto dir = c.get_optional("data.dir");
  if (!dir) fail(ErrorKind::kConfig, "data.dir is required");
  DataSettings s;
  s.examples = c.get_string("data.examples", (fs::path(*dir) / "examples.jsonl").string());
  s.image_root = c.get_string("data.image_root", *dir);
  return s;
}

class ImageCache {
 public:
  explicit ImageCache(fs::path root) : root_(std::move(root)) {}
  std::shared_ptr<const Image8> get(const LabeledExample& ex) {
    if (!ex.image_ref || ex.image_ref->empty()) {
      fail(ErrorKind::kData, "example '" + ex.id + "' has no image");
    }
    auto& slot = cache_[*ex.image_ref];
    if (!slot) slot = std::make_shared<const Image8>(read_ppm(root_ / *ex.image_ref));
    return slot;
  }

 private:
  fs::path root_;
  std::map<std::string, std::shared_ptr<const Image8>> cache_;
};

Vocabulary build_vocabulary(std::span<const LabeledExample> examples) {
  std::vector<std::vector<std::string>> texts;
  for (const LabeledExample& ex : examples) {
    if (ex.split != Split::kTrain) continue;
    texts.push_back(preprocess_tweet_text(ex.tweet_text));
    texts.push_back(preprocess_tweet_text(ex.image_text));
  }
  return Vocabulary::build(texts);
}

Sample to_sample(const LabeledExample& ex, const Vocabulary& vocab, ImageCache* images) {
  return {ex.id, images ? images->get(ex) : nullptr,
          vocab.encode(preprocess_tweet_text(ex.tweet_text)),
          vocab.encode(preprocess_tweet_text(ex.image_text)), ex.label};
}

DataSplits to_splits(std::span<const LabeledExample> examples, const Vocabulary& vocab,
                     ImageCache* images) {
  DataSplits out;
  for (const LabeledExample& ex : examples) {
    Sample s = to_sample(ex, vocab, images);
    switch (ex.split) {
      case Split::kTrain: out.train.push_back(std::move(s)); break;
      case Split::kVal: out.val.push_back(std::move(s)); break;
      case Split::kTest: out.test.push_back(std::move(s)); break;
    }
  }
  return out;
}

bool needs_images(const FusionModelConfig& m, const InputMask& mask) {
  return m.variant != Variant::kLstm && mask.image;
}

// ---------------------------------------------------------------------------
// Results rows

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json row_to_json(const ResultRow& r) {
  const EvalReport& e = r.report;
  return {{"model", r.model},
          {"inputs", r.inputs},
          {"f1_at_half", e.f1_at_half},
          {"max_f1", e.max_f1},
          {"best_threshold", number_or_null(e.best_threshold)},
          {"auc", e.auc},
          {"balanced_accuracy", e.balanced_accuracy},
          {"examples", e.examples},
          {"positives", e.positives}};
}

ResultRow row_from_json(const json& j) {
  ResultRow r;
  try {
    r.model = j.at("model").get<std::string>();
    r.inputs = j.at("inputs").get<std::string>();
    r.report.f1_at_half = j.at("f1_at_half").get<double>();
    r.report.max_f1 = j.at("max_f1").get<double>();
    const json& t = j.at("best_threshold");
    r.report.best_threshold = t.is_null() ? INFINITY : t.get<double>();
    r.report.auc = j.at("auc").get<double>();
    r.report.balanced_accuracy = j.at("balanced_accuracy").get<double>();
    r.report.examples = j.at("examples").get<std::size_t>();
    r.report.positives = j.at("positives").get<std::size_t>();
  } catch (const json::exception& e) {
    fail(ErrorKind::kData, std::string("malformed results row: ") + e.what());
  }
  return r;
}

void write_results(const fs::path& dir, std::span<const ResultRow> rows, Manifest& manifest) {
  {
    std::ofstream out = open_out(dir / "results.csv");
    write_results_csv(rows, out);
  }
  {
    std::ofstream out = open_out(dir / "results_table.txt");
    out << results_table_text(rows);
  }
  {
    json arr = json::array();
    for (const ResultRow& r : rows) arr.push_back(row_to_json(r));
    std::ofstream out = open_out(dir / "results.json");
    out << arr.dump(2) << '\n';
  }
  for (const char* name : {"results.csv", "results_table.txt", "results.json"}) {
    manifest.add_artifact(name);
  }
}

std::vector<ResultRow> read_results(const fs::path& path) {
  const json j = read_json(path);
  if (!j.is_array()) fail(ErrorKind::kData, path.string() + ": expected an array of rows");
  std::vector<ResultRow> rows;
  for (const json& r : j) rows.push_back(row_from_json(r));
  return rows;
}

// Scores, metrics, curves and a one-row results table for one evaluation.
ResultRow write_evaluation(const fs::path& dir, const std::string& model, const std::string& inputs,
                           std::span<const ScoredExample> scored, double threshold,
                           Manifest& manifest, const std::string& prefix = "") {
  const EvalReport report = evaluate_scores(scored, threshold);
  auto emit = [&](const std::string& name, auto&& writer) {
    std::ofstream out = open_out(dir / (prefix + name));
    writer(out);
    out.close();
    manifest.add_artifact(prefix + name);
  };
  emit("scores.csv", [&](std::ostream& o) { write_scores_csv(scored, o); });
  emit("roc.csv", [&](std::ostream& o) { write_curve_csv(report.curves.roc, o); });
  emit("pr.csv", [&](std::ostream& o) { write_curve_csv(report.curves.pr, o); });
  ResultRow row{model, inputs, report};
  emit("metrics.json", [&](std::ostream& o) { o << row_to_json(row).dump(2) << '\n'; });
  return row;
}

// ---------------------------------------------------------------------------
// train

struct TrainSettings {
  DataSettings data;
  FusionModelConfig model;
  TrainConfig train;
  std::optional<fs::path> vocab;
  std::optional<fs::path> embeddings;
  std::optional<fs::path> init_checkpoint;
};

TrainSettings read_train_settings(Config& c, Variant default_variant, std::uint64_t seed) {
  TrainSettings s;
  s.data = read_data_settings(c);
  s.model = read_model_config(c, default_variant);
  if (auto v = c.get_optional("text.vocab")) s.vocab = *v;
  if (auto e = c.get_optional("text.embeddings")) s.embeddings = *e;
  TrainConfig& t = s.train;
  t.seed = seed;
  t.lr = c.get_double("train.lr", t.lr);
  t.batch_size = c.get_size("train.batch_size", t.batch_size);
  t.epochs = c.get_size("train.epochs", t.epochs);
  t.eval_every = c.get_size("train.eval_every", t.eval_every);
  t.mask = parse_mask(c.get_string("train.mask", mask_name(t.mask)));
  const std::string weights = c.get_string("train.class_weights", "balanced");
  const auto mode = parse_class_weight_mode(weights);
  if (!mode) fail(ErrorKind::kConfig, "train.class_weights must be balanced or uniform, got '" + weights + "'");
  t.weight_mode = *mode;
  if (auto p = c.get_optional("train.init_checkpoint")) s.init_checkpoint = *p;
  t.validate();
  return s;
}

std::string resolved_text(const Config& config) {
  std::string out;
  for (const auto& [k, v] : config.resolved()) out += k + " = " + v + "\n";
  return out;
}

struct TrainOutcome {
  TrainResult result;
  FusionModelConfig model;
};

// Trains and writes checkpoint.bin, model.cfg, vocab.txt and history.csv.
TrainOutcome train_into(const fs::path& dir, const TrainSettings& s, const DataSplits& data,
                        const Vocabulary& vocab, const std::string& model_cfg,
                        Manifest& manifest) {
  FusionModelConfig mc = s.model;
  mc.text.vocab_size = vocab.size();
  const FusionModel model(mc);

  std::unique_ptr<ParameterStore> init;
  if (s.init_checkpoint || s.embeddings) {
    init = std::make_unique<ParameterStore>(initial_parameters(model, s.train));
    if (s.init_checkpoint) {
      // Partial initialisation: every matching name is copied, e.g. a
      // backbone trained on images alone.
      const ParameterStore loaded = load_checkpoint(*s.init_checkpoint);
      std::size_t copied = 0;
      for (const auto& [name, p] : loaded) {
        if (!init->contains(name)) continue;
        Parameter& dst = init->at(name);
        if (dst.value.shape() != p.value.shape()) {
          fail(ErrorKind::kConfig, "train.init_checkpoint: '" + name + "' has shape " +
                                       shape_str(p.value.shape()) + ", model expects " +
                                       shape_str(dst.value.shape()));
        }
        dst.value = p.value;
        ++copied;
      }
      if (copied == 0) fail(ErrorKind::kConfig, "train.init_checkpoint shares no parameters with the model");
      manifest.add_input("init_checkpoint", *s.init_checkpoint);
      manifest.summary()["init_parameters_copied"] = copied;
    }
    if (s.embeddings) {
      manifest.summary()["embedding_rows_imported"] = import_embeddings(*init, "text", vocab, *s.embeddings);
      if (!mc.shared_text_encoder && mc.variant != Variant::kLstm) {
        import_embeddings(*init, "image_text", vocab, *s.embeddings);
      }
      manifest.add_input("embeddings", *s.embeddings);
    }
  }

  TrainOutcome out{train(model, data, s.train, init.get()), mc};
  const TrainResult& r = out.result;
  save_checkpoint(r.params, dir / "checkpoint.bin");
  vocab.save(dir / "vocab.txt");
  {
    std::ofstream o = open_out(dir / "model.cfg");
    o << model_cfg;
  }
  {
    std::ofstream o = open_out(dir / "history.csv");
    r.history.write_csv(o);
  }
  for (const char* name : {"checkpoint.bin", "model.cfg", "vocab.txt", "history.csv"}) {
    manifest.add_artifact(name);
  }
  json& sum = manifest.summary();
  sum["train_examples"] = data.train.size();
  sum["val_examples"] = data.val.size();
  sum["steps"] = r.history.step_loss.size();
  sum["final_loss"] = r.history.step_loss.empty() ? json(nullptr) : number_or_null(r.history.step_loss.back());
  sum["best_step"] = r.best_step ? json(*r.best_step) : json(nullptr);
  sum["best_val_auc"] = r.best_step ? json(r.best_val_auc) : json(nullptr);
  sum["diverged"] = r.diverged;
  sum["wall_seconds"] = r.history.wall_seconds;
  return out;
}

struct LoadedData {
  std::vector<LabeledExample> examples;
  Vocabulary vocab;
  DataSplits splits;
};

LoadedData load_training_data(const TrainSettings& s, bool images) {
  LoadedData d;
  d.examples = read_examples(s.data.examples);
  d.vocab = s.vocab ? Vocabulary::load(*s.vocab) : build_vocabulary(d.examples);
  ImageCache cache(s.data.image_root);
  d.splits = to_splits(d.examples, d.vocab, images ? &cache : nullptr);
  return d;
}

std::string describe_train(const TrainResult& r) {
  std::ostringstream o;
  o << "steps " << r.history.step_loss.size() << '\n';
  if (!r.history.step_loss.empty()) o << "final_loss " << format_double(r.history.step_loss.back()) << '\n';
  if (r.best_step) o << "best_step " << *r.best_step << "\nbest_val_auc " << format_double(r.best_val_auc) << '\n';
  return o.str();
}

RunResult run_train(Config& c, const fs::path& dir, Manifest& manifest) {
  const std::uint64_t seed = read_seed(c);
  const TrainSettings s = read_train_settings(c, Variant::kTkm, seed);
  check_keys(c, Verb::kTrain);
  manifest.set_config(c, seed);
  manifest.write("incomplete");

  const LoadedData data = load_training_data(s, needs_images(s.model, s.train.mask));
  manifest.add_input("examples", s.data.examples);
  const TrainOutcome out = train_into(dir, s, data.splits, data.vocab, resolved_text(c), manifest);
  if (out.result.diverged) {
    fail(ErrorKind::kNumeric, "training diverged: " + out.result.diagnostic +
                                  " (last finite parameters saved to checkpoint.bin)");
  }
  return {manifest.path(), manifest.artifacts(), describe_train(out.result)};
}

// ---------------------------------------------------------------------------
// eval

std::vector<ScoredExample> score_split(const FusionModel& model, ParameterStore& params,
                                       std::span<const LabeledExample> examples, Split split,
                                       const Vocabulary& vocab, const fs::path& image_root,
                                       const InputMask& mask) {
  ImageCache cache(image_root);
  const bool images = needs_images(model.config(), mask);
  std::vector<Sample> samples;
  for (const LabeledExample& ex : examples) {
    if (ex.split == split) samples.push_back(to_sample(ex, vocab, images ? &cache : nullptr));
  }
  if (samples.empty()) {
    fail(ErrorKind::kData, "no examples in split '" + std::string(split_name(split)) + "'");
  }
  return score_dataset(model, params, samples, mask);
}

Split read_split(Config& c, const std::string& key) {
  const std::string name = c.get_string(key, "test");
  const auto split = parse_split(name);
  if (!split) fail(ErrorKind::kConfig, key + " must be train, val or test, got '" + name + "'");
  return *split;
}

RunResult run_eval(Config& c, const fs::path& dir, Manifest& manifest) {
  const std::uint64_t seed = read_seed(c);
  const std::string model_dir = c.get_optional("eval.model_dir").value_or("");
  if (model_dir.empty()) fail(ErrorKind::kConfig, "eval.model_dir is required (a train output directory or 'random')");
  const bool random = model_dir == "random";

  std::optional<Config> model_cfg;
  if (!random) {
    model_cfg = Config::load(fs::path(model_dir) / "model.cfg");
    // The data the model was trained on is the default evaluation source.
    for (const char* key : {"data.dir", "data.examples", "data.image_root"}) {
      if (!c.contains(key) && model_cfg->raw(key)) c.set(key, *model_cfg->raw(key));
    }
  }
  const DataSettings data = read_data_settings(c);
  const Split split = read_split(c, "eval.split");
  const double threshold = c.get_double("eval.threshold", 0.5);
  const std::string default_mask =
      model_cfg ? model_cfg->raw("train.mask").value_or("TT,IT,I") : "TT,IT,I";
  const InputMask mask = parse_mask(c.get_string("eval.mask", default_mask));
  check_keys(c, Verb::kEval);
  manifest.set_config(c, seed);
  manifest.write("incomplete");

  const std::vector<LabeledExample> examples = read_examples(data.examples);
  manifest.add_input("examples", data.examples);
  std::vector<ScoredExample> scored;
  std::string model_label = "Random", inputs = "-";
  if (random) {
    std::vector<std::int64_t> labels;
    std::vector<std::string> ids;
    for (const LabeledExample& ex : examples) {
      if (ex.split != split) continue;
      labels.push_back(static_cast<std::int64_t>(ex.label));
      ids.push_back(ex.id);
    }
    scored = random_scores(labels, seed);
    for (std::size_t i = 0; i < scored.size(); ++i) scored[i].id = ids[i];
  } else {
    FusionModelConfig mc = read_model_config(*model_cfg, Variant::kTkm);
    const Vocabulary vocab = Vocabulary::load(fs::path(model_dir) / "vocab.txt");
    mc.text.vocab_size = vocab.size();
    const FusionModel model(mc);
    ParameterStore params = load_checkpoint(fs::path(model_dir) / "checkpoint.bin");
    manifest.add_input("checkpoint", fs::path(model_dir) / "checkpoint.bin");
    scored = score_split(model, params, examples, split, vocab, data.image_root, mask);
    model_label = variant_label(mc.variant);
    inputs = mc.variant == Variant::kLstm ? "TT" : mask_name(mask);
  }
  const ResultRow row = write_evaluation(dir, model_label, inputs, scored, threshold, manifest);
  const std::vector<ResultRow> rows = {row};
  write_results(dir, rows, manifest);
  manifest.summary() = row_to_json(row);
  return {manifest.path(), manifest.artifacts(), format_result_row(row) + "\n"};
}

// ---------------------------------------------------------------------------
// ablate

std::vector<InputMask> read_masks(Config& c) {
  const std::string text = c.get_string("ablate.masks", std::string(kDefaultAblateMasks));
  std::vector<InputMask> masks;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ';')) masks.push_back(parse_mask(part));
  if (masks.empty()) fail(ErrorKind::kConfig, "ablate.masks lists no input masks");
  return masks;
}

std::string mask_slug(const InputMask& m) {
  std::string s = mask_name(m);
  std::replace(s.begin(), s.end(), ',', '_');
  return s;
}

RunResult run_ablate(Config& c, const fs::path& dir, Manifest& manifest) {
  const std::uint64_t seed = read_seed(c);
  TrainSettings s = read_train_settings(c, Variant::kFcm, seed);
  const Split split = read_split(c, "eval.split");
  const double threshold = c.get_double("eval.threshold", 0.5);
  const std::vector<InputMask> masks = read_masks(c);
  check_keys(c, Verb::kAblate);
  manifest.set_config(c, seed);
  manifest.write("incomplete");

  bool any_images = false;
  for (const InputMask& m : masks) any_images = any_images || needs_images(s.model, m);
  std::optional<LoadedData> data;
  manifest.add_input("examples", s.data.examples);

  std::vector<ResultRow> rows;
  std::ostringstream summary;
  json arms = json::array();
  for (const InputMask& mask : masks) {
    const std::string arm = "arm-" + mask_slug(mask);
    const fs::path arm_dir = dir / arm;
    Config arm_config = c;
    arm_config.set("train.mask", mask_name(mask));
    arm_config.get_string("train.mask", "");
    const std::string fingerprint = sha256_string(resolved_text(arm_config));

    // Resume: an arm whose manifest is complete for this exact config is kept.
    const fs::path arm_manifest = arm_dir / "manifest.json";
    bool done = false;
    if (fs::exists(arm_manifest) && fs::exists(arm_dir / "results.json")) {
      const json prior = read_json(arm_manifest);
      done = prior.value("status", "") == "complete" && prior.value("fingerprint", "") == fingerprint;
    }
    if (!done) {
      fs::create_directories(arm_dir);
      Manifest am(arm_dir, Verb::kTrain);
      am.set_config(arm_config, seed);
      am.doc()["fingerprint"] = fingerprint;
      am.write("incomplete");
      try {
        if (!data) data = load_training_data(s, any_images);
        s.train.mask = mask;
        const TrainOutcome out = train_into(arm_dir, s, data->splits, data->vocab,
                                            resolved_text(arm_config), am);
        if (out.result.diverged) {
          fail(ErrorKind::kNumeric, arm + ": training diverged: " + out.result.diagnostic);
        }
        const FusionModel model(out.model);
        ParameterStore params = out.result.params;
        const auto scored = score_split(model, params, data->examples, split, data->vocab,
                                        s.data.image_root, mask);
        const ResultRow row = write_evaluation(arm_dir, variant_label(out.model.variant),
                                               mask_name(mask), scored, threshold, am);
        const std::vector<ResultRow> one = {row};
        write_results(arm_dir, one, am);
        am.write("complete");
      } catch (const Error& e) {
        am.write("failed", e.what());
        throw;
      }
    }
    const std::vector<ResultRow> arm_rows = read_results(arm_dir / "results.json");
    rows.insert(rows.end(), arm_rows.begin(), arm_rows.end());
    arms.push_back({{"arm", arm}, {"resumed", done}});
    summary << format_result_row(arm_rows.front()) << (done ? "  (resumed)" : "") << '\n';
  }
  write_results(dir, rows, manifest);
  manifest.summary()["arms"] = arms;
  return {manifest.path(), manifest.artifacts(), summary.str()};
}

// ---------------------------------------------------------------------------
// prepare

RunResult run_prepare(Config& c, const fs::path& dir, Manifest& manifest) {
  const std::uint64_t seed = read_seed(c);
  const auto corpus = c.get_optional("prepare.corpus");
  if (!corpus) fail(ErrorKind::kConfig, "prepare.corpus is required");
  PrepareOptions o;
  o.seed = seed;
  o.rules.min_word_count = c.get_size("prepare.min_words", o.rules.min_word_count);
  o.rules.text_probability_threshold =
      c.get_double("prepare.text_probability_threshold", o.rules.text_probability_threshold);
  const auto banned = c.get_optional("prepare.banned_terms_file");
  const auto keywords = c.get_optional("prepare.keywords_file");
  o.min_annotation_seconds = c.get_double("prepare.min_annotation_seconds", o.min_annotation_seconds);
  o.keep_ungated = c.get_bool("prepare.keep_ungated", o.keep_ungated);
  o.val_size = c.get_size("prepare.val_size", 0);
  o.test_size = c.get_size("prepare.test_size", 0);
  check_keys(c, Verb::kPrepare);
  manifest.set_config(c, seed);
  manifest.write("incomplete");

  if (banned) {
    o.rules.banned_terms = read_word_list(*banned);
    manifest.add_input("banned_terms", *banned);
  }
  if (keywords) {
    o.rules.keyword_list = read_word_list(*keywords);
    manifest.add_input("keywords", *keywords);
  }
  o.rules.validate();
  const CorpusImport imported = import_corpus(*corpus);
  manifest.add_input("corpus", *corpus);
  const PrepareResult prepared = prepare_corpus(imported.records, o);

  write_examples(prepared.examples, dir / "examples.jsonl");
  manifest.add_artifact("examples.jsonl");
  {
    std::ofstream out = open_out(dir / "import_errors.csv");
    out << "line,message\n";
    for (const LineDiagnostic& d : imported.errors) {
      std::string msg = d.message;
      std::replace(msg.begin(), msg.end(), '"', '\'');
      out << d.line << ",\"" << msg << "\"\n";
    }
  }
  manifest.add_artifact("import_errors.csv");
  {
    std::ofstream out = open_out(dir / "outcomes.csv");
    out << "id,filter,gate,labelable,label,category,retained,binary_tie\n";
    for (const RecordOutcome& r : prepared.outcomes) {
      out << r.id << ',' << filter_reason_name(r.filter.reason) << ','
          << (r.gate ? gate_decision_name(*r.gate) : "") << ',';
      if (r.aggregate) {
        const Aggregate& a = *r.aggregate;
        out << (a.labelable ? "true" : "false") << ',';
        if (a.labelable) out << static_cast<int>(a.label) << ',' << category_name(a.category);
        else out << ',';
        out << ',' << a.retained << ',' << (a.binary_tie ? "true" : "false");
      } else {
        out << ",,,,";
      }
      out << '\n';
    }
  }
  manifest.add_artifact("outcomes.csv");

  VoteCounts categories{};
  std::size_t hate = 0;
  for (const LabeledExample& ex : prepared.examples) {
    categories[static_cast<std::size_t>(ex.category)] += 1;
    hate += ex.label == BinaryLabel::kHate;
  }
  const std::size_t total = prepared.examples.size();
  if (total > 0) {
    {
      std::ofstream out = open_out(dir / "class_distribution.csv");
      write_distribution_csv(class_distribution(categories), out);
    }
    {
      std::ofstream out = open_out(dir / "binary_distribution.csv");
      write_distribution_csv(binary_distribution(hate, total - hate), out);
    }
    manifest.add_artifact("class_distribution.csv");
    manifest.add_artifact("binary_distribution.csv");
  }
  if (!o.rules.keyword_list.empty()) {
    std::ofstream out = open_out(dir / "keyword_rates.csv");
    write_keyword_csv(keyword_hate_rates(prepared.examples, o.rules.keyword_list), out);
    out.close();
    manifest.add_artifact("keyword_rates.csv");
  }

  std::map<std::string, std::size_t> split_counts;
  for (const LabeledExample& ex : prepared.examples) split_counts[std::string(split_name(ex.split))] += 1;
  json& sum = manifest.summary();
  sum["records"] = imported.records.size();
  sum["malformed_lines"] = imported.errors.size();
  sum["examples"] = total;
  sum["hate"] = hate;
  sum["splits"] = split_counts;
  std::ostringstream text;
  text << "records " << imported.records.size() << "\nmalformed_lines " << imported.errors.size()
       << "\nexamples " << total << "\nhate " << hate << '\n';
  return {manifest.path(), manifest.artifacts(), text.str()};
}

// ---------------------------------------------------------------------------
// synth

RunResult run_synth(Config& c, const fs::path& dir, Manifest& manifest) {
  const std::uint64_t seed = read_seed(c);
  SynthSpec spec;
  spec.seed = seed;
  const std::string mode = c.get_string("synth.mode", std::string(synth_mode_name(spec.mode)));
  const auto parsed = parse_synth_mode(mode);
  if (!parsed) fail(ErrorKind::kConfig, "synth.mode: unknown mode '" + mode + "'");
  spec.mode = *parsed;
  spec.n_train = c.get_size("synth.n_train", spec.n_train);
  spec.n_val = c.get_size("synth.n_val", spec.n_val);
  spec.n_test = c.get_size("synth.n_test", spec.n_test);
  spec.noise = c.get_double("synth.noise", spec.noise);
  spec.multimodal_fraction = c.get_double("synth.multimodal_fraction", spec.multimodal_fraction);
  spec.image_side = c.get_size("synth.image_side", spec.image_side);
  spec.distractor_vocab = c.get_size("synth.distractor_vocab", spec.distractor_vocab);
  spec.min_tokens = c.get_size("synth.min_tokens", spec.min_tokens);
  spec.max_tokens = c.get_size("synth.max_tokens", spec.max_tokens);
  spec.signal_token = c.get_string("synth.signal_token", spec.signal_token);
  spec.balance_and_cells = c.get_bool("synth.balance_and_cells", spec.balance_and_cells);
  check_keys(c, Verb::kSynth);
  spec.validate();
  manifest.set_config(c, seed);
  manifest.write("incomplete");

  const std::vector<SynthExample> examples = generate(spec);
  write_synth_dataset(examples, dir);
  {
    std::ofstream out = open_out(dir / "bayes.csv");
    out << "evidence,train_val_accuracy,test_accuracy\n";
    const std::pair<const char*, Evidence> rows[] = {
        {"text", Evidence::kText}, {"image", Evidence::kImage}, {"both", Evidence::kBoth}};
    for (const auto& [name, ev] : rows) {
      out << name << ',' << format_double(bayes_accuracy(spec, ev, spec.multimodal_fraction)) << ','
          << format_double(bayes_accuracy(spec, ev, 1.0)) << '\n';
    }
  }
  for (const char* name : {"corpus.jsonl", "examples.jsonl", "bayes.csv"}) manifest.add_artifact(name);
  manifest.add_tree("images");
  manifest.summary()["examples"] = examples.size();
  return {manifest.path(), manifest.artifacts(),
          "examples " + std::to_string(examples.size()) + "\n"};
}

// ---------------------------------------------------------------------------
// gradcheck

RunResult run_gradcheck(Config& c, const fs::path& dir, Manifest& manifest) {
  SuiteOptions o;
  o.seed = read_seed(c);
  o.eps = c.get_double("gradcheck.eps", o.eps);
  o.tolerance = c.get_double("gradcheck.tolerance", o.tolerance);
  o.draws_per_primitive = c.get_size("gradcheck.draws", o.draws_per_primitive);
  o.include_models = c.get_bool("gradcheck.models", o.include_models);
  o.model_coords_per_input = c.get_size("gradcheck.model_coords", o.model_coords_per_input);
  check_keys(c, Verb::kGradcheck);
  if (!(o.eps > 0.0)) fail(ErrorKind::kConfig, "gradcheck.eps must be positive");
  manifest.set_config(c, o.seed);
  manifest.write("incomplete");

  const std::vector<SuiteCheck> checks = run_gradcheck_suite(o);
  {
    std::ofstream out = open_out(dir / "gradcheck.csv");
    write_suite_csv(checks, out);
  }
  manifest.add_artifact("gradcheck.csv");
  std::ostringstream text;
  write_suite_csv(checks, text);
  const auto failed = std::count_if(checks.begin(), checks.end(), [](const SuiteCheck& k) { return !k.passed; });
  text << checks.size() - failed << " of " << checks.size() << " checks passed\n";
  manifest.summary() = {{"checks", checks.size()}, {"failed", failed}};
  if (failed > 0) {
    fail(ErrorKind::kNumeric, std::to_string(failed) + " gradient checks failed; see gradcheck.csv");
  }
  return {manifest.path(), manifest.artifacts(), text.str()};
}

// ---------------------------------------------------------------------------
// report

RunResult run_report(Config& c, const fs::path& dir, Manifest& manifest) {
  const std::string inputs = c.get_optional("report.inputs").value_or("");
  check_keys(c, Verb::kReport);
  if (inputs.empty()) fail(ErrorKind::kConfig, "report.inputs must list result directories");
  manifest.set_config(c, 0);
  manifest.write("incomplete");

  std::vector<ResultRow> rows;
  std::stringstream in(inputs);
  std::string part;
  while (std::getline(in, part, ',')) {
    const fs::path src = fs::path(part) / "results.json";
    manifest.add_input(part, src);
    const std::vector<ResultRow> r = read_results(src);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  write_results(dir, rows, manifest);
  return {manifest.path(), manifest.artifacts(), results_table_text(rows)};
}

}  // namespace

std::string_view verb_name(Verb v) noexcept { return kVerbNames[static_cast<std::size_t>(v)]; }

std::optional<Verb> parse_verb(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kVerbNames.size(); ++i) {
    if (kVerbNames[i] == name) return static_cast<Verb>(i);
  }
  return std::nullopt;
}

int exit_status(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kInvalidArgument: return 2;
    case ErrorKind::kIo: return 3;
    case ErrorKind::kData: return 4;
    case ErrorKind::kPrecondition: return 5;
    case ErrorKind::kNumeric: return 6;
    case ErrorKind::kState: return 1;
  }
  return 1;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot read " + path.string());
  Sha256 h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex_digest();
}

std::string variant_label(Variant v) {
  std::string s(variant_name(v));
  for (char& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return s;
}

FusionModelConfig read_model_config(Config& c, Variant variant) {
  const std::string vname = c.get_string("model.variant", std::string(variant_name(variant)));
  const auto v = parse_variant(vname);
  if (!v) fail(ErrorKind::kConfig, "model.variant must be lstm, fcm, scm or tkm, got '" + vname + "'");
  const std::string preset = c.get_string("model.preset", "desk");
  FusionModelConfig m;
  if (preset == "desk") {
    m = FusionModelConfig::desk(*v);
  } else if (preset == "paper") {
    m = FusionModelConfig::paper(*v);
  } else {
    fail(ErrorKind::kConfig, "model.preset must be desk or paper, got '" + preset + "'");
  }
  m.k_t = c.get_size("model.k_t", m.k_t);
  m.k_it = c.get_size("model.k_it", m.k_it);
  m.fc_plan = c.get_sizes("model.fc_plan", m.fc_plan);
  m.fusion_block_count = c.get_size("model.fusion_block_count", m.fusion_block_count);
  m.fusion_block_channels = c.get_size("model.fusion_block_channels", m.fusion_block_channels);
  m.dropout_rate = c.get_double("model.dropout", m.dropout_rate);
  m.shared_text_encoder = c.get_bool("model.shared_text_encoder", m.shared_text_encoder);
  VisionBackboneConfig& b = m.backbone;
  b.input_side = c.get_size("backbone.input_side", b.input_side);
  b.resize_shortest = c.get_size("backbone.resize_shortest", b.resize_shortest);
  b.channels = c.get_sizes("backbone.channels", b.channels);
  b.kernel = c.get_size("backbone.kernel", b.kernel);
  b.stride = c.get_size("backbone.stride", b.stride);
  b.pad = c.get_size("backbone.pad", b.pad);
  m.text.embedding_dim = c.get_size("text.embedding_dim", m.text.embedding_dim);
  m.text.hidden_dim = c.get_size("text.hidden_dim", m.text.hidden_dim);
  try {
    m.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kConfig, std::string("model config: ") + e.what());
  }
  return m;
}

RunResult run(RunRequest request) {
  if (request.out_dir.empty()) fail(ErrorKind::kConfig, "an output directory is required");
  std::error_code ec;
  fs::create_directories(request.out_dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create " + request.out_dir.string() + ": " + ec.message());

  Manifest manifest(request.out_dir, request.verb);
  Config& c = request.config;
  try {
    RunResult result;
    switch (request.verb) {
      case Verb::kPrepare: result = run_prepare(c, request.out_dir, manifest); break;
      case Verb::kSynth: result = run_synth(c, request.out_dir, manifest); break;
      case Verb::kTrain: result = run_train(c, request.out_dir, manifest); break;
      case Verb::kEval: result = run_eval(c, request.out_dir, manifest); break;
      case Verb::kAblate: result = run_ablate(c, request.out_dir, manifest); break;
      case Verb::kGradcheck: result = run_gradcheck(c, request.out_dir, manifest); break;
      case Verb::kReport: result = run_report(c, request.out_dir, manifest); break;
    }
    manifest.write("complete");
    return result;
  } catch (const Error& e) {
    manifest.write("failed", std::string(error_kind_name(e.kind())) + ": " + e.what());
    throw;
  } catch (const std::exception& e) {
    manifest.write("failed", e.what());
    throw;
  }
}

RunRequest request_from_manifest(const fs::path& path, const fs::path& out_dir) {
  const json doc = read_json(path);
  if (doc.value("format", "") != kManifestFormat) {
    fail(ErrorKind::kConfig, path.string() + " is not an mfuse manifest");
  }
  RunRequest r;
  const auto verb = parse_verb(doc.value("verb", ""));
  if (!verb) fail(ErrorKind::kConfig, path.string() + ": unknown verb");
  r.verb = *verb;
  if (!doc.contains("config") || !doc["config"].is_object()) {
    fail(ErrorKind::kConfig, path.string() + ": manifest has no resolved config");
  }
  for (const auto& [k, v] : doc["config"].items()) r.config.set(k, v.get<std::string>());
  r.out_dir = out_dir;
  return r;
}

}  // namespace mfuse
