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

#include "mfuse/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "mfuse/error.hpp"
#include "mfuse/random.hpp"
#include "mfuse/text.hpp"

namespace mfuse {

using json = nlohmann::json;

namespace {

constexpr std::array<std::string_view, kCategoryCount> kCategoryNames = {
    "NotHate", "Racist", "Sexist", "Homophobic", "ReligionAttack", "OtherHate"};

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

[[noreturn]] void bad_record(const std::string& msg) { fail(ErrorKind::kData, msg); }

const json& require(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) bad_record(std::string("missing field '") + key + "'");
  return *it;
}

std::string require_string(const json& obj, const char* key) {
  const json& v = require(obj, key);
  if (!v.is_string()) bad_record(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

double require_number(const json& v, const char* key) {
  if (!v.is_number()) bad_record(std::string("field '") + key + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) bad_record(std::string("field '") + key + "' must be finite");
  return d;
}

class JsonLinesCodec final : public RecordCodec {
 public:
  TweetRecord decode(std::string_view line) const override {
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      bad_record(std::string("malformed JSON: ") + e.what());
    }
    if (!obj.is_object()) bad_record("record must be a JSON object");

    TweetRecord r;
    r.id = require_string(obj, "id");
    if (r.id.empty()) bad_record("field 'id' must be non-empty");
    r.tweet_text = require_string(obj, "tweet_text");

    const json& rt = require(obj, "is_retweet");
    if (!rt.is_boolean()) bad_record("field 'is_retweet' must be a boolean");
    r.is_retweet = rt.get<bool>();

    if (auto it = obj.find("image_ref"); it != obj.end() && !it->is_null()) {
      if (!it->is_string()) bad_record("field 'image_ref' must be a string or null");
      r.image_ref = it->get<std::string>();
    }
    if (auto it = obj.find("image_text"); it != obj.end() && !it->is_null()) {
      if (!it->is_string()) bad_record("field 'image_text' must be a string");
      r.image_text = it->get<std::string>();
    }
    if (auto it = obj.find("image_text_probability"); it != obj.end() && !it->is_null()) {
      const double p = require_number(*it, "image_text_probability");
      if (p < 0.0 || p > 1.0) bad_record("field 'image_text_probability' must lie in [0,1]");
      r.image_text_probability = p;
    }

    const json& anns = require(obj, "annotations");
    if (!anns.is_array()) bad_record("field 'annotations' must be an array");
    for (const json& a : anns) {
      if (!a.is_object()) bad_record("annotation must be an object");
      WorkerAnnotation w;
      w.worker_id = require_string(a, "worker_id");
      const std::string cat = require_string(a, "category");
      auto c = parse_category(cat);
      if (!c) bad_record("unknown category '" + cat + "'");
      w.category = *c;
      w.duration_seconds = require_number(require(a, "duration_seconds"), "duration_seconds");
      if (w.duration_seconds < 0.0) bad_record("field 'duration_seconds' must be non-negative");
      r.annotations.push_back(std::move(w));
    }
    return r;
  }

  std::string encode(const TweetRecord& r) const override {
    json obj;
    obj["id"] = r.id;
    obj["tweet_text"] = r.tweet_text;
    obj["is_retweet"] = r.is_retweet;
    obj["image_ref"] = r.image_ref ? json(*r.image_ref) : json(nullptr);
    obj["image_text"] = r.image_text;
    obj["image_text_probability"] =
        r.image_text_probability ? json(*r.image_text_probability) : json(nullptr);
    json anns = json::array();
    for (const WorkerAnnotation& a : r.annotations) {
      anns.push_back({{"worker_id", a.worker_id},
                      {"category", std::string(category_name(a.category))},
                      {"duration_seconds", a.duration_seconds}});
    }
    obj["annotations"] = std::move(anns);
    return obj.dump();
  }
};

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::size_t word_count(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::size_t n = 0;
  std::string w;
  while (in >> w) ++n;
  return n;
}

bool fires(FilterReason rule, const TweetRecord& r, const FilterRuleSet& rules,
           const std::vector<std::string>& tokens) {
  switch (rule) {
    case FilterReason::kRetweet:
      return r.is_retweet;
    case FilterReason::kTooShort:
      return word_count(r.tweet_text) < rules.min_word_count;
    case FilterReason::kBannedTerm:
      for (const std::string& term : rules.banned_terms) {
        for (const std::string& t : preprocess_tweet_text(term)) {
          if (std::find(tokens.begin(), tokens.end(), t) != tokens.end()) return true;
        }
      }
      return false;
    case FilterReason::kNoImage:
      return !r.image_ref || r.image_ref->empty();
    case FilterReason::kKeep:
      break;
  }
  return false;
}

json votes_json(const VoteCounts& v) {
  json out = json::object();
  for (Category c : kAllCategories) out[std::string(category_name(c))] = v[static_cast<std::size_t>(c)];
  return out;
}

}  // namespace

std::string_view category_name(Category c) noexcept {
  return kCategoryNames[static_cast<std::size_t>(c)];
}

std::optional<Category> parse_category(std::string_view name) noexcept {
  for (Category c : kAllCategories) {
    if (category_name(c) == name) return c;
  }
  return std::nullopt;
}

const RecordCodec& json_lines_codec() {
  static const JsonLinesCodec codec;
  return codec;
}

CorpusImport parse_corpus(std::istream& in, const RecordCodec& codec) {
  CorpusImport out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (blank(line)) continue;
    try {
      TweetRecord r = codec.decode(line);
      if (!seen.insert(r.id).second) bad_record("duplicate id '" + r.id + "'");
      out.records.push_back(std::move(r));
    } catch (const Error& e) {
      out.errors.push_back({number, e.what()});
    } catch (const json::exception& e) {
      out.errors.push_back({number, e.what()});
    }
  }
  return out;
}

CorpusImport import_corpus(const std::filesystem::path& path, const RecordCodec& codec) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot read corpus file " + path.string());
  return parse_corpus(in, codec);
}

void export_corpus(std::span<const TweetRecord> records, const std::filesystem::path& path,
                   const RecordCodec& codec) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write corpus file " + path.string());
  for (const TweetRecord& r : records) out << codec.encode(r) << '\n';
  if (!out) fail(ErrorKind::kIo, "write failed for " + path.string());
}

void FilterRuleSet::validate() const {
  if (min_word_count < 1) fail(ErrorKind::kConfig, "min_word_count must be at least 1");
  if (!(text_probability_threshold >= 0.0 && text_probability_threshold <= 1.0)) {
    fail(ErrorKind::kConfig, "text_probability_threshold must lie in [0,1]");
  }
}

std::string_view filter_reason_name(FilterReason r) noexcept {
  switch (r) {
    case FilterReason::kKeep: return "keep";
    case FilterReason::kRetweet: return "retweet";
    case FilterReason::kTooShort: return "too_short";
    case FilterReason::kBannedTerm: return "banned_term";
    case FilterReason::kNoImage: return "no_image";
  }
  return "?";
}

FilterDecision filter_tweet(const TweetRecord& record, const FilterRuleSet& rules) {
  return filter_tweet(record, rules, kDefaultFilterOrder);
}

FilterDecision filter_tweet(const TweetRecord& record, const FilterRuleSet& rules,
                            std::span<const FilterReason> order) {
  const std::vector<std::string> tokens = preprocess_tweet_text(record.tweet_text);
  for (FilterReason rule : order) {
    if (fires(rule, record, rules, tokens)) return {false, rule};
  }
  return {true, FilterReason::kKeep};
}

std::string_view gate_decision_name(GateDecision g) noexcept {
  switch (g) {
    case GateDecision::kKeep: return "keep";
    case GateDecision::kDiscard: return "discard";
    case GateDecision::kUngated: return "ungated";
  }
  return "?";
}

GateDecision gate_image_by_text_probability(const TweetRecord& record, double threshold) {
  if (!record.image_text_probability) return GateDecision::kUngated;
  return *record.image_text_probability > threshold ? GateDecision::kDiscard : GateDecision::kKeep;
}

Aggregate aggregate_annotations(std::span<const WorkerAnnotation> annotations,
                                double min_duration) {
  if (annotations.empty()) {
    fail(ErrorKind::kPrecondition, "aggregate_annotations: at least one annotation is required");
  }
  Aggregate agg;
  for (const WorkerAnnotation& a : annotations) {
    if (a.duration_seconds < min_duration) continue;
    agg.votes[static_cast<std::size_t>(a.category)] += 1;
    agg.retained += 1;
  }
  if (agg.retained == 0) return agg;

  agg.labelable = true;
  const std::size_t not_hate = agg.votes[0];
  const std::size_t hate = agg.retained - not_hate;
  agg.binary_tie = hate == not_hate;
  if (hate > not_hate) {
    agg.label = BinaryLabel::kHate;
    std::size_t best = 1;
    for (std::size_t c = 2; c < kCategoryCount; ++c) {
      if (agg.votes[c] > agg.votes[best]) best = c;
    }
    agg.category = kAllCategories[best];
  }
  return agg;
}

std::string_view split_name(Split s) noexcept {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

std::optional<Split> parse_split(std::string_view name) noexcept {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  return std::nullopt;
}

LabeledExample make_labeled_example(const TweetRecord& record, const Aggregate& aggregate) {
  if (!aggregate.labelable) {
    fail(ErrorKind::kPrecondition, "record '" + record.id + "' is unlabelable");
  }
  LabeledExample ex;
  ex.id = record.id;
  ex.label = aggregate.label;
  ex.category = aggregate.category;
  ex.votes = aggregate.votes;
  ex.binary_tie = aggregate.binary_tie;
  ex.tweet_text = record.tweet_text;
  ex.image_ref = record.image_ref;
  ex.image_text = record.image_text;
  return ex;
}

std::vector<Split> build_splits(std::span<const LabeledExample> examples, std::size_t val_size,
                                std::size_t test_size, std::uint64_t seed) {
  if (val_size % 2 != 0 || test_size % 2 != 0) {
    fail(ErrorKind::kInvalidArgument, "build_splits: val and test sizes must be even, got " +
                                          std::to_string(val_size) + " and " +
                                          std::to_string(test_size));
  }
  std::vector<std::size_t> hate, not_hate;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    (examples[i].label == BinaryLabel::kHate ? hate : not_hate).push_back(i);
  }
  const std::size_t per_class = (val_size + test_size) / 2;
  if (hate.size() < per_class || not_hate.size() < per_class) {
    fail(ErrorKind::kData, "build_splits: need " + std::to_string(per_class) +
                               " examples of each class, have " + std::to_string(hate.size()) +
                               " hate and " + std::to_string(not_hate.size()) + " not hate");
  }

  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(hate));
  rng.shuffle(std::span<std::size_t>(not_hate));

  std::vector<Split> out(examples.size(), Split::kTrain);
  for (const auto* cls : {&hate, &not_hate}) {
    for (std::size_t k = 0; k < per_class; ++k) {
      out[(*cls)[k]] = k < val_size / 2 ? Split::kVal : Split::kTest;
    }
  }
  return out;
}

void write_examples(std::span<const LabeledExample> examples, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  for (const LabeledExample& ex : examples) {
    json obj;
    obj["id"] = ex.id;
    obj["label"] = static_cast<std::int64_t>(ex.label);
    obj["category"] = std::string(category_name(ex.category));
    obj["votes"] = votes_json(ex.votes);
    obj["split"] = std::string(split_name(ex.split));
    obj["binary_tie"] = ex.binary_tie;
    obj["tweet_text"] = ex.tweet_text;
    obj["image_ref"] = ex.image_ref ? json(*ex.image_ref) : json(nullptr);
    obj["image_text"] = ex.image_text;
    out << obj.dump() << '\n';
  }
  if (!out) fail(ErrorKind::kIo, "write failed for " + path.string());
}

std::vector<LabeledExample> read_examples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot read " + path.string());
  std::vector<LabeledExample> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (blank(line)) continue;
    try {
      const json obj = json::parse(line);
      LabeledExample ex;
      ex.id = require_string(obj, "id");
      const json& label = require(obj, "label");
      if (!label.is_number_integer() || (label.get<int>() != 0 && label.get<int>() != 1)) {
        bad_record("field 'label' must be 0 or 1");
      }
      ex.label = static_cast<BinaryLabel>(label.get<int>());
      auto cat = parse_category(require_string(obj, "category"));
      if (!cat) bad_record("unknown category");
      ex.category = *cat;
      if (auto it = obj.find("votes"); it != obj.end() && it->is_object()) {
        for (Category c : kAllCategories) {
          ex.votes[static_cast<std::size_t>(c)] = it->value(std::string(category_name(c)), 0u);
        }
      }
      auto split = parse_split(require_string(obj, "split"));
      if (!split) bad_record("unknown split");
      ex.split = *split;
      ex.binary_tie = obj.value("binary_tie", false);
      ex.tweet_text = require_string(obj, "tweet_text");
      if (auto it = obj.find("image_ref"); it != obj.end() && it->is_string()) {
        ex.image_ref = it->get<std::string>();
      }
      ex.image_text = obj.value("image_text", std::string());
      out.push_back(std::move(ex));
    } catch (const json::exception& e) {
      fail(ErrorKind::kData, path.string() + ":" + std::to_string(number) + ": " + e.what());
    } catch (const Error& e) {
      fail(ErrorKind::kData, path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

std::vector<KeywordRate> keyword_hate_rates(std::span<const LabeledExample> examples,
                                            std::span<const std::string> keywords) {
  std::vector<std::set<std::string>> token_sets;
  token_sets.reserve(examples.size());
  for (const LabeledExample& ex : examples) {
    auto tokens = preprocess_tweet_text(ex.tweet_text);
    token_sets.emplace_back(tokens.begin(), tokens.end());
  }

  std::vector<KeywordRate> rates;
  for (const std::string& raw : keywords) {
    KeywordRate rate;
    rate.keyword = raw;
    std::transform(rate.keyword.begin(), rate.keyword.end(), rate.keyword.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    for (std::size_t i = 0; i < examples.size(); ++i) {
      if (!token_sets[i].count(rate.keyword)) continue;
      (examples[i].label == BinaryLabel::kHate ? rate.hate : rate.not_hate) += 1;
    }
    const std::size_t total = rate.hate + rate.not_hate;
    if (total > 0) rate.fraction = static_cast<double>(rate.hate) / static_cast<double>(total);
    rates.push_back(std::move(rate));
  }
  std::stable_sort(rates.begin(), rates.end(), [](const KeywordRate& a, const KeywordRate& b) {
    const std::size_t ta = a.hate + a.not_hate, tb = b.hate + b.not_hate;
    if (ta != tb) return ta > tb;
    return a.keyword < b.keyword;
  });
  return rates;
}

void write_keyword_csv(std::span<const KeywordRate> rates, std::ostream& out) {
  out << "keyword,hate_count,nothate_count,fraction\n";
  for (const KeywordRate& r : rates) {
    out << r.keyword << ',' << r.hate << ',' << r.not_hate << ','
        << (r.fraction ? fixed(*r.fraction, 6) : std::string("null")) << '\n';
  }
}

std::vector<ClassShare> class_distribution(const VoteCounts& category_counts) {
  std::size_t total = 0;
  for (std::size_t n : category_counts) total += n;
  std::vector<ClassShare> out;
  for (Category c : kAllCategories) {
    const std::size_t n = category_counts[static_cast<std::size_t>(c)];
    out.push_back({std::string(category_name(c)), n,
                   total ? 100.0 * static_cast<double>(n) / static_cast<double>(total) : 0.0});
  }
  return out;
}

std::vector<ClassShare> binary_distribution(std::size_t hate, std::size_t not_hate) {
  const double total = static_cast<double>(hate + not_hate);
  auto pct = [&](std::size_t n) { return total > 0 ? 100.0 * static_cast<double>(n) / total : 0.0; };
  return {{"hate", hate, pct(hate)}, {"not_hate", not_hate, pct(not_hate)}};
}

void write_distribution_csv(std::span<const ClassShare> shares, std::ostream& out) {
  out << "class,count,percent\n";
  for (const ClassShare& s : shares) out << s.name << ',' << s.count << ',' << fixed(s.percent, 2) << '\n';
}

PrepareResult prepare_corpus(std::span<const TweetRecord> records, const PrepareOptions& options) {
  options.rules.validate();
  PrepareResult result;
  for (const TweetRecord& r : records) {
    RecordOutcome outcome;
    outcome.id = r.id;
    outcome.filter = filter_tweet(r, options.rules);
    if (outcome.filter.keep) {
      const GateDecision gate =
          gate_image_by_text_probability(r, options.rules.text_probability_threshold);
      outcome.gate = gate;
      const bool passes = gate == GateDecision::kKeep ||
                          (gate == GateDecision::kUngated && options.keep_ungated);
      if (passes) {
        Aggregate agg = r.annotations.empty()
                            ? Aggregate{}
                            : aggregate_annotations(r.annotations, options.min_annotation_seconds);
        if (agg.labelable) result.examples.push_back(make_labeled_example(r, agg));
        outcome.aggregate = agg;
      }
    }
    result.outcomes.push_back(std::move(outcome));
  }
  const auto splits =
      build_splits(result.examples, options.val_size, options.test_size, options.seed);
  for (std::size_t i = 0; i < splits.size(); ++i) result.examples[i].split = splits[i];
  return result;
}

}  // namespace mfuse
