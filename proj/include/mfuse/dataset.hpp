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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mfuse {

enum class Category {
  kNotHate,
  kRacist,
  kSexist,
  kHomophobic,
  kReligionAttack,
  kOtherHate,
};

inline constexpr std::size_t kCategoryCount = 6;
inline constexpr std::array<Category, kCategoryCount> kAllCategories = {
    Category::kNotHate,    Category::kRacist,         Category::kSexist,
    Category::kHomophobic, Category::kReligionAttack, Category::kOtherHate};

std::string_view category_name(Category c) noexcept;
std::optional<Category> parse_category(std::string_view name) noexcept;
constexpr bool is_hate(Category c) noexcept { return c != Category::kNotHate; }

using VoteCounts = std::array<std::size_t, kCategoryCount>;

struct WorkerAnnotation {
  std::string worker_id;
  Category category = Category::kNotHate;
  double duration_seconds = 0.0;

  friend bool operator==(const WorkerAnnotation&, const WorkerAnnotation&) = default;
};

struct TweetRecord {
  std::string id;
  std::string tweet_text;
  bool is_retweet = false;
  std::optional<std::string> image_ref;
  std::string image_text;  // OCR output, possibly empty
  std::optional<double> image_text_probability;
  std::vector<WorkerAnnotation> annotations;

  friend bool operator==(const TweetRecord&, const TweetRecord&) = default;
};

// ---------------------------------------------------------------------------
// Corpus files

struct LineDiagnostic {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct CorpusImport {
  std::vector<TweetRecord> records;
  std::vector<LineDiagnostic> errors;
};

// Encodes/decodes one corpus line. The default codec is JSON lines; other
// formats plug in by implementing this interface.
class RecordCodec {
 public:
  virtual ~RecordCodec() = default;
  // Throws Error(kData) describing what is wrong with the line.
  virtual TweetRecord decode(std::string_view line) const = 0;
  virtual std::string encode(const TweetRecord& record) const = 0;
};

const RecordCodec& json_lines_codec();

CorpusImport parse_corpus(std::istream& in, const RecordCodec& codec = json_lines_codec());
// Throws Error(kIo) when the file cannot be read; malformed lines are
// reported in CorpusImport::errors.
CorpusImport import_corpus(const std::filesystem::path& path,
                           const RecordCodec& codec = json_lines_codec());
void export_corpus(std::span<const TweetRecord> records, const std::filesystem::path& path,
                   const RecordCodec& codec = json_lines_codec());

// ---------------------------------------------------------------------------
// Filtering

struct FilterRuleSet {
  std::size_t min_word_count = 3;
  std::vector<std::string> banned_terms;
  std::vector<std::string> keyword_list;
  double text_probability_threshold = 0.3;

  void validate() const;
};

enum class FilterReason { kKeep, kRetweet, kTooShort, kBannedTerm, kNoImage };

std::string_view filter_reason_name(FilterReason r) noexcept;

struct FilterDecision {
  bool keep = true;
  FilterReason reason = FilterReason::kKeep;

  friend bool operator==(const FilterDecision&, const FilterDecision&) = default;
};

inline constexpr std::array<FilterReason, 4> kDefaultFilterOrder = {
    FilterReason::kRetweet, FilterReason::kTooShort, FilterReason::kBannedTerm,
    FilterReason::kNoImage};

FilterDecision filter_tweet(const TweetRecord& record, const FilterRuleSet& rules);
// Same rules evaluated in a caller-chosen order; the reason is the first rule
// that fires in that order.
FilterDecision filter_tweet(const TweetRecord& record, const FilterRuleSet& rules,
                            std::span<const FilterReason> order);

enum class GateDecision { kKeep, kDiscard, kUngated };

std::string_view gate_decision_name(GateDecision g) noexcept;

// Discards images whose aggregate text probability exceeds `threshold`.
GateDecision gate_image_by_text_probability(const TweetRecord& record, double threshold);

// ---------------------------------------------------------------------------
// Annotation aggregation

enum class BinaryLabel : std::int64_t { kNotHate = 0, kHate = 1 };

struct Aggregate {
  bool labelable = false;  // false when every annotation was a fast hit
  BinaryLabel label = BinaryLabel::kNotHate;
  Category category = Category::kNotHate;
  std::size_t retained = 0;
  VoteCounts votes{};
  bool binary_tie = false;  // hate and not-hate votes were equal

  friend bool operator==(const Aggregate&, const Aggregate&) = default;
};

inline constexpr double kDefaultMinAnnotationSeconds = 3.0;

// Drops annotations faster than `min_duration`, then takes a binary majority
// of the rest (ties -> not hate). The winning hate category is the plurality
// among retained hate votes, ties broken in enum order.
Aggregate aggregate_annotations(std::span<const WorkerAnnotation> annotations,
                                double min_duration = kDefaultMinAnnotationSeconds);

// ---------------------------------------------------------------------------
// Labeled examples and splits

enum class Split { kTrain, kVal, kTest };

std::string_view split_name(Split s) noexcept;
std::optional<Split> parse_split(std::string_view name) noexcept;

struct LabeledExample {
  std::string id;
  BinaryLabel label = BinaryLabel::kNotHate;
  Category category = Category::kNotHate;
  VoteCounts votes{};
  Split split = Split::kTrain;
  bool binary_tie = false;
  std::string tweet_text;
  std::optional<std::string> image_ref;
  std::string image_text;

  friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

LabeledExample make_labeled_example(const TweetRecord& record, const Aggregate& aggregate);

// Balanced val/test sets (half hate each) by seeded shuffle; the rest is
// train. Returns one split per input example.
std::vector<Split> build_splits(std::span<const LabeledExample> examples, std::size_t val_size,
                                std::size_t test_size, std::uint64_t seed);

void write_examples(std::span<const LabeledExample> examples, const std::filesystem::path& path);
std::vector<LabeledExample> read_examples(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Statistics

struct KeywordRate {
  std::string keyword;
  std::size_t hate = 0;
  std::size_t not_hate = 0;
  std::optional<double> fraction;  // hate / (hate + not_hate), absent when unseen
};

// Whole-token, case-insensitive matches against preprocessed tweet text.
// Sorted by total count descending, then keyword.
std::vector<KeywordRate> keyword_hate_rates(std::span<const LabeledExample> examples,
                                            std::span<const std::string> keywords);

void write_keyword_csv(std::span<const KeywordRate> rates, std::ostream& out);

struct ClassShare {
  std::string name;
  std::size_t count = 0;
  double percent = 0.0;
};

// Per-category shares of the summed counts.
std::vector<ClassShare> class_distribution(const VoteCounts& category_counts);
// Hate / not-hate shares.
std::vector<ClassShare> binary_distribution(std::size_t hate, std::size_t not_hate);

void write_distribution_csv(std::span<const ClassShare> shares, std::ostream& out);

// ---------------------------------------------------------------------------
// End-to-end corpus preparation

struct PrepareOptions {
  FilterRuleSet rules;
  double min_annotation_seconds = kDefaultMinAnnotationSeconds;
  bool keep_ungated = false;
  std::size_t val_size = 0;
  std::size_t test_size = 0;
  std::uint64_t seed = 0;
};

struct RecordOutcome {
  std::string id;
  FilterDecision filter;
  std::optional<GateDecision> gate;          // absent when filtered out
  std::optional<Aggregate> aggregate;        // absent when filtered or gated out
};

struct PrepareResult {
  std::vector<RecordOutcome> outcomes;
  std::vector<LabeledExample> examples;  // labelable, with splits assigned
};

PrepareResult prepare_corpus(std::span<const TweetRecord> records, const PrepareOptions& options);

}  // namespace mfuse
