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

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace mfuse {

struct ScoredExample {
  std::string id;
  double score = 0.0;      // probability of hate
  std::int64_t label = 0;  // 1 = hate
};

// Metric preconditions (class presence, finite scores, 0/1 labels) throw
// Error(kPrecondition).

// Mann-Whitney statistic with ties counted 1/2, via midranks.
double auc_roc(std::span<const ScoredExample> scored);

struct FScores {
  double f1_at_half = 0.0;
  double max_f1 = 0.0;
  double best_threshold = 0.0;  // highest threshold attaining max_f1; may be +/-inf
};

// Positive prediction iff score >= threshold. The sweep covers every
// distinct score plus +inf and -inf; F1 is 0 when nothing is predicted.
FScores f_scores(std::span<const ScoredExample> scored);
double f1_at_threshold(std::span<const ScoredExample> scored, double threshold);

// Mean per-class recall at `threshold`, in percent.
double balanced_accuracy(std::span<const ScoredExample> scored, double threshold = 0.5);

struct CurvePoint {
  double threshold = 0.0;
  double x = 0.0;
  double y = 0.0;
};

struct Curves {
  std::vector<CurvePoint> roc;  // (fpr, tpr), from (0,0) at +inf to (1,1)
  std::vector<CurvePoint> pr;   // (recall, precision), one point per distinct score
};

// Points ordered by threshold descending.
Curves curves(std::span<const ScoredExample> scored);
double trapezoid_area(std::span<const CurvePoint> points);
void write_curve_csv(std::span<const CurvePoint> points, std::ostream& out);

struct EvalReport {
  double f1_at_half = 0.0;
  double max_f1 = 0.0;
  double best_threshold = 0.0;
  double auc = 0.0;
  double balanced_accuracy = 0.0;  // fraction in [0,1]; tables print percent
  std::size_t examples = 0;
  std::size_t positives = 0;
  Curves curves;
};

EvalReport evaluate_scores(std::span<const ScoredExample> scored, double threshold = 0.5);

// Uniform(0,1) hate scores for the given labels.
std::vector<ScoredExample> random_scores(std::span<const std::int64_t> labels, std::uint64_t seed);

struct ResultRow {
  std::string model;
  std::string inputs;  // "-" when not applicable
  EvalReport report;
};

// Columns model, inputs, F (max-F), AUC, ACC (percent); F and AUC to three
// decimals, ACC to one.
void write_results_csv(std::span<const ResultRow> rows, std::ostream& out);
std::string results_table_text(std::span<const ResultRow> rows);
std::string format_result_row(const ResultRow& row);  // "Random, -, 0.666, 0.499, 50.2"

void write_scores_csv(std::span<const ScoredExample> scored, std::ostream& out);

}  // namespace mfuse
