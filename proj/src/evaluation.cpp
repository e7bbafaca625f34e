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

#include "mfuse/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

#include "mfuse/error.hpp"
#include "mfuse/random.hpp"

namespace mfuse {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Counts {
  std::size_t pos = 0;
  std::size_t neg = 0;
};

Counts validate(std::span<const ScoredExample> scored, const char* who) {
  Counts c;
  for (const ScoredExample& s : scored) {
    if (!std::isfinite(s.score)) {
      fail(ErrorKind::kPrecondition, std::string(who) + ": non-finite score for '" + s.id + "'");
    }
    if (s.label == 1) {
      ++c.pos;
    } else if (s.label == 0) {
      ++c.neg;
    } else {
      fail(ErrorKind::kPrecondition, std::string(who) + ": label must be 0 or 1");
    }
  }
  return c;
}

Counts require_both(std::span<const ScoredExample> scored, const char* who) {
  const Counts c = validate(scored, who);
  if (c.pos == 0 || c.neg == 0) {
    fail(ErrorKind::kPrecondition, std::string(who) + ": needs both classes, got " +
                                       std::to_string(c.pos) + " positive and " +
                                       std::to_string(c.neg) + " negative examples");
  }
  return c;
}

// Indices sorted by score descending.
std::vector<std::size_t> by_score_desc(std::span<const ScoredExample> scored) {
  std::vector<std::size_t> order(scored.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scored[a].score > scored[b].score; });
  return order;
}

// Calls visit(threshold, tp, fp) after each group of tied scores, walking
// thresholds from the highest score down.
template <typename Visit>
void sweep(std::span<const ScoredExample> scored, Visit visit) {
  const auto order = by_score_desc(scored);
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scored[order[i]].score;
    while (i < order.size() && scored[order[i]].score == threshold) {
      (scored[order[i]].label == 1 ? tp : fp) += 1;
      ++i;
    }
    visit(threshold, tp, fp);
  }
}

double f1(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 || tp == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string real(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void require_rows(std::span<const ResultRow> rows) {
  if (rows.empty()) fail(ErrorKind::kInvalidArgument, "results table needs at least one row");
  for (const ResultRow& r : rows) {
    if (r.model.empty()) fail(ErrorKind::kInvalidArgument, "results table row has an empty model name");
  }
}

}  // namespace

double auc_roc(std::span<const ScoredExample> scored) {
  const Counts c = require_both(scored, "auc_roc");
  std::vector<std::size_t> order(scored.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scored[a].score < scored[b].score; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scored[order[j]].score == scored[order[i]].score) ++j;
    // 1-based ranks i+1..j share their mean.
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (scored[order[k]].label == 1) rank_sum += midrank;
    }
    i = j;
  }
  const double p = static_cast<double>(c.pos), n = static_cast<double>(c.neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

double f1_at_threshold(std::span<const ScoredExample> scored, double threshold) {
  const Counts c = validate(scored, "f1_at_threshold");
  if (c.pos == 0) fail(ErrorKind::kPrecondition, "f1_at_threshold: no positive examples");
  std::size_t tp = 0, fp = 0;
  for (const ScoredExample& s : scored) {
    if (s.score >= threshold) (s.label == 1 ? tp : fp) += 1;
  }
  return f1(tp, fp, c.pos - tp);
}

FScores f_scores(std::span<const ScoredExample> scored) {
  const Counts c = validate(scored, "f_scores");
  if (c.pos == 0) fail(ErrorKind::kPrecondition, "f_scores: no positive examples");
  FScores out;
  out.f1_at_half = f1_at_threshold(scored, 0.5);
  out.max_f1 = 0.0;  // the +inf threshold predicts nothing
  out.best_threshold = kInf;
  sweep(scored, [&](double threshold, std::size_t tp, std::size_t fp) {
    const double f = f1(tp, fp, c.pos - tp);
    if (f > out.max_f1) {
      out.max_f1 = f;
      out.best_threshold = threshold;
    }
  });
  // -inf predicts everything, same counts as the lowest score.
  return out;
}

double balanced_accuracy(std::span<const ScoredExample> scored, double threshold) {
  const Counts c = require_both(scored, "balanced_accuracy");
  std::size_t tp = 0, tn = 0;
  for (const ScoredExample& s : scored) {
    const bool predicted = s.score >= threshold;
    if (s.label == 1 && predicted) ++tp;
    if (s.label == 0 && !predicted) ++tn;
  }
  const double tpr = static_cast<double>(tp) / static_cast<double>(c.pos);
  const double tnr = static_cast<double>(tn) / static_cast<double>(c.neg);
  return 100.0 * 0.5 * (tpr + tnr);
}

Curves curves(std::span<const ScoredExample> scored) {
  const Counts c = require_both(scored, "curves");
  const double p = static_cast<double>(c.pos), n = static_cast<double>(c.neg);
  Curves out;
  out.roc.push_back({kInf, 0.0, 0.0});
  sweep(scored, [&](double threshold, std::size_t tp, std::size_t fp) {
    const double tpd = static_cast<double>(tp), fpd = static_cast<double>(fp);
    out.roc.push_back({threshold, fpd / n, tpd / p});
    out.pr.push_back({threshold, tpd / p, tpd / (tpd + fpd)});
  });
  return out;
}

double trapezoid_area(std::span<const CurvePoint> points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i].x - points[i - 1].x) * (points[i].y + points[i - 1].y) / 2.0;
  }
  return area;
}

void write_curve_csv(std::span<const CurvePoint> points, std::ostream& out) {
  out << "threshold,x,y\n";
  for (const CurvePoint& pt : points) {
    out << real(pt.threshold) << ',' << real(pt.x) << ',' << real(pt.y) << '\n';
  }
}

EvalReport evaluate_scores(std::span<const ScoredExample> scored, double threshold) {
  const Counts c = require_both(scored, "evaluate_scores");
  EvalReport r;
  const FScores f = f_scores(scored);
  r.f1_at_half = threshold == 0.5 ? f.f1_at_half : f1_at_threshold(scored, threshold);
  r.max_f1 = f.max_f1;
  r.best_threshold = f.best_threshold;
  r.auc = auc_roc(scored);
  r.balanced_accuracy = balanced_accuracy(scored, threshold) / 100.0;
  r.examples = scored.size();
  r.positives = c.pos;
  r.curves = curves(scored);
  return r;
}

std::vector<ScoredExample> random_scores(std::span<const std::int64_t> labels, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ScoredExample> out;
  out.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out.push_back({std::to_string(i), rng.uniform(), labels[i]});
  }
  return out;
}

std::string format_result_row(const ResultRow& row) {
  if (row.model.empty()) fail(ErrorKind::kInvalidArgument, "results table row has an empty model name");
  return row.model + ", " + (row.inputs.empty() ? "-" : row.inputs) + ", " +
         fixed(row.report.max_f1, 3) + ", " + fixed(row.report.auc, 3) + ", " +
         fixed(100.0 * row.report.balanced_accuracy, 1);
}

void write_results_csv(std::span<const ResultRow> rows, std::ostream& out) {
  require_rows(rows);
  out << "model,inputs,F,AUC,ACC\n";
  for (const ResultRow& r : rows) {
    // Input lists contain commas ("TT,IT"), so that column is quoted.
    out << r.model << ",\"" << (r.inputs.empty() ? "-" : r.inputs) << "\","
        << fixed(r.report.max_f1, 3) << ',' << fixed(r.report.auc, 3) << ','
        << fixed(100.0 * r.report.balanced_accuracy, 1) << '\n';
  }
}

std::string results_table_text(std::span<const ResultRow> rows) {
  require_rows(rows);
  std::vector<std::array<std::string, 5>> cells;
  cells.push_back({"Model", "Inputs", "F", "AUC", "ACC"});
  for (const ResultRow& r : rows) {
    cells.push_back({r.model, r.inputs.empty() ? "-" : r.inputs, fixed(r.report.max_f1, 3),
                     fixed(r.report.auc, 3), fixed(100.0 * r.report.balanced_accuracy, 1)});
  }
  std::array<std::size_t, 5> width{};
  for (const auto& row : cells) {
    for (std::size_t i = 0; i < 5; ++i) width[i] = std::max(width[i], row[i].size());
  }
  std::string out;
  for (const auto& row : cells) {
    for (std::size_t i = 0; i < 5; ++i) {
      const std::string pad(width[i] - row[i].size(), ' ');
      out += i < 2 ? row[i] + pad : pad + row[i];  // text left, numbers right
      out += i + 1 < 5 ? "  " : "\n";
    }
  }
  return out;
}

void write_scores_csv(std::span<const ScoredExample> scored, std::ostream& out) {
  out << "id,score,label\n";
  for (const ScoredExample& s : scored) out << s.id << ',' << real(s.score) << ',' << s.label << '\n';
}

}  // namespace mfuse
