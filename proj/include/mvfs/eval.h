/*
 * Copyright 2026 The mvfs Authors.
 *
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

#ifndef MVFS_EVAL_H_
#define MVFS_EVAL_H_

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mvfs/dataset.h"
#include "mvfs/matrix.h"

namespace mvfs {

struct MlknnModel {
  std::size_t k = 10;
  double smoothing = 1.0;
  std::vector<double> prior;  // P(H_j)
  // Training samples whose k neighbors include exactly t holders of label
  // j, split by whether the sample holds j. c x (k + 1).
  BasicMatrix<std::int64_t> count_with;
  BasicMatrix<std::int64_t> count_without;
  // Smoothed P(E_t | H_j) and P(E_t | not H_j). c x (k + 1).
  Matrix likelihood_with;
  Matrix likelihood_without;
  // Standardized training matrix and the train-split column statistics.
  Matrix train;
  std::vector<double> mean;
  std::vector<double> scale;
  BinaryMatrix labels;
};

// Standardizes columns with train mean and population standard deviation
// (constant columns are centered only), finds the k nearest other training
// samples by Euclidean distance (ties to the lower index) and fills the
// count tables. Throws TooFewSamples unless k < n.
MlknnModel MlknnFit(const Matrix& features, const BinaryMatrix& labels, std::size_t k = 10,
                    double smoothing = 1.0);

struct MlknnPrediction {
  Matrix confidence;
  BinaryMatrix decisions;  // confidence > 0.5
};

// Throws ShapeMismatch when the column count differs from training.
MlknnPrediction MlknnPredict(const MlknnModel& model, const Matrix& features);

// Indices of the k nearest rows of `reference` to `query` (squared
// Euclidean, ties by index), skipping `exclude` when set.
std::vector<std::size_t> NearestNeighbors(const Matrix& reference, std::span<const double> query,
                                          std::size_t k,
                                          std::optional<std::size_t> exclude = std::nullopt);

// Label-macro average precision over labels with at least one positive.
double MetricAp(const BinaryMatrix& truth, const Matrix& confidence);
// Mean Mann-Whitney AUC (average ranks for ties) over labels with both
// classes present.
double MetricMacroAuc(const BinaryMatrix& truth, const Matrix& confidence);
// Sample-wise label ranking average precision over samples with at least
// one positive; a label's rank counts every label scored at least as high.
double MetricLrap(const BinaryMatrix& truth, const Matrix& confidence);
double MetricHammingLoss(const BinaryMatrix& truth, const BinaryMatrix& decisions);

enum class Metric { kAp = 0, kAuc, kLrap, kHl };
inline constexpr std::size_t kNumMetrics = 4;
const char* MetricName(Metric metric);
std::optional<Metric> ParseMetric(std::string_view name);

using MetricValues = std::array<double, kNumMetrics>;

// Fits on train, predicts test and computes all four metrics. Asserts each
// metric lies in [0, 1].
MetricValues EvaluateSelection(const Matrix& train_x, const BinaryMatrix& train_y,
                               const Matrix& test_x, const BinaryMatrix& test_y,
                               std::size_t k = 10, double smoothing = 1.0);

struct ProtocolConfig {
  std::vector<double> ratios;
  std::size_t repeats = 10;
  std::uint64_t base_seed = 0;
  double train_fraction = 0.7;
  std::size_t knn_k = 10;
  double smoothing = 1.0;
  std::size_t workers = 1;
};

// Ratios 0.02, 0.04, ..., 0.20.
std::vector<double> DefaultRatios();

struct ProtocolMethod {
  std::string name;
  // Feature scores for one repeat, given the repeat index and its split.
  std::function<std::vector<double>(std::size_t repeat, const SplitIndices& split)> scores;
};

// A method whose scores do not depend on the repeat.
ProtocolMethod FixedScoresMethod(std::string name, std::vector<double> scores);
// Fresh uniform scores per repeat, seeded by base_seed + repeat.
ProtocolMethod RandomMethod(std::size_t d, std::uint64_t base_seed);

struct RepeatRow {
  std::string method;
  double ratio = 0.0;
  std::size_t k = 0;
  std::size_t repeat = 0;
  std::uint64_t split_seed = 0;
  MetricValues values{};
  bool operator==(const RepeatRow&) const = default;
};

struct AggregateRow {
  std::string method;
  std::optional<double> ratio;  // empty for the over-ratio mean
  Metric metric = Metric::kAp;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation over repeats
  std::size_t repeats = 0;
  std::uint64_t seed = 0;
  bool operator==(const AggregateRow&) const = default;
};

struct EvalReport {
  ProtocolConfig config;
  std::vector<RepeatRow> rows;  // ordered by method, ratio, repeat
  std::vector<AggregateRow> aggregates;

  // Per-ratio aggregate, or the over-ratio mean when ratio is empty.
  const AggregateRow& Get(std::string_view method, std::optional<double> ratio,
                          Metric metric) const;
  std::vector<std::string> Methods() const;
  bool operator==(const EvalReport& other) const {
    return rows == other.rows && aggregates == other.aggregates;
  }
};

// For each repeat r: split with seed base_seed + r; for each method and
// ratio: select the top k by that repeat's scores, fit ML-kNN on train and
// evaluate on test. Aggregates mean and std per (method, ratio) and the
// over-ratio mean, whose std is taken over the per-repeat ratio averages.
EvalReport RunProtocol(const MultiViewDataset& dataset, const std::vector<ProtocolMethod>& methods,
                       const ProtocolConfig& config);

// method,ratio,metric,mean,std,repeats,seed ("all" marks the over-ratio
// mean).
std::string FormatEvalCsv(const EvalReport& report);
std::vector<AggregateRow> ParseEvalCsv(std::string_view text);
// method,ratio,k,repeat,split_seed,ap,auc,lrap,hl
std::string FormatRepeatCsv(const EvalReport& report);

}  // namespace mvfs

#endif  // MVFS_EVAL_H_
