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

#include "mvfs/eval.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

#include "mvfs/error.h"
#include "mvfs/select.h"
#include "mvfs/util.h"

namespace mvfs {

namespace {

double SquaredDistance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void CheckSameShape(const BinaryMatrix& truth, std::size_t rows, std::size_t cols,
                    const char* what) {
  if (truth.rows() != rows || truth.cols() != cols) {
    throw Error(ErrorCode::kShapeMismatch,
                std::string(what) + " is " + std::to_string(rows) + "x" + std::to_string(cols) +
                    ", truth is " + std::to_string(truth.rows()) + "x" +
                    std::to_string(truth.cols()));
  }
}

std::vector<std::size_t> LabelCounts(const MlknnModel& model,
                                     std::span<const std::size_t> neighbors) {
  std::vector<std::size_t> counts(model.labels.cols(), 0);
  for (std::size_t nb : neighbors) {
    for (std::size_t j = 0; j < counts.size(); ++j) counts[j] += model.labels(nb, j);
  }
  return counts;
}

}  // namespace

std::vector<std::size_t> NearestNeighbors(const Matrix& reference, std::span<const double> query,
                                          std::size_t k, std::optional<std::size_t> exclude) {
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(reference.rows());
  for (std::size_t i = 0; i < reference.rows(); ++i) {
    if (exclude && *exclude == i) continue;
    dist.emplace_back(SquaredDistance(reference.row(i), query), i);
  }
  k = std::min(k, dist.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = dist[i].second;
  return out;
}

MlknnModel MlknnFit(const Matrix& features, const BinaryMatrix& labels, std::size_t k,
                    double smoothing) {
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  const std::size_t c = labels.cols();
  if (labels.rows() != n) {
    throw Error(ErrorCode::kShapeMismatch, "features have " + std::to_string(n) +
                                               " rows, labels " + std::to_string(labels.rows()));
  }
  if (k == 0 || k >= n) {
    throw Error(ErrorCode::kTooFewSamples,
                "ML-kNN needs k < n, got k " + std::to_string(k) + ", n " + std::to_string(n));
  }
  for (double x : features.data()) {
    if (!std::isfinite(x)) throw Error(ErrorCode::kParseError, "non-finite training feature");
  }

  MlknnModel m;
  m.k = k;
  m.smoothing = smoothing;
  m.labels = labels;
  m.mean.assign(d, 0.0);
  m.scale.assign(d, 1.0);
  for (std::size_t a = 0; a < d; ++a) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += features(i, a);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (features(i, a) - mean) * (features(i, a) - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    m.mean[a] = mean;
    m.scale[a] = sd > 0.0 ? sd : 1.0;
  }
  m.train = Matrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < d; ++a) m.train(i, a) = (features(i, a) - m.mean[a]) / m.scale[a];
  }

  m.prior.resize(c);
  for (std::size_t j = 0; j < c; ++j) {
    std::size_t holders = 0;
    for (std::size_t i = 0; i < n; ++i) holders += labels(i, j);
    m.prior[j] = (smoothing + static_cast<double>(holders)) /
                 (2.0 * smoothing + static_cast<double>(n));
  }

  m.count_with = BasicMatrix<std::int64_t>(c, k + 1, 0);
  m.count_without = BasicMatrix<std::int64_t>(c, k + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto neighbors = NearestNeighbors(m.train, m.train.row(i), k, i);
    const auto counts = LabelCounts(m, neighbors);
    for (std::size_t j = 0; j < c; ++j) {
      if (labels(i, j)) {
        ++m.count_with(j, counts[j]);
      } else {
        ++m.count_without(j, counts[j]);
      }
    }
  }

  m.likelihood_with = Matrix(c, k + 1);
  m.likelihood_without = Matrix(c, k + 1);
  const double kk = static_cast<double>(k + 1);
  for (std::size_t j = 0; j < c; ++j) {
    std::int64_t total_with = 0;
    std::int64_t total_without = 0;
    for (std::size_t t = 0; t <= k; ++t) {
      total_with += m.count_with(j, t);
      total_without += m.count_without(j, t);
    }
    for (std::size_t t = 0; t <= k; ++t) {
      m.likelihood_with(j, t) = (smoothing + static_cast<double>(m.count_with(j, t))) /
                                (smoothing * kk + static_cast<double>(total_with));
      m.likelihood_without(j, t) = (smoothing + static_cast<double>(m.count_without(j, t))) /
                                   (smoothing * kk + static_cast<double>(total_without));
    }
  }
  return m;
}

MlknnPrediction MlknnPredict(const MlknnModel& model, const Matrix& features) {
  const std::size_t d = model.mean.size();
  if (features.cols() != d) {
    throw Error(ErrorCode::kShapeMismatch, "model was fit on " + std::to_string(d) +
                                               " columns, got " +
                                               std::to_string(features.cols()));
  }
  const std::size_t c = model.prior.size();
  MlknnPrediction out{Matrix(features.rows(), c), BinaryMatrix(features.rows(), c)};
  std::vector<double> x(d);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    for (std::size_t a = 0; a < d; ++a) x[a] = (features(i, a) - model.mean[a]) / model.scale[a];
    const auto neighbors = NearestNeighbors(model.train, x, model.k);
    const auto counts = LabelCounts(model, neighbors);
    for (std::size_t j = 0; j < c; ++j) {
      const double yes = model.prior[j] * model.likelihood_with(j, counts[j]);
      const double no = (1.0 - model.prior[j]) * model.likelihood_without(j, counts[j]);
      const double conf = yes / (yes + no);
      out.confidence(i, j) = conf;
      out.decisions(i, j) = conf > 0.5 ? 1 : 0;
    }
  }
  return out;
}

double MetricAp(const BinaryMatrix& truth, const Matrix& confidence) {
  CheckSameShape(truth, confidence.rows(), confidence.cols(), "confidence");
  const std::size_t n = truth.rows();
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t j = 0; j < truth.cols(); ++j) {
    double sum = 0.0;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!truth(i, j)) continue;
      ++positives;
      std::size_t above = 0;
      std::size_t above_pos = 0;
      for (std::size_t q = 0; q < n; ++q) {
        if (confidence(q, j) >= confidence(i, j)) {
          ++above;
          above_pos += truth(q, j);
        }
      }
      sum += static_cast<double>(above_pos) / static_cast<double>(above);
    }
    if (positives == 0) continue;
    total += sum / static_cast<double>(positives);
    ++used;
  }
  if (used == 0) throw Error(ErrorCode::kNoPositives, "no label has a positive sample");
  return total / static_cast<double>(used);
}

double MetricMacroAuc(const BinaryMatrix& truth, const Matrix& confidence) {
  CheckSameShape(truth, confidence.rows(), confidence.cols(), "confidence");
  const std::size_t n = truth.rows();
  double total = 0.0;
  std::size_t used = 0;
  std::vector<std::size_t> order(n);
  std::vector<double> rank(n);
  for (std::size_t j = 0; j < truth.cols(); ++j) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) pos += truth(i, j);
    const std::size_t neg = n - pos;
    if (pos == 0 || neg == 0) continue;
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return confidence(a, j) < confidence(b, j);
    });
    for (std::size_t a = 0; a < n;) {
      std::size_t b = a;
      while (b + 1 < n && confidence(order[b + 1], j) == confidence(order[a], j)) ++b;
      const double avg = (static_cast<double>(a + 1) + static_cast<double>(b + 1)) / 2.0;
      for (std::size_t q = a; q <= b; ++q) rank[order[q]] = avg;
      a = b + 1;
    }
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (truth(i, j)) rank_sum += rank[i];
    }
    const double p = static_cast<double>(pos);
    total += (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
    ++used;
  }
  if (used == 0) throw Error(ErrorCode::kNoPositives, "no label has both classes");
  return total / static_cast<double>(used);
}

double MetricLrap(const BinaryMatrix& truth, const Matrix& confidence) {
  CheckSameShape(truth, confidence.rows(), confidence.cols(), "confidence");
  const std::size_t c = truth.cols();
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < truth.rows(); ++i) {
    double sum = 0.0;
    std::size_t positives = 0;
    for (std::size_t j = 0; j < c; ++j) {
      if (!truth(i, j)) continue;
      ++positives;
      std::size_t rank = 0;
      std::size_t rank_pos = 0;
      for (std::size_t q = 0; q < c; ++q) {
        if (confidence(i, q) >= confidence(i, j)) {
          ++rank;
          rank_pos += truth(i, q);
        }
      }
      sum += static_cast<double>(rank_pos) / static_cast<double>(rank);
    }
    if (positives == 0) continue;
    total += sum / static_cast<double>(positives);
    ++used;
  }
  if (used == 0) throw Error(ErrorCode::kNoPositives, "no sample has a positive label");
  return total / static_cast<double>(used);
}

double MetricHammingLoss(const BinaryMatrix& truth, const BinaryMatrix& decisions) {
  CheckSameShape(truth, decisions.rows(), decisions.cols(), "decisions");
  if (truth.data().empty()) throw Error(ErrorCode::kShapeMismatch, "empty label matrix");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < truth.data().size(); ++i) {
    wrong += (truth.data()[i] != 0) != (decisions.data()[i] != 0);
  }
  return static_cast<double>(wrong) / static_cast<double>(truth.data().size());
}

const char* MetricName(Metric metric) {
  switch (metric) {
    case Metric::kAp: return "AP";
    case Metric::kAuc: return "AUC";
    case Metric::kLrap: return "LRAP";
    case Metric::kHl: return "HL";
  }
  return "?";
}

std::optional<Metric> ParseMetric(std::string_view name) {
  for (std::size_t m = 0; m < kNumMetrics; ++m) {
    if (name == MetricName(static_cast<Metric>(m))) return static_cast<Metric>(m);
  }
  return std::nullopt;
}

MetricValues EvaluateSelection(const Matrix& train_x, const BinaryMatrix& train_y,
                               const Matrix& test_x, const BinaryMatrix& test_y, std::size_t k,
                               double smoothing) {
  const MlknnModel model = MlknnFit(train_x, train_y, k, smoothing);
  const MlknnPrediction pred = MlknnPredict(model, test_x);
  MetricValues v{MetricAp(test_y, pred.confidence), MetricMacroAuc(test_y, pred.confidence),
                 MetricLrap(test_y, pred.confidence), MetricHammingLoss(test_y, pred.decisions)};
  for (std::size_t m = 0; m < kNumMetrics; ++m) {
    if (!(v[m] >= 0.0 && v[m] <= 1.0)) {
      throw Error(ErrorCode::kInternal, std::string(MetricName(static_cast<Metric>(m))) +
                                            " out of [0, 1]: " + FormatDouble(v[m]));
    }
  }
  return v;
}

std::vector<double> DefaultRatios() {
  std::vector<double> r;
  for (int i = 1; i <= 10; ++i) r.push_back(0.02 * i);
  return r;
}

ProtocolMethod FixedScoresMethod(std::string name, std::vector<double> scores) {
  return {std::move(name),
          [scores = std::move(scores)](std::size_t, const SplitIndices&) { return scores; }};
}

ProtocolMethod RandomMethod(std::size_t d, std::uint64_t base_seed) {
  return {"random", [d, base_seed](std::size_t repeat, const SplitIndices&) {
            return RandomScores(d, base_seed + repeat);
          }};
}

const AggregateRow& EvalReport::Get(std::string_view method, std::optional<double> ratio,
                                    Metric metric) const {
  for (const auto& a : aggregates) {
    if (a.method == method && a.metric == metric && a.ratio.has_value() == ratio.has_value() &&
        (!ratio || std::abs(*a.ratio - *ratio) < 1e-12)) {
      return a;
    }
  }
  throw Error(ErrorCode::kInvalidArgument, "no aggregate for method " + std::string(method));
}

std::vector<std::string> EvalReport::Methods() const {
  std::vector<std::string> out;
  for (const auto& a : aggregates) {
    if (std::find(out.begin(), out.end(), a.method) == out.end()) out.push_back(a.method);
  }
  return out;
}

namespace {

struct MeanStd {
  double mean;
  double std;
};

MeanStd Summarize(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double sd = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
  return {mean, sd};
}

}  // namespace

EvalReport RunProtocol(const MultiViewDataset& dataset, const std::vector<ProtocolMethod>& methods,
                       const ProtocolConfig& config) {
  if (config.repeats == 0) throw Error(ErrorCode::kConfigError, "repeats must be >= 1");
  if (config.ratios.empty()) throw Error(ErrorCode::kConfigError, "no selection ratios");
  if (methods.empty()) throw Error(ErrorCode::kConfigError, "no methods to evaluate");
  const std::size_t d = dataset.num_features();
  for (double r : config.ratios) RatioToK(r, d);
  const auto feature_view = dataset.FeatureViews();

  const std::size_t nm = methods.size();
  const std::size_t nr = config.ratios.size();
  // results[repeat][method][ratio]
  std::vector<std::vector<std::vector<RepeatRow>>> results(
      config.repeats, std::vector<std::vector<RepeatRow>>(nm, std::vector<RepeatRow>(nr)));

  auto run_repeat = [&](std::size_t rep) {
    const std::uint64_t seed = config.base_seed + rep;
    const SplitIndices split = Split(dataset.num_samples(), config.train_fraction, seed);
    const MultiViewDataset train = dataset.SelectRows(split.train_ids);
    const MultiViewDataset test = dataset.SelectRows(split.test_ids);
    for (std::size_t m = 0; m < nm; ++m) {
      const std::vector<double> scores = methods[m].scores(rep, split);
      if (scores.size() != d) {
        throw Error(ErrorCode::kLengthMismatch, "method " + methods[m].name + " returned " +
                                                    std::to_string(scores.size()) + " scores for " +
                                                    std::to_string(d) + " features");
      }
      for (std::size_t q = 0; q < nr; ++q) {
        const double ratio = config.ratios[q];
        const SelectionResult sel = TopK(scores, RatioToK(ratio, d), feature_view, ratio);
        const std::vector<std::size_t> ids(sel.selected.begin(), sel.selected.end());
        RepeatRow& row = results[rep][m][q];
        row.method = methods[m].name;
        row.ratio = ratio;
        row.k = sel.k;
        row.repeat = rep;
        row.split_seed = seed;
        row.values = EvaluateSelection(train.GatherFeatures(ids), train.labels(),
                                       test.GatherFeatures(ids), test.labels(), config.knn_k,
                                       config.smoothing);
      }
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(config.workers, config.repeats));
  if (workers == 1) {
    for (std::size_t rep = 0; rep < config.repeats; ++rep) run_repeat(rep);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t rep = next++; rep < config.repeats; rep = next++) {
          try {
            run_repeat(rep);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
  }

  EvalReport report;
  report.config = config;
  for (std::size_t m = 0; m < nm; ++m) {
    for (std::size_t q = 0; q < nr; ++q) {
      for (std::size_t rep = 0; rep < config.repeats; ++rep) {
        report.rows.push_back(results[rep][m][q]);
      }
    }
  }
  for (std::size_t m = 0; m < nm; ++m) {
    for (std::size_t q = 0; q < nr; ++q) {
      for (std::size_t k = 0; k < kNumMetrics; ++k) {
        std::vector<double> xs;
        for (std::size_t rep = 0; rep < config.repeats; ++rep) {
          xs.push_back(results[rep][m][q].values[k]);
        }
        const MeanStd s = Summarize(xs);
        report.aggregates.push_back({methods[m].name, config.ratios[q], static_cast<Metric>(k),
                                     s.mean, s.std, config.repeats, config.base_seed});
      }
    }
    for (std::size_t k = 0; k < kNumMetrics; ++k) {
      std::vector<double> per_repeat;
      for (std::size_t rep = 0; rep < config.repeats; ++rep) {
        double sum = 0.0;
        for (std::size_t q = 0; q < nr; ++q) sum += results[rep][m][q].values[k];
        per_repeat.push_back(sum / static_cast<double>(nr));
      }
      const MeanStd s = Summarize(per_repeat);
      report.aggregates.push_back({methods[m].name, std::nullopt, static_cast<Metric>(k), s.mean,
                                   s.std, config.repeats, config.base_seed});
    }
  }
  return report;
}

std::string FormatEvalCsv(const EvalReport& report) {
  std::string out = "method,ratio,metric,mean,std,repeats,seed\n";
  for (const auto& a : report.aggregates) {
    out += a.method + "," + (a.ratio ? FormatDouble(*a.ratio) : std::string("all")) + "," +
           MetricName(a.metric) + "," + FormatDouble(a.mean) + "," + FormatDouble(a.std) + "," +
           std::to_string(a.repeats) + "," + std::to_string(a.seed) + "\n";
  }
  return out;
}

std::vector<AggregateRow> ParseEvalCsv(std::string_view text) {
  std::vector<AggregateRow> rows;
  std::size_t line_no = 0;
  for (const auto& raw : SplitString(text, '\n')) {
    ++line_no;
    const std::string line = Trim(raw);
    if (line.empty() || line_no == 1) continue;
    const auto cells = SplitString(line, ',');
    try {
      if (cells.size() != 7) throw std::invalid_argument("cells");
      AggregateRow a;
      a.method = cells[0];
      if (cells[1] != "all") a.ratio = std::stod(cells[1]);
      const auto metric = ParseMetric(cells[2]);
      if (!metric) throw std::invalid_argument("metric");
      a.metric = *metric;
      a.mean = std::stod(cells[3]);
      a.std = std::stod(cells[4]);
      a.repeats = std::stoul(cells[5]);
      a.seed = std::stoull(cells[6]);
      rows.push_back(std::move(a));
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::kParseError, "eval report line " + std::to_string(line_no) +
                                              " is malformed");
    }
  }
  return rows;
}

std::string FormatRepeatCsv(const EvalReport& report) {
  std::string out = "method,ratio,k,repeat,split_seed,ap,auc,lrap,hl\n";
  for (const auto& r : report.rows) {
    out += r.method + "," + FormatDouble(r.ratio) + "," + std::to_string(r.k) + "," +
           std::to_string(r.repeat) + "," + std::to_string(r.split_seed);
    for (double v : r.values) out += "," + FormatDouble(v);
    out += "\n";
  }
  return out;
}

}  // namespace mvfs
