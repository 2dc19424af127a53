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

#include "mvfs/select.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mvfs/error.h"
#include "mvfs/util.h"

namespace mvfs {

std::size_t RatioToK(double ratio, std::size_t d) {
  if (!(ratio > 0.0 && ratio <= 1.0) || d == 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "ratio must be in (0, 1] and d >= 1, got ratio " + FormatDouble(ratio) +
                    ", d " + std::to_string(d));
  }
  // The epsilon keeps products like 0.2 * 5 = 0.9999999 from rounding down.
  const double k = std::floor(ratio * static_cast<double>(d) + 0.5 + 1e-9);
  return std::max<std::size_t>(1, static_cast<std::size_t>(k));
}

std::vector<std::uint32_t> RankFeatures(std::span<const double> scores) {
  std::vector<std::uint32_t> ids(scores.size());
  std::iota(ids.begin(), ids.end(), 0u);
  std::stable_sort(ids.begin(), ids.end(), [&](std::uint32_t a, std::uint32_t b) {
    return scores[a] > scores[b];
  });
  return ids;
}

SelectionResult TopK(std::span<const double> scores, std::size_t k,
                     std::span<const std::size_t> feature_view, double ratio) {
  if (k > scores.size()) {
    throw Error(ErrorCode::kKTooLarge, "k = " + std::to_string(k) + " exceeds d = " +
                                           std::to_string(scores.size()));
  }
  if (!feature_view.empty() && feature_view.size() != scores.size()) {
    throw Error(ErrorCode::kLengthMismatch, "feature_view and scores differ in length");
  }
  for (double s : scores) {
    if (std::isnan(s)) throw Error(ErrorCode::kInvalidArgument, "score is NaN");
  }
  SelectionResult result;
  result.ratio = ratio;
  result.k = k;
  auto ranked = RankFeatures(scores);
  result.selected.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k));
  if (!feature_view.empty()) {
    for (std::uint32_t id : result.selected) ++result.per_view_counts[feature_view[id]];
  }
  return result;
}

std::vector<double> RandomScores(std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> scores(d);
  for (double& s : scores) s = rng.Uniform();
  return scores;
}

std::vector<double> MaxMiScores(const MiMatrices& mi) {
  std::vector<double> scores(mi.fl.rows(), 0.0);
  for (std::size_t f = 0; f < mi.fl.rows(); ++f) {
    for (std::size_t l = 0; l < mi.fl.cols(); ++l) scores[f] = std::max(scores[f], mi.fl(f, l));
  }
  return scores;
}

std::string FormatScoresCsv(std::span<const double> scores) {
  std::string out = "global_feature_id,score\n";
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out += std::to_string(i) + "," + FormatDouble(scores[i]) + "\n";
  }
  return out;
}

std::vector<double> ParseScoresCsv(std::string_view text) {
  std::vector<double> scores;
  std::size_t line_no = 0;
  for (const auto& raw : SplitString(text, '\n')) {
    ++line_no;
    const std::string line = Trim(raw);
    if (line.empty()) continue;
    if (line_no == 1 && line == "global_feature_id,score") continue;
    const auto cells = SplitString(line, ',');
    try {
      if (cells.size() != 2) throw std::invalid_argument("cells");
      std::size_t used = 0;
      const unsigned long id = std::stoul(cells[0], &used);
      if (used != cells[0].size() || id != scores.size()) throw std::invalid_argument("id");
      const double s = std::stod(cells[1], &used);
      if (used != cells[1].size() || !std::isfinite(s)) throw std::invalid_argument("score");
      scores.push_back(s);
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::kParseError, "scores line " + std::to_string(line_no) +
                                              ": expected '<id>,<score>' with consecutive ids");
    }
  }
  if (scores.empty()) throw Error(ErrorCode::kParseError, "scores file has no rows");
  return scores;
}

std::string FormatSelectionDump(std::span<const SelectionResult> selections,
                                std::span<const double> scores,
                                std::span<const std::size_t> feature_view) {
  std::string out = "ratio,k,rank,global_feature_id,view_id,score\n";
  for (const auto& sel : selections) {
    for (std::size_t r = 0; r < sel.selected.size(); ++r) {
      const std::uint32_t id = sel.selected[r];
      out += FormatDouble(sel.ratio) + "," + std::to_string(sel.k) + "," + std::to_string(r + 1) +
             "," + std::to_string(id) + "," +
             (feature_view.empty() ? std::string() : std::to_string(feature_view[id])) + "," +
             FormatDouble(scores[id]) + "\n";
    }
  }
  return out;
}

}  // namespace mvfs
