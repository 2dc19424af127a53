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

#ifndef MVFS_SELECT_H_
#define MVFS_SELECT_H_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mvfs/dataset.h"
#include "mvfs/stats.h"

namespace mvfs {

struct SelectionResult {
  double ratio = 0.0;
  std::size_t k = 0;
  std::vector<std::uint32_t> selected;  // descending score
  std::map<std::size_t, std::size_t> per_view_counts;
  bool operator==(const SelectionResult&) const = default;
};

// max(1, round-half-up(ratio * d)). Throws InvalidArgument outside the
// domain 0 < ratio <= 1, d >= 1.
std::size_t RatioToK(double ratio, std::size_t d);

// Global ranking by descending score, ties by ascending id. feature_view
// maps each id to its view (may be empty). Throws KTooLarge when k > d.
SelectionResult TopK(std::span<const double> scores, std::size_t k,
                     std::span<const std::size_t> feature_view = {}, double ratio = 0.0);

// Full ordering of all ids, same rule as TopK.
std::vector<std::uint32_t> RankFeatures(std::span<const double> scores);

// Baseline scores: uniform random per feature, and max over labels of the
// feature-label MI.
std::vector<double> RandomScores(std::size_t d, std::uint64_t seed);
std::vector<double> MaxMiScores(const MiMatrices& mi);

// "global_feature_id,score" with a header line.
std::string FormatScoresCsv(std::span<const double> scores);
std::vector<double> ParseScoresCsv(std::string_view text);

// ratio,k,rank,global_feature_id,view_id,score
std::string FormatSelectionDump(std::span<const SelectionResult> selections,
                                std::span<const double> scores,
                                std::span<const std::size_t> feature_view);

}  // namespace mvfs

#endif  // MVFS_SELECT_H_
