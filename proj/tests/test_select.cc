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

#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "mvfs/error.h"
#include "mvfs/select.h"
#include "mvfs/stats.h"
#include "mvfs/util.h"

namespace mvfs {
namespace {

TEST(RatioToKTest, Examples) {
  EXPECT_EQ(RatioToK(0.02, 103), 2u);
  EXPECT_EQ(RatioToK(0.20, 634), 127u);
  EXPECT_EQ(RatioToK(0.02, 10), 1u);
  EXPECT_EQ(RatioToK(0.10, 103), 10u);
  EXPECT_EQ(RatioToK(0.05, 10), 1u);   // 0.5 rounds up
  EXPECT_EQ(RatioToK(0.15, 10), 2u);   // 1.5 rounds up despite 0.15 * 10 < 1.5
  EXPECT_EQ(RatioToK(1.0, 7), 7u);
}

TEST(RatioToKTest, Domain) {
  for (double r : {0.0, -0.1, 1.5, std::nan("")}) {
    try {
      RatioToK(r, 10);
      ADD_FAILURE() << r;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
    }
  }
  EXPECT_THROW(RatioToK(0.5, 0), Error);
}

TEST(TopKTest, TieBreakByAscendingId) {
  const std::vector<double> scores = {0.5, 0.9, 0.5, 0.9, 0.1};
  const SelectionResult r = TopK(scores, 3);
  EXPECT_EQ(r.selected, (std::vector<std::uint32_t>{1, 3, 0}));
  EXPECT_EQ(r.k, 3u);
}

TEST(TopKTest, PerViewCounts) {
  const std::vector<double> scores = {0.1, 0.9, 0.8, 0.2, 0.7};
  const std::vector<std::size_t> views = {0, 0, 1, 1, 1};
  const SelectionResult r = TopK(scores, 3, views, 0.6);
  EXPECT_EQ(r.per_view_counts.at(0), 1u);
  EXPECT_EQ(r.per_view_counts.at(1), 2u);
  EXPECT_EQ(r.ratio, 0.6);
}

TEST(TopKTest, KTooLarge) {
  const std::vector<double> scores = {1, 2};
  try {
    TopK(scores, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kKTooLarge);
  }
}

TEST(TopKTest, MatchesSortOracle) {
  Rng rng(31);
  for (int t = 0; t < 100; ++t) {
    const std::size_t d = 1 + rng.Below(60);
    std::vector<double> scores(d);
    // Coarse values force ties.
    for (double& s : scores) s = std::floor(rng.Uniform() * 8.0) / 8.0;
    std::vector<std::uint32_t> oracle(d);
    std::iota(oracle.begin(), oracle.end(), 0u);
    std::sort(oracle.begin(), oracle.end(), [&](std::uint32_t a, std::uint32_t b) {
      return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
    });
    EXPECT_EQ(RankFeatures(scores), oracle);
    const std::size_t k = 1 + rng.Below(d);
    EXPECT_EQ(TopK(scores, k).selected,
              std::vector<std::uint32_t>(oracle.begin(), oracle.begin() + k));
  }
}

TEST(TopKTest, NestedAcrossRatios) {
  Rng rng(2);
  std::vector<double> scores(200);
  for (double& s : scores) s = rng.Uniform();
  std::vector<std::uint32_t> previous;
  for (int p = 2; p <= 20; p += 2) {
    const auto sel = TopK(scores, RatioToK(p / 100.0, scores.size())).selected;
    ASSERT_GE(sel.size(), previous.size());
    EXPECT_TRUE(std::equal(previous.begin(), previous.end(), sel.begin()));
    previous = sel;
  }
}

TEST(TopKTest, InvariantUnderMonotoneTransform) {
  Rng rng(3);
  std::vector<double> scores(50), transformed(50);
  for (std::size_t i = 0; i < 50; ++i) {
    scores[i] = rng.Uniform(-2.0, 2.0);
    transformed[i] = std::exp(3.0 * scores[i]) + 7.0;
  }
  EXPECT_EQ(RankFeatures(scores), RankFeatures(transformed));
}

TEST(BaselineTest, RandomScoresSeeded) {
  EXPECT_EQ(RandomScores(20, 5), RandomScores(20, 5));
  EXPECT_NE(RandomScores(20, 5), RandomScores(20, 6));
  for (double s : RandomScores(100, 1)) {
    EXPECT_GE(s, 0.0);
    EXPECT_LT(s, 1.0);
  }
}

TEST(BaselineTest, MaxMiScores) {
  MiMatrices mi;
  mi.fl = Matrix(3, 2);
  mi.fl(0, 0) = 0.1, mi.fl(0, 1) = 0.4;
  mi.fl(1, 0) = 0.3;
  mi.fl(2, 1) = 0.2;
  EXPECT_EQ(MaxMiScores(mi), (std::vector<double>{0.4, 0.3, 0.2}));
}

TEST(CsvTest, ScoresRoundTrip) {
  Rng rng(9);
  std::vector<double> scores(30);
  for (double& s : scores) s = rng.Uniform(-1e3, 1e3);
  const std::string text = FormatScoresCsv(scores);
  EXPECT_EQ(text.substr(0, text.find('\n')), "global_feature_id,score");
  EXPECT_EQ(ParseScoresCsv(text), scores);
}

TEST(CsvTest, ScoresRejectsBadInput) {
  for (const char* bad : {"", "id,score\n0,1\n", "global_feature_id,score\n1,0.5\n",
                          "global_feature_id,score\n0,abc\n",
                          "global_feature_id,score\n0,0.5\n2,0.1\n"}) {
    try {
      ParseScoresCsv(bad);
      ADD_FAILURE() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kParseError) << bad;
    }
  }
}

TEST(CsvTest, SelectionDump) {
  const std::vector<double> scores = {0.1, 0.9, 0.5};
  const std::vector<std::size_t> views = {0, 1, 1};
  const std::vector<SelectionResult> sels = {TopK(scores, 1, views, 0.3),
                                             TopK(scores, 2, views, 0.6)};
  EXPECT_EQ(FormatSelectionDump(sels, scores, views),
            "ratio,k,rank,global_feature_id,view_id,score\n"
            "0.3,1,1,1,1,0.9\n"
            "0.6,2,1,1,1,0.9\n"
            "0.6,2,2,2,1,0.5\n");
}

}  // namespace
}  // namespace mvfs
