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
#include <set>
#include <tuple>

#include <gtest/gtest.h>

#include "mvfs/error.h"
#include "mvfs/graph.h"
#include "mvfs/stats.h"
#include "mvfs/util.h"
#include "test_support.h"

namespace mvfs {
namespace {

NodeSets Nodes(std::size_t views, std::vector<std::size_t> feature_view, std::size_t labels) {
  NodeSets n;
  n.views = views;
  n.features = feature_view.size();
  n.labels = labels;
  n.feature_view = std::move(feature_view);
  return n;
}

MiMatrices EmptyMi(const NodeSets& n) {
  MiMatrices mi;
  mi.fl = Matrix(n.features, n.labels);
  mi.vl = Matrix(n.views, n.labels);
  mi.cooc = BasicMatrix<std::int64_t>(n.labels, n.labels);
  return mi;
}

TEST(ThresholdTest, ParseAndResolve) {
  const Threshold q = Threshold::Parse("q0.7");
  EXPECT_EQ(q.kind, Threshold::Kind::kQuantile);
  EXPECT_EQ(q.value, 0.7);
  EXPECT_EQ(Threshold::Parse("0.3").kind, Threshold::Kind::kAbsolute);
  EXPECT_EQ(q.ToString(), "q0.7");
  const std::vector<double> raw = {0, 0, 1, 2, 3, 4, 5};
  // Positive values 1..5: position 0.5 * 4 = 2.
  EXPECT_EQ(ResolveThreshold(Threshold::Quantile(0.5), raw), 3.0);
  EXPECT_DOUBLE_EQ(ResolveThreshold(Threshold::Quantile(0.7), raw), 3.8);
  EXPECT_EQ(ResolveThreshold(Threshold::Absolute(0.25), raw), 0.25);
  EXPECT_EQ(ResolveThreshold(Threshold::Quantile(0.7), std::vector<double>{0, 0}), 0.0);
  for (const char* bad : {"", "q", "abc", "q1.5", "-1"}) {
    EXPECT_THROW(Threshold::Parse(bad), Error) << bad;
  }
}

TEST(StatisticalGraphTest, FeatureLabelNormalization) {
  const NodeSets n = Nodes(1, {0, 0}, 1);
  MiMatrices mi = EmptyMi(n);
  mi.fl(0, 0) = 0.4;
  mi.fl(1, 0) = 0.8;
  Thresholds t;
  t.tau1 = Threshold::Absolute(0.3);
  WarningCapture capture;
  const HeteroGraph g = BuildStatisticalGraph(n, mi, t);
  const auto& fl = g.edges(Relation::kFlStat);
  ASSERT_EQ(fl.size(), 2u);
  EXPECT_EQ(fl[0], (Edge{0, 0, 0.5}));
  EXPECT_EQ(fl[1], (Edge{1, 0, 1.0}));
}

TEST(StatisticalGraphTest, CooccurrenceNormalization) {
  const NodeSets n = Nodes(1, {0}, 3);
  MiMatrices mi = EmptyMi(n);
  mi.cooc(0, 0) = 9;
  mi.cooc(0, 1) = mi.cooc(1, 0) = 3;
  mi.cooc(0, 2) = mi.cooc(2, 0) = 1;
  WarningCapture capture;
  const HeteroGraph g = BuildStatisticalGraph(n, mi, {});
  const auto& ll = g.edges(Relation::kLlStat);
  ASSERT_EQ(ll.size(), 4u);
  EXPECT_EQ(ll[0], (Edge{0, 1, 1.0}));
  EXPECT_EQ(ll[1], (Edge{0, 2, 1.0 / 3.0}));
  EXPECT_EQ(ll[2], (Edge{1, 0, 1.0}));
  EXPECT_EQ(ll[3], (Edge{2, 0, 1.0 / 3.0}));
}

TEST(StatisticalGraphTest, ThresholdAboveAllWarnsEmpty) {
  const NodeSets n = Nodes(1, {0, 0}, 1);
  MiMatrices mi = EmptyMi(n);
  mi.fl(0, 0) = 0.4;
  mi.fl(1, 0) = 0.8;
  Thresholds t;
  t.tau1 = Threshold::Absolute(0.9);
  WarningCapture capture;
  const HeteroGraph g = BuildStatisticalGraph(n, mi, t);
  EXPECT_TRUE(g.edges(Relation::kFlStat).empty());
  EXPECT_TRUE(capture.Contains("EmptyRelation"));
  EXPECT_TRUE(capture.Contains("fl_stat"));
}

TEST(StatisticalGraphTest, StrictComparison) {
  const NodeSets n = Nodes(1, {0, 0}, 1);
  MiMatrices mi = EmptyMi(n);
  mi.fl(0, 0) = 0.4;
  mi.fl(1, 0) = 0.8;
  Thresholds t;
  t.tau1 = Threshold::Absolute(0.4);
  WarningCapture capture;
  EXPECT_EQ(BuildStatisticalGraph(n, mi, t).edges(Relation::kFlStat).size(), 1u);
}

TEST(StatisticalGraphTest, NodeSetMismatch) {
  const NodeSets n = Nodes(1, {0, 0}, 1);
  MiMatrices mi = EmptyMi(Nodes(1, {0}, 1));
  try {
    BuildStatisticalGraph(n, mi, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNodeSetMismatch);
  }
}

TEST(SemanticGraphTest, Examples) {
  const NodeSets n = Nodes(1, {0, 0}, 2);
  SemanticScoreSet s;
  s.entries[MakePairKey(PairKind::kFeatureLabel, 0, 0)] = {0.9, "m", ""};
  s.entries[MakePairKey(PairKind::kFeatureLabel, 1, 0)] = {0.5, "m", ""};
  s.entries[MakePairKey(PairKind::kLabelLabel, 0, 1)] = {0.8, "m", ""};
  s.entries[MakePairKey(PairKind::kViewLabel, 0, 1)] = {0.6, "m", ""};
  const HeteroGraph g = BuildSemanticGraph(n, s, 0.5);
  EXPECT_EQ(g.edges(Relation::kFlSem), (std::vector<Edge>{{0, 0, 0.9}}));
  EXPECT_EQ(g.edges(Relation::kLlSem), (std::vector<Edge>{{0, 1, 0.8}, {1, 0, 0.8}}));
  EXPECT_EQ(g.edges(Relation::kVlSem), (std::vector<Edge>{{0, 1, 0.6}}));
  for (Relation r : AllRelations()) {
    if (!Info(r).semantic) {
      EXPECT_TRUE(g.edges(r).empty());
    }
  }
}

TEST(SemanticGraphTest, AllBelowDeltaIsEmpty) {
  const NodeSets n = Nodes(1, {0}, 2);
  SemanticScoreSet s;
  s.entries[MakePairKey(PairKind::kFeatureLabel, 0, 0)] = {0.3, "m", ""};
  s.entries[MakePairKey(PairKind::kLabelLabel, 0, 1)] = {0.5, "m", ""};
  WarningCapture capture;
  EXPECT_EQ(BuildSemanticGraph(n, s, 0.5).EdgeCount(), 0u);
}

TEST(MergeTest, Examples) {
  const NodeSets n = Nodes(1, {0, 0}, 1);
  MiMatrices mi = EmptyMi(n);
  mi.fl(0, 0) = 0.4;
  mi.fl(1, 0) = 0.8;
  Thresholds t;
  t.tau1 = Threshold::Absolute(0.3);
  WarningCapture capture;
  const HeteroGraph stat = BuildStatisticalGraph(n, mi, t);
  EXPECT_EQ(Merge(stat, HeteroGraph(n)), stat);

  SemanticScoreSet s;
  s.entries[MakePairKey(PairKind::kFeatureLabel, 1, 0)] = {0.9, "m", ""};
  const HeteroGraph merged = Merge(stat, BuildSemanticGraph(n, s, 0.5));
  EXPECT_EQ(merged.edges(Relation::kFlStat).size(), 2u);
  EXPECT_EQ(merged.edges(Relation::kFlSem), (std::vector<Edge>{{1, 0, 0.9}}));
  EXPECT_EQ(merged.EdgeCount(), stat.EdgeCount() + 1);

  try {
    Merge(stat, HeteroGraph(Nodes(1, {0}, 1)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNodeSetMismatch);
  }
}

TEST(GraphTest, YeastShapeNodeCounts) {
  const MultiViewDataset ds = testing::MakeSynthetic(testing::YeastShape(), 1);
  const NodeSets n = NodeSetsFor(ds);
  EXPECT_EQ(n.Count(NodeType::kView), 2u);
  EXPECT_EQ(n.Count(NodeType::kFeature), 103u);
  EXPECT_EQ(n.Count(NodeType::kLabel), 14u);
}

TEST(GraphTest, SetEdgesValidates) {
  HeteroGraph g(Nodes(1, {0, 0}, 2));
  EXPECT_THROW(g.SetEdges(Relation::kFlStat, {{2, 0, 0.5}}), Error);
  EXPECT_THROW(g.SetEdges(Relation::kFlStat, {{0, 0, 1.5}}), Error);
  EXPECT_THROW(g.SetEdges(Relation::kFfStat, {{1, 1, 0.5}}), Error);
  EXPECT_THROW(g.SetEdges(Relation::kFlStat, {{0, 0, std::nan("")}}), Error);
  g.SetEdges(Relation::kFlStat, {{1, 1, 0.5}, {0, 1, 0.2}});
  EXPECT_EQ(g.edges(Relation::kFlStat).front(), (Edge{0, 1, 0.2}));
}

void CheckInvariants(const HeteroGraph& g) {
  const NodeSets& n = g.nodes();
  for (Relation r : AllRelations()) {
    const auto& edges = g.edges(r);
    const RelationInfo& info = Info(r);
    std::set<std::tuple<std::uint32_t, std::uint32_t, double>> set;
    double max = 0.0;
    for (const auto& e : edges) {
      EXPECT_GE(e.weight, 0.0);
      EXPECT_LE(e.weight, 1.0);
      EXPECT_LT(e.source, n.Count(info.source));
      EXPECT_LT(e.target, n.Count(info.target));
      if (info.source == info.target) {
        EXPECT_NE(e.source, e.target) << info.name;
      }
      set.insert({e.source, e.target, e.weight});
      max = std::max(max, e.weight);
    }
    if (info.undirected) {
      for (const auto& e : edges) {
        EXPECT_TRUE(set.contains({e.target, e.source, e.weight})) << info.name;
      }
    }
    if (!info.semantic && !edges.empty()) {
      EXPECT_NEAR(max, 1.0, 1e-12) << info.name;
    }
  }
  std::vector<int> out_degree(n.features, 0);
  for (const auto& e : g.edges(Relation::kFvBelongs)) {
    ++out_degree[e.source];
    EXPECT_EQ(e.target, n.feature_view[e.source]);
  }
  for (int d : out_degree) EXPECT_EQ(d, 1);
}

TEST(GraphPropertyTest, InvariantsOnRandomDatasets) {
  Rng rng(99);
  for (int t = 0; t < 100; ++t) {
    testing::SyntheticSpec spec;
    spec.samples = 40 + rng.Below(40);
    spec.views = {{"a", 1 + rng.Below(5)}, {"b", 1 + rng.Below(5)}};
    spec.labels = 2 + rng.Below(3);
    spec.latent = 3;
    const MultiViewDataset ds = testing::MakeSynthetic(spec, 1000 + t);
    const NodeSets n = NodeSetsFor(ds);
    const MiMatrices mi = ComputeMiMatrices(ds, {4, 0, 1});
    SemanticScoreSet s;
    for (std::size_t l = 0; l < n.labels; ++l) {
      for (std::size_t f = 0; f < n.features; ++f) {
        s.entries[MakePairKey(PairKind::kFeatureLabel, f, l)] = {rng.Uniform(), "m", ""};
      }
      for (std::size_t v = 0; v < n.views; ++v) {
        s.entries[MakePairKey(PairKind::kViewLabel, v, l)] = {rng.Uniform(), "m", ""};
      }
      for (std::size_t k = l + 1; k < n.labels; ++k) {
        s.entries[MakePairKey(PairKind::kLabelLabel, l, k)] = {rng.Uniform(), "m", ""};
      }
    }
    WarningCapture capture;
    Thresholds low;
    low.tau1 = Threshold::Quantile(0.3);
    Thresholds high;
    high.tau1 = Threshold::Quantile(0.8);
    const HeteroGraph g_low = Merge(BuildStatisticalGraph(n, mi, low), BuildSemanticGraph(n, s, 0.5));
    const HeteroGraph g_high = BuildStatisticalGraph(n, mi, high);
    CheckInvariants(g_low);
    CheckInvariants(g_high);
    // Raising tau1 never adds feature-label edges.
    std::set<std::pair<std::uint32_t, std::uint32_t>> low_pairs;
    for (const auto& e : g_low.edges(Relation::kFlStat)) low_pairs.insert({e.source, e.target});
    for (const auto& e : g_high.edges(Relation::kFlStat)) {
      EXPECT_TRUE(low_pairs.contains({e.source, e.target}));
    }
    EXPECT_LE(g_high.edges(Relation::kFlStat).size(), g_low.edges(Relation::kFlStat).size());
  }
}

TEST(DumpTest, RoundTrip) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const HeteroGraph g = testing::RandomToyGraph(2, 6, 3, seed);
    const std::string text = DumpGraph(g);
    EXPECT_EQ(ParseGraph(text), g);
    EXPECT_EQ(DumpGraph(ParseGraph(text)), text);
  }
  EXPECT_THROW(ParseGraph("garbage"), Error);
}

TEST(DumpTest, OrderedByRelationThenIds) {
  const HeteroGraph g = testing::RandomToyGraph(2, 5, 3, 4);
  const std::string text = DumpGraph(g);
  std::size_t last = 0;
  for (Relation r : AllRelations()) {
    const auto pos = text.find("relation " + std::string(Info(r).name) + " ");
    if (g.edges(r).empty()) continue;
    ASSERT_NE(pos, std::string::npos) << Info(r).name;
    EXPECT_GE(pos, last);
    last = pos;
  }
}

}  // namespace
}  // namespace mvfs
