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
#include <map>
#include <numeric>
#include <tuple>

#include <gtest/gtest.h>

#include "mvfs/dataset.h"
#include "mvfs/error.h"
#include "mvfs/gat.h"
#include "mvfs/graph.h"
#include "mvfs/select.h"
#include "mvfs/stats.h"
#include "mvfs/util.h"
#include "test_support.h"

namespace mvfs {
namespace {

TrainConfig SmallConfig(std::uint64_t seed = 7) {
  TrainConfig c;
  c.hidden = 6;
  c.epochs = 30;
  c.seed = seed;
  return c;
}

std::size_t Col(Relation r, std::size_t stat) {
  return static_cast<std::size_t>(r) * kStatsPerRelation + stat;
}

double Sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double Dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

TEST(NodeFeaturesTest, IncidentWeightStatistics) {
  NodeSets n;
  n.views = 1;
  n.features = 2;
  n.labels = 3;
  n.feature_view = {0, 0};
  HeteroGraph g(n);
  g.SetEdges(Relation::kFlStat, {{0, 0, 0.5}, {0, 1, 1.0}});
  const Matrix f = RawNodeStatistics(g, NodeType::kFeature);
  ASSERT_EQ(f.cols(), kInputDim);
  EXPECT_EQ(f(0, Col(Relation::kFlStat, 0)), 1.5);
  EXPECT_EQ(f(0, Col(Relation::kFlStat, 1)), 1.0);
  EXPECT_EQ(f(0, Col(Relation::kFlStat, 2)), 0.75);
  EXPECT_EQ(f(0, Col(Relation::kFlStat, 3)), 2.0);
  const Matrix l = RawNodeStatistics(g, NodeType::kLabel);
  for (double x : l.row(2)) EXPECT_EQ(x, 0.0);  // isolated label
  EXPECT_EQ(l(1, Col(Relation::kFlStat, 0)), 1.0);
}

TEST(NodeFeaturesTest, UndirectedCountedOnce) {
  const HeteroGraph g = testing::EyeGraph(true);
  const Matrix l = RawNodeStatistics(g, NodeType::kLabel);
  EXPECT_EQ(l(0, Col(Relation::kLlSem, 0)), 0.9);
  EXPECT_EQ(l(0, Col(Relation::kLlSem, 3)), 1.0);
}

TEST(NodeFeaturesTest, StandardizedAndDeterministic) {
  const HeteroGraph g = testing::RandomToyGraph(2, 8, 3, 5);
  const NodeFeatureTable a = InitNodeFeatures(g);
  const NodeFeatureTable b = InitNodeFeatures(g);
  for (std::size_t t = 0; t < kNumNodeTypes; ++t) {
    EXPECT_EQ(a.by_type[t], b.by_type[t]);
    const Matrix& m = a.by_type[t];
    const Matrix raw = RawNodeStatistics(g, static_cast<NodeType>(t));
    for (std::size_t c = 0; c < m.cols(); ++c) {
      double mean = 0.0, sq = 0.0;
      bool constant = true;
      for (std::size_t r = 0; r < m.rows(); ++r) {
        EXPECT_TRUE(std::isfinite(m(r, c)));
        mean += m(r, c);
        sq += m(r, c) * m(r, c);
        constant = constant && raw(r, c) == raw(0, c);
      }
      const double rows = static_cast<double>(m.rows());
      if (constant) {
        for (std::size_t r = 0; r < m.rows(); ++r) EXPECT_EQ(m(r, c), raw(r, c));
      } else {
        EXPECT_NEAR(mean / rows, 0.0, 1e-12);
        EXPECT_NEAR(sq / rows, 1.0, 1e-12);
      }
    }
  }
}

TEST(MessageRelationsTest, StoredPlusReversedDirected) {
  const auto& rels = MessageRelations();
  std::size_t directed = 0;
  for (Relation r : AllRelations()) directed += Info(r).undirected ? 0 : 1;
  EXPECT_EQ(rels.size(), kNumRelations + directed);
  for (const auto& m : rels) {
    const RelationInfo& info = Info(m.relation);
    EXPECT_EQ(m.source, m.reversed ? info.target : info.source);
    EXPECT_EQ(m.target, m.reversed ? info.source : info.target);
  }
}

// Attention records grouped by (layer, relation, target).
std::map<std::tuple<std::size_t, std::size_t, std::uint32_t>, std::vector<double>> Groups(
    const std::vector<AttentionRecord>& records) {
  std::map<std::tuple<std::size_t, std::size_t, std::uint32_t>, std::vector<double>> out;
  for (const auto& r : records) out[{r.layer, r.relation, r.target}].push_back(r.alpha);
  return out;
}

TEST(AttentionTest, NormalizedPerTargetAndRelation) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const HeteroGraph g = testing::RandomToyGraph(2, 7, 3, seed);
    const GatParameters p = InitParameters(SmallConfig(seed));
    std::vector<AttentionRecord> att;
    Forward(p, g, &att);
    ASSERT_FALSE(att.empty());
    for (const auto& [key, alphas] : Groups(att)) {
      double sum = 0.0;
      for (double a : alphas) sum += a;
      EXPECT_NEAR(sum, 1.0, 1e-9);
    }
  }
}

std::size_t FlStatIndex() {
  const auto& rels = MessageRelations();
  for (std::size_t i = 0; i < rels.size(); ++i) {
    if (rels[i].relation == Relation::kFlStat && !rels[i].reversed) return i;
  }
  return rels.size();
}

TEST(AttentionTest, SingletonAndEqualLogits) {
  const HeteroGraph g = testing::EyeGraph(false);
  GatParameters p = InitParameters(SmallConfig());
  // Zero attention vectors and edge coefficients make every logit zero.
  for (const auto& layer : p.layers) {
    for (const auto& slot : layer.relations) {
      std::fill_n(p.values.begin() + slot.attn_source, layer.out_dim, 0.0);
      std::fill_n(p.values.begin() + slot.attn_target, layer.out_dim, 0.0);
    }
  }
  std::vector<AttentionRecord> att;
  Forward(p, g, &att);
  const std::size_t fl = FlStatIndex();
  bool saw_single = false, saw_pair = false;
  for (const auto& r : att) {
    if (r.relation != fl) continue;
    if (r.target == 1) {  // cat: whisker only
      EXPECT_EQ(r.alpha, 1.0);
      saw_single = true;
    } else {  // dog: eye and fur
      EXPECT_DOUBLE_EQ(r.alpha, 0.5);
      saw_pair = true;
    }
  }
  EXPECT_TRUE(saw_single && saw_pair);

  // A singleton stays at 1 for arbitrary parameters.
  const GatParameters q = InitParameters(SmallConfig(123));
  att.clear();
  Forward(q, g, &att);
  for (const auto& r : att) {
    if (r.relation == fl && r.target == 1) {
      EXPECT_EQ(r.alpha, 1.0);
    }
  }
}

TEST(LayerTest, ShapesAndIsolatedBias) {
  NodeSets n;
  n.views = 1;
  n.features = 2;
  n.labels = 2;
  n.feature_view = {0, 0};
  HeteroGraph g(n);
  g.SetEdges(Relation::kFvBelongs, {{0, 0, 1.0}, {1, 0, 1.0}});
  g.SetEdges(Relation::kFlStat, {{0, 0, 1.0}});
  GatParameters p = InitParameters(SmallConfig());
  const std::size_t label_bias = p.layers.back().type_bias[static_cast<std::size_t>(NodeType::kLabel)];
  for (std::size_t c = 0; c < p.layers.back().out_dim; ++c) p.values[label_bias + c] = 0.25 + c;
  const Embeddings z = Forward(p, g);
  EXPECT_EQ(z.of(NodeType::kFeature).rows(), 2u);
  EXPECT_EQ(z.of(NodeType::kFeature).cols(), 6u);
  // Label 1 has no in-edge in any relation.
  for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(z.of(NodeType::kLabel)(1, c), 0.25 + c);
  EXPECT_THROW(LayerForward(p, g, 5, z), Error);
}

TEST(GradientCheckTest, RandomToyGraphs) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const HeteroGraph g = testing::RandomToyGraph(2, 6, 3, seed);
    TrainConfig c = SmallConfig(seed);
    c.hidden = 4;
    const auto r = GradientCheck(InitParameters(c), g);
    EXPECT_LT(r.max_relative_error, 1e-4) << r.worst_block;
    EXPECT_EQ(r.checked, InitParameters(c).values.size());
  }
}

TEST(GradientCheckTest, ZeroAttentionVectors) {
  const HeteroGraph g = testing::RandomToyGraph(2, 5, 3, 11);
  TrainConfig c = SmallConfig();
  c.hidden = 4;
  GatParameters p = InitParameters(c);
  for (const auto& layer : p.layers) {
    for (const auto& slot : layer.relations) {
      std::fill_n(p.values.begin() + slot.attn_source, layer.out_dim, 0.0);
      std::fill_n(p.values.begin() + slot.attn_target, layer.out_dim, 0.0);
    }
  }
  EXPECT_LT(GradientCheck(p, g).max_relative_error, 1e-4);
}

TEST(GradientCheckTest, LambdaZeroAndOne) {
  const HeteroGraph g = testing::RandomToyGraph(2, 5, 2, 3);
  for (double lambda : {0.0, 1.0}) {
    TrainConfig c = SmallConfig();
    c.hidden = 4;
    c.lambda = lambda;
    EXPECT_LT(GradientCheck(InitParameters(c), g).max_relative_error, 1e-4) << lambda;
  }
}

TEST(GradientCheckTest, TrainedParameters) {
  const HeteroGraph g = testing::RandomToyGraph(2, 5, 3, 8);
  TrainConfig c = SmallConfig();
  c.hidden = 4;
  c.epochs = 20;
  EXPECT_LT(GradientCheck(Train(g, c).params, g).max_relative_error, 1e-4);
}

TEST(LossTest, LambdaZeroLeavesReadoutUntouched) {
  const HeteroGraph g = testing::RandomToyGraph(2, 6, 3, 2);
  TrainConfig c = SmallConfig();
  c.lambda = 0.0;
  GatParameters p = InitParameters(c);
  const Supervision sup = BuildSupervision(g, c);
  std::vector<double> grad;
  const LossValue base = ComputeLoss(p, g, sup, &grad);
  EXPECT_EQ(base.total, base.reconstruction);
  const std::size_t h = p.layers.back().out_dim;
  for (std::size_t i = 0; i < h; ++i) EXPECT_EQ(grad[p.readout_weight + i], 0.0);
  EXPECT_EQ(grad[p.readout_bias], 0.0);
  // The loss itself does not move when the readout does.
  p.values[p.readout_weight] += 1e-3;
  p.values[p.readout_bias] -= 1e-3;
  EXPECT_EQ(ComputeLoss(p, g, sup).total, base.total);
}

TEST(SupervisionTest, PositivesNegativesAndTargets) {
  const HeteroGraph g = testing::EyeGraph(true);
  TrainConfig c = SmallConfig();
  const Supervision s = BuildSupervision(g, c);
  // fl_stat 3 edges plus one dog-cat pair.
  EXPECT_EQ(s.positives, 4u);
  // Feature-label complement has 3 pairs; label pairs have none left.
  EXPECT_EQ(s.pairs.size(), 4u + 3u);
  for (std::size_t i = s.positives; i < s.pairs.size(); ++i) EXPECT_EQ(s.pairs[i].target, 0.0);
  // Incident weights 1.0, 0.6, 0.8 rescaled.
  ASSERT_EQ(s.score_targets.size(), 3u);
  EXPECT_EQ(s.score_targets[0], 1.0);
  EXPECT_EQ(s.score_targets[1], 0.0);
  EXPECT_NEAR(s.score_targets[2], 0.5, 1e-15);

  HeteroGraph empty(g.nodes());
  try {
    BuildSupervision(empty, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoSupervisionEdges);
  }
}

TEST(TrainTest, ConfigValidation) {
  TrainConfig c;
  try {
    c.Validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfigError);
  }
  c.seed = 1;
  c.Validate();
  c.hidden = 0;
  EXPECT_THROW(c.Validate(), Error);
  c.hidden = 4;
  c.learning_rate = -1.0;
  EXPECT_THROW(c.Validate(), Error);
  c.learning_rate = 0.01;
  c.lambda = 0.0;
  c.Validate();
}

TEST(TrainTest, OverfitsSingleEdge) {
  NodeSets n;
  n.views = 1;
  n.features = 1;
  n.labels = 1;
  n.feature_view = {0};
  HeteroGraph g(n);
  g.SetEdges(Relation::kFvBelongs, {{0, 0, 1.0}});
  g.SetEdges(Relation::kFlStat, {{0, 0, 1.0}});
  TrainConfig c;
  c.seed = 3;
  const TrainResult r = Train(g, c);
  const Embeddings z = Forward(r.params, g);
  EXPECT_GT(Sigmoid(Dot(z.of(NodeType::kFeature).row(0), z.of(NodeType::kLabel).row(0))), 0.9);
}

TEST(TrainTest, DeterministicFiniteAndNonIncreasing) {
  const HeteroGraph g = testing::RandomToyGraph(3, 10, 4, 6);
  const TrainConfig c = SmallConfig(42);
  const TrainResult a = Train(g, c);
  const TrainResult b = Train(g, c);
  EXPECT_EQ(a.params.values, b.params.values);
  EXPECT_EQ(a.loss_history, b.loss_history);
  EXPECT_EQ(a.loss_history.size(), c.epochs);
  for (double l : a.loss_history) EXPECT_TRUE(std::isfinite(l));
  EXPECT_LE(a.final_loss, a.initial_loss);
  EXPECT_EQ(a.initial_loss, a.loss_history.front());
  EXPECT_LE(a.final_loss, *std::min_element(a.loss_history.begin(), a.loss_history.end()));
  for (double v : a.params.values) EXPECT_TRUE(std::isfinite(v));
  const TrainResult other = Train(g, SmallConfig(43));
  EXPECT_NE(other.params.values, a.params.values);
}

TEST(ScoresTest, OnePerFeature) {
  const HeteroGraph g = testing::RandomToyGraph(2, 9, 3, 1);
  const auto s = FeatureScores(InitParameters(SmallConfig()), g);
  EXPECT_EQ(s.size(), 9u);
  for (double x : s) EXPECT_TRUE(std::isfinite(x));
}

HeteroGraph PermuteFeatures(const HeteroGraph& g, const std::vector<std::uint32_t>& perm) {
  NodeSets n = g.nodes();
  for (std::size_t f = 0; f < n.features; ++f) n.feature_view[perm[f]] = g.nodes().feature_view[f];
  HeteroGraph out(n);
  for (Relation r : AllRelations()) {
    std::vector<Edge> edges = g.edges(r);
    const RelationInfo& info = Info(r);
    for (auto& e : edges) {
      if (info.source == NodeType::kFeature) e.source = perm[e.source];
      if (info.target == NodeType::kFeature) e.target = perm[e.target];
    }
    out.SetEdges(r, std::move(edges));
  }
  return out;
}

TEST(ScoresTest, PermutationEquivariant) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const HeteroGraph g = testing::RandomToyGraph(2, 8, 3, seed);
    std::vector<std::uint32_t> perm(8);
    std::iota(perm.begin(), perm.end(), 0u);
    Rng rng(seed);
    rng.Shuffle(perm);
    const HeteroGraph h = PermuteFeatures(g, perm);
    const GatParameters p = InitParameters(SmallConfig(seed));
    const auto a = FeatureScores(p, g);
    const auto b = FeatureScores(p, h);
    for (std::size_t f = 0; f < 8; ++f) EXPECT_NEAR(b[perm[f]], a[f], 1e-10);
  }
}

TEST(ScoresTest, LabelEdgeInfluencesEye) {
  const HeteroGraph with = testing::EyeGraph(true);
  const HeteroGraph without = testing::EyeGraph(false);
  TrainConfig c;
  c.seed = 11;
  const GatParameters p = InitParameters(c);
  EXPECT_NE(FeatureScores(p, with)[0], FeatureScores(p, without)[0]);
  EXPECT_NE(FeatureScores(Train(with, c).params, with)[0],
            FeatureScores(Train(without, c).params, without)[0]);
}

TEST(CheckpointTest, RoundTrip) {
  const HeteroGraph g = testing::RandomToyGraph(2, 5, 2, 4);
  const TrainResult r = Train(g, SmallConfig());
  const std::string text = SerializeCheckpoint(r.params);
  const GatParameters back = ParseCheckpoint(text);
  EXPECT_EQ(back.values, r.params.values);
  EXPECT_EQ(back.config.Digest(), r.params.config.Digest());
  EXPECT_EQ(FeatureScores(back, g), FeatureScores(r.params, g));
  EXPECT_EQ(back.BlockName(back.readout_bias), r.params.BlockName(r.params.readout_bias));

  std::string tampered = text;
  const auto pos = tampered.find("\"hidden\":6");
  ASSERT_NE(pos, std::string::npos);
  tampered.replace(pos, 10, "\"hidden\":7");
  EXPECT_THROW(ParseCheckpoint(tampered), Error);
  EXPECT_THROW(ParseCheckpoint("{}"), Error);
}

TEST(CheckpointTest, BlockNames) {
  const GatParameters p = InitParameters(SmallConfig());
  EXPECT_EQ(p.BlockName(p.layers[0].relations[0].weight), "layer1/fv_belongs/weight");
  EXPECT_EQ(p.BlockName(p.readout_bias), "readout/bias");
}

TEST(GoldenTest, ToyStatisticalScores) {
  const LoadedDataset toy = LoadDataset(testing::ToyDir() / "manifest.json");
  const MiMatrices mi = ComputeMiMatrices(toy.dataset);
  WarningCapture capture;
  const HeteroGraph g = BuildStatisticalGraph(NodeSetsFor(toy.dataset), mi, {});
  TrainConfig c;
  c.seed = 0;
  const auto scores = FeatureScores(Train(g, c).params, g);
  EXPECT_EQ(testing::CompareGolden("gat_toy_statistical_scores.csv", FormatScoresCsv(scores)), "");
}

}  // namespace
}  // namespace mvfs
