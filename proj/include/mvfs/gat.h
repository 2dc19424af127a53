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

#ifndef MVFS_GAT_H_
#define MVFS_GAT_H_

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mvfs/graph.h"
#include "mvfs/matrix.h"

namespace mvfs {

struct TrainConfig {
  std::size_t hidden = 32;
  std::size_t layers = 2;
  std::size_t epochs = 200;
  double learning_rate = 0.01;
  // Negative (non-edge) pairs per positive reconstruction pair.
  double negative_ratio = 1.0;
  // Weight of the readout regression term.
  double lambda = 1.0;
  double leaky_slope = 0.2;
  std::optional<std::uint64_t> seed;

  // Throws ConfigError unless every size/rate is positive and the seed is
  // set. lambda may be zero.
  void Validate() const;
  std::string Digest() const;
};

// Node inputs: for each of the eight relation keys, [sum, max, mean, degree]
// of the weights of incident edges (undirected relations counted once, via
// their outgoing copy), zero for relations that do not touch the node type.
inline constexpr std::size_t kStatsPerRelation = 4;
inline constexpr std::size_t kInputDim = kNumRelations * kStatsPerRelation;

struct NodeFeatureTable {
  std::array<Matrix, kNumNodeTypes> by_type;  // n_type x kInputDim
  const Matrix& of(NodeType t) const { return by_type[static_cast<std::size_t>(t)]; }
};

Matrix RawNodeStatistics(const HeteroGraph& graph, NodeType type);
// Raw statistics z-scored per column within each node type; constant
// columns keep their raw values.
NodeFeatureTable InitNodeFeatures(const HeteroGraph& graph);

// Message-passing relations: every stored relation in its stored
// direction, plus a reversed copy of each directed relation so that
// features also receive messages from labels and views.
struct MessageRelationInfo {
  Relation relation;
  bool reversed;
  NodeType source;
  NodeType target;
  std::string name;
};
const std::vector<MessageRelationInfo>& MessageRelations();

// All trainable values in one flat vector plus the offsets of each block.
struct GatParameters {
  struct RelationSlot {
    std::size_t weight;  // in_dim x out_dim, row-major
    std::size_t attn_source;
    std::size_t attn_target;
    std::size_t edge_coef;
  };
  struct LayerSlot {
    std::size_t in_dim;
    std::size_t out_dim;
    std::vector<RelationSlot> relations;  // indexed like MessageRelations()
    std::array<std::size_t, kNumNodeTypes> type_bias;
  };

  TrainConfig config;
  std::vector<LayerSlot> layers;
  std::size_t readout_weight = 0;
  std::size_t readout_bias = 0;
  std::vector<double> values;

  // Name of the block containing flat index `i`, e.g. "layer1/fl_stat/weight".
  std::string BlockName(std::size_t i) const;
};

// Glorot-uniform weights and attention vectors; zero edge coefficients,
// biases and readout bias.
GatParameters InitParameters(const TrainConfig& config);

struct Embeddings {
  std::array<Matrix, kNumNodeTypes> by_type;
  const Matrix& of(NodeType t) const { return by_type[static_cast<std::size_t>(t)]; }
};

// Attention coefficient of one edge of one message relation.
struct AttentionRecord {
  std::size_t layer;
  std::size_t relation;  // index into MessageRelations()
  std::uint32_t source;
  std::uint32_t target;
  double alpha;
};

// One layer: per relation, logits LeakyReLU(a_src.W h_u + a_dst.W h_v + b w),
// softmax over each target's in-edges, messages alpha * W h_u summed over
// relations into the target type; nodes without any in-edge take the
// layer's type bias. ELU follows every layer but the last.
Embeddings LayerForward(const GatParameters& params, const HeteroGraph& graph,
                        std::size_t layer_index, const Embeddings& input,
                        std::vector<AttentionRecord>* attention = nullptr);

// Final-layer embeddings from InitNodeFeatures(graph).
Embeddings Forward(const GatParameters& params, const HeteroGraph& graph,
                   std::vector<AttentionRecord>* attention = nullptr);

struct ReconstructionPair {
  NodeType type_a;
  std::uint32_t a;
  NodeType type_b;
  std::uint32_t b;
  double target;
};

struct Supervision {
  // fl_* and ll_* edges (label pairs once) followed by sampled non-edges
  // with target 0.
  std::vector<ReconstructionPair> pairs;
  std::size_t positives = 0;
  // Min-max rescaled sum of incident fl_* and ff_stat weights per feature.
  std::vector<double> score_targets;
};

// Throws NoSupervisionEdges when the graph has no feature-label edge.
Supervision BuildSupervision(const HeteroGraph& graph, const TrainConfig& config);

struct LossValue {
  double total = 0.0;
  double reconstruction = 0.0;
  double score = 0.0;
};

// Loss and, when `gradient` is non-null, its gradient w.r.t. params.values.
LossValue ComputeLoss(const GatParameters& params, const HeteroGraph& graph,
                      const Supervision& supervision,
                      std::vector<double>* gradient = nullptr);

struct TrainResult {
  GatParameters params;
  std::vector<double> loss_history;  // loss before each update
  double initial_loss = 0.0;
  double final_loss = 0.0;  // loss of the returned parameters
};

// Full-batch Adam on the reconstruction + readout objective. Returns the
// lowest-loss parameters seen, so final_loss <= initial_loss. Throws
// NonFiniteLoss naming the epoch.
TrainResult Train(const HeteroGraph& graph, const TrainConfig& config);

// Readout of each feature's final embedding, indexed by global feature id.
std::vector<double> FeatureScores(const GatParameters& params, const HeteroGraph& graph);

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::string worst_block;
  std::size_t checked = 0;
};

// Central differences against ComputeLoss gradients. Relative error per
// coordinate is |analytic - numeric| / max(|analytic|, |numeric|, 1e-5).
// Logits within 1e-4 of the LeakyReLU kink are first pushed away by
// shifting that relation's edge coefficient. Throws GradCheckFailure when
// the error reaches `tolerance`.
GradientCheckResult GradientCheck(GatParameters params, const HeteroGraph& graph,
                                  double step = 1e-5, double tolerance = 1e-4);

std::string SerializeCheckpoint(const GatParameters& params);
GatParameters ParseCheckpoint(std::string_view text);

}  // namespace mvfs

#endif  // MVFS_GAT_H_
