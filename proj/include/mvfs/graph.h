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

#ifndef MVFS_GRAPH_H_
#define MVFS_GRAPH_H_

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mvfs/dataset.h"
#include "mvfs/semantic.h"
#include "mvfs/stats.h"

namespace mvfs {

enum class NodeType : std::uint8_t { kView = 0, kFeature = 1, kLabel = 2 };
inline constexpr std::size_t kNumNodeTypes = 3;

// Relation keys, in dump order.
enum class Relation : std::uint8_t {
  kFvBelongs = 0,  // feature -> view
  kFlStat,         // feature -> label
  kFfStat,         // feature <-> feature
  kLlStat,         // label <-> label
  kVlStat,         // view -> label
  kFlSem,          // feature -> label
  kVlSem,          // view -> label
  kLlSem,          // label <-> label
};
inline constexpr std::size_t kNumRelations = 8;

struct RelationInfo {
  const char* name;
  NodeType source;
  NodeType target;
  bool undirected;  // stored in both directions
  bool semantic;
};

const RelationInfo& Info(Relation relation);
const char* NodeTypeName(NodeType type);
std::array<Relation, kNumRelations> AllRelations();

struct Edge {
  std::uint32_t source = 0;
  std::uint32_t target = 0;
  double weight = 0.0;
  bool operator==(const Edge&) const = default;
};

struct NodeSets {
  std::size_t views = 0;
  std::size_t features = 0;
  std::size_t labels = 0;
  std::vector<std::size_t> feature_view;  // owning view per feature
  bool operator==(const NodeSets&) const = default;

  std::size_t Count(NodeType type) const;
};

NodeSets NodeSetsFor(const MultiViewDataset& dataset);

// Typed nodes with typed weighted relations. Edge lists are kept sorted by
// (source, target).
class HeteroGraph {
 public:
  HeteroGraph() = default;
  explicit HeteroGraph(NodeSets nodes) : nodes_(std::move(nodes)) {}

  const NodeSets& nodes() const { return nodes_; }
  const std::vector<Edge>& edges(Relation r) const {
    return relations_[static_cast<std::size_t>(r)];
  }
  // Validates endpoint ranges, weights and self-loops, then sorts.
  void SetEdges(Relation r, std::vector<Edge> edges);
  void ClearRelation(Relation r) { relations_[static_cast<std::size_t>(r)].clear(); }
  std::size_t EdgeCount() const;

  bool operator==(const HeteroGraph&) const = default;

 private:
  NodeSets nodes_;
  std::array<std::vector<Edge>, kNumRelations> relations_;
};

// An absolute cut-off, or a quantile of the strictly positive raw values of
// the relation it applies to.
struct Threshold {
  enum class Kind { kAbsolute, kQuantile };
  Kind kind = Kind::kQuantile;
  double value = 0.7;

  static Threshold Absolute(double v) { return {Kind::kAbsolute, v}; }
  static Threshold Quantile(double q) { return {Kind::kQuantile, q}; }
  // "0.3" or "q0.7".
  static Threshold Parse(std::string_view text);
  std::string ToString() const;
};

struct Thresholds {
  Threshold tau1 = Threshold::Quantile(0.7);  // feature-label MI
  Threshold tau2 = Threshold::Quantile(0.7);  // feature-feature MI
  Threshold tau3 = Threshold::Quantile(0.7);  // view-label mean MI
  double delta = 0.5;                          // semantic score
};

// Linear-interpolation quantile of the strictly positive entries; 0 when
// there are none.
double ResolveThreshold(const Threshold& threshold, std::span<const double> raw);

// Edges with value strictly above the resolved threshold, weights divided
// by the relation maximum; label co-occurrence keeps every off-diagonal
// pair with c_ij > 0. Warns (EmptyRelation) for relations left empty.
HeteroGraph BuildStatisticalGraph(const NodeSets& nodes, const MiMatrices& mi,
                                  const Thresholds& thresholds);

// Semantic edges for scores strictly above delta, weighted by the raw score.
HeteroGraph BuildSemanticGraph(const NodeSets& nodes, const SemanticScoreSet& scores,
                               double delta);

// Union of relations under their own keys. Throws NodeSetMismatch.
HeteroGraph Merge(const HeteroGraph& statistical, const HeteroGraph& semantic);

// Text dump ordered by relation key, source id, target id.
std::string DumpGraph(const HeteroGraph& graph);
HeteroGraph ParseGraph(std::string_view text);

}  // namespace mvfs

#endif  // MVFS_GRAPH_H_
