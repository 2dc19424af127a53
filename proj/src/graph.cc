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

#include "mvfs/graph.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "mvfs/error.h"
#include "mvfs/util.h"

namespace mvfs {

namespace {

constexpr std::array<RelationInfo, kNumRelations> kRelationInfo = {{
    {"fv_belongs", NodeType::kFeature, NodeType::kView, false, false},
    {"fl_stat", NodeType::kFeature, NodeType::kLabel, false, false},
    {"ff_stat", NodeType::kFeature, NodeType::kFeature, true, false},
    {"ll_stat", NodeType::kLabel, NodeType::kLabel, true, false},
    {"vl_stat", NodeType::kView, NodeType::kLabel, false, false},
    {"fl_sem", NodeType::kFeature, NodeType::kLabel, false, true},
    {"vl_sem", NodeType::kView, NodeType::kLabel, false, true},
    {"ll_sem", NodeType::kLabel, NodeType::kLabel, true, true},
}};

Relation RelationFromName(std::string_view name) {
  for (std::size_t i = 0; i < kNumRelations; ++i) {
    if (name == kRelationInfo[i].name) return static_cast<Relation>(i);
  }
  throw Error(ErrorCode::kParseError, "unknown relation '" + std::string(name) + "'");
}

void WarnIfEmpty(const HeteroGraph& g, Relation r) {
  if (g.edges(r).empty()) {
    Warn(std::string("EmptyRelation: ") + Info(r).name + " has no edges after thresholding");
  }
}

}  // namespace

const RelationInfo& Info(Relation relation) {
  return kRelationInfo[static_cast<std::size_t>(relation)];
}

const char* NodeTypeName(NodeType type) {
  switch (type) {
    case NodeType::kView: return "view";
    case NodeType::kFeature: return "feature";
    case NodeType::kLabel: return "label";
  }
  return "unknown";
}

std::array<Relation, kNumRelations> AllRelations() {
  std::array<Relation, kNumRelations> out;
  for (std::size_t i = 0; i < kNumRelations; ++i) out[i] = static_cast<Relation>(i);
  return out;
}

std::size_t NodeSets::Count(NodeType type) const {
  switch (type) {
    case NodeType::kView: return views;
    case NodeType::kFeature: return features;
    case NodeType::kLabel: return labels;
  }
  return 0;
}

NodeSets NodeSetsFor(const MultiViewDataset& dataset) {
  return {dataset.num_views(), dataset.num_features(), dataset.num_labels(),
          dataset.FeatureViews()};
}

void HeteroGraph::SetEdges(Relation r, std::vector<Edge> edges) {
  const auto& info = Info(r);
  const std::size_t ns = nodes_.Count(info.source);
  const std::size_t nt = nodes_.Count(info.target);
  for (const auto& e : edges) {
    if (e.source >= ns || e.target >= nt) {
      throw Error(ErrorCode::kNodeSetMismatch,
                  std::string(info.name) + " edge (" + std::to_string(e.source) + ", " +
                      std::to_string(e.target) + ") outside the node sets");
    }
    if (info.source == info.target && e.source == e.target) {
      throw Error(ErrorCode::kInvalidArgument, std::string(info.name) + " self-loop");
    }
    if (!(e.weight >= 0.0 && e.weight <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument,
                  std::string(info.name) + " weight " + FormatDouble(e.weight) +
                      " outside [0,1]");
    }
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    return a.source != b.source ? a.source < b.source : a.target < b.target;
  });
  relations_[static_cast<std::size_t>(r)] = std::move(edges);
}

std::size_t HeteroGraph::EdgeCount() const {
  std::size_t n = 0;
  for (const auto& r : relations_) n += r.size();
  return n;
}

Threshold Threshold::Parse(std::string_view text) {
  const std::string t = Trim(text);
  const bool quantile = !t.empty() && (t[0] == 'q' || t[0] == 'Q');
  const std::string number = quantile ? t.substr(1) : t;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(number.data(), number.data() + number.size(), v);
  if (number.empty() || ec != std::errc() || ptr != number.data() + number.size() ||
      !(v >= 0.0) || (quantile && v > 1.0)) {
    throw Error(ErrorCode::kConfigError, "bad threshold '" + t + "'");
  }
  return quantile ? Quantile(v) : Absolute(v);
}

std::string Threshold::ToString() const {
  return (kind == Kind::kQuantile ? "q" : "") + FormatDouble(value);
}

double ResolveThreshold(const Threshold& threshold, std::span<const double> raw) {
  if (threshold.kind == Threshold::Kind::kAbsolute) return threshold.value;
  std::vector<double> positive;
  for (double x : raw) {
    if (x > 0.0) positive.push_back(x);
  }
  if (positive.empty()) return 0.0;
  std::sort(positive.begin(), positive.end());
  const double h = threshold.value * static_cast<double>(positive.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, positive.size() - 1);
  return positive[lo] + (h - static_cast<double>(lo)) * (positive[hi] - positive[lo]);
}

HeteroGraph BuildStatisticalGraph(const NodeSets& nodes, const MiMatrices& mi,
                                  const Thresholds& thresholds) {
  if (mi.fl.rows() != nodes.features || mi.fl.cols() != nodes.labels ||
      mi.vl.rows() != nodes.views || mi.cooc.rows() != nodes.labels) {
    throw Error(ErrorCode::kNodeSetMismatch, "MI matrices do not match the node sets");
  }
  HeteroGraph g(nodes);

  std::vector<Edge> fv;
  for (std::size_t f = 0; f < nodes.features; ++f) {
    fv.push_back({static_cast<std::uint32_t>(f),
                  static_cast<std::uint32_t>(nodes.feature_view.at(f)), 1.0});
  }
  g.SetEdges(Relation::kFvBelongs, std::move(fv));

  // Thresholded, max-normalized matrix relation.
  auto matrix_edges = [](const Matrix& m, double cut) {
    double max = 0.0;
    for (double x : m.data()) max = std::max(max, x);
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      for (std::size_t j = 0; j < m.cols(); ++j) {
        if (m(i, j) > cut && max > 0.0) {
          edges.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                           m(i, j) / max});
        }
      }
    }
    return edges;
  };
  g.SetEdges(Relation::kFlStat,
             matrix_edges(mi.fl, ResolveThreshold(thresholds.tau1, mi.fl.data())));
  g.SetEdges(Relation::kVlStat,
             matrix_edges(mi.vl, ResolveThreshold(thresholds.tau3, mi.vl.data())));

  {
    std::vector<double> raw;
    raw.reserve(mi.ff.size());
    double max = 0.0;
    for (const auto& p : mi.ff) {
      raw.push_back(p.mi);
      max = std::max(max, p.mi);
    }
    const double cut = ResolveThreshold(thresholds.tau2, raw);
    std::vector<Edge> edges;
    for (const auto& p : mi.ff) {
      if (p.mi > cut && max > 0.0 && p.a != p.b) {
        edges.push_back({p.a, p.b, p.mi / max});
        edges.push_back({p.b, p.a, p.mi / max});
      }
    }
    g.SetEdges(Relation::kFfStat, std::move(edges));
  }

  {
    std::int64_t max = 0;
    for (std::size_t i = 0; i < nodes.labels; ++i) {
      for (std::size_t j = 0; j < nodes.labels; ++j) {
        if (i != j) max = std::max(max, mi.cooc(i, j));
      }
    }
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < nodes.labels; ++i) {
      for (std::size_t j = 0; j < nodes.labels; ++j) {
        if (i != j && mi.cooc(i, j) > 0) {
          edges.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                           static_cast<double>(mi.cooc(i, j)) / static_cast<double>(max)});
        }
      }
    }
    g.SetEdges(Relation::kLlStat, std::move(edges));
  }

  for (Relation r : {Relation::kFlStat, Relation::kFfStat, Relation::kLlStat, Relation::kVlStat}) {
    WarnIfEmpty(g, r);
  }
  return g;
}

HeteroGraph BuildSemanticGraph(const NodeSets& nodes, const SemanticScoreSet& scores,
                               double delta) {
  if (!(delta >= 0.0 && delta <= 1.0)) {
    throw Error(ErrorCode::kConfigError, "delta must lie in [0,1]");
  }
  std::vector<Edge> fl, vl, ll;
  for (const auto& [key, entry] : scores.entries) {
    if (!(entry.score > delta)) continue;
    const auto a = static_cast<std::uint32_t>(key.a);
    const auto b = static_cast<std::uint32_t>(key.b);
    switch (key.kind) {
      case PairKind::kFeatureLabel:
        fl.push_back({a, b, entry.score});
        break;
      case PairKind::kViewLabel:
        vl.push_back({a, b, entry.score});
        break;
      case PairKind::kLabelLabel:
        if (a == b) break;
        ll.push_back({a, b, entry.score});
        ll.push_back({b, a, entry.score});
        break;
    }
  }
  HeteroGraph g(nodes);
  g.SetEdges(Relation::kFlSem, std::move(fl));
  g.SetEdges(Relation::kVlSem, std::move(vl));
  g.SetEdges(Relation::kLlSem, std::move(ll));
  return g;
}

HeteroGraph Merge(const HeteroGraph& statistical, const HeteroGraph& semantic) {
  if (!(statistical.nodes() == semantic.nodes())) {
    throw Error(ErrorCode::kNodeSetMismatch, "graphs have different node sets");
  }
  HeteroGraph out = statistical;
  for (Relation r : AllRelations()) {
    const auto& extra = semantic.edges(r);
    if (extra.empty()) continue;
    if (!out.edges(r).empty()) {
      throw Error(ErrorCode::kInvalidArgument,
                  std::string("relation ") + Info(r).name + " present in both graphs");
    }
    out.SetEdges(r, extra);
  }
  return out;
}

std::string DumpGraph(const HeteroGraph& graph) {
  std::ostringstream out;
  const auto& n = graph.nodes();
  out << "mvfs-heterograph 1\n";
  out << "nodes " << n.views << " " << n.features << " " << n.labels << "\n";
  out << "feature_view";
  for (auto v : n.feature_view) out << " " << v;
  out << "\n";
  for (Relation r : AllRelations()) {
    const auto& edges = graph.edges(r);
    out << "relation " << Info(r).name << " " << edges.size() << "\n";
    for (const auto& e : edges) {
      out << e.source << " " << e.target << " " << FormatDouble(e.weight) << "\n";
    }
  }
  return out.str();
}

HeteroGraph ParseGraph(std::string_view text) {
  std::istringstream in{std::string(text)};
  auto fail = [](const std::string& what) {
    throw Error(ErrorCode::kParseError, "graph dump: " + what);
  };
  std::string word;
  int version = 0;
  if (!(in >> word >> version) || word != "mvfs-heterograph" || version != 1) fail("bad header");
  NodeSets nodes;
  if (!(in >> word >> nodes.views >> nodes.features >> nodes.labels) || word != "nodes") {
    fail("bad node line");
  }
  if (!(in >> word) || word != "feature_view") fail("missing feature_view");
  nodes.feature_view.resize(nodes.features);
  for (auto& v : nodes.feature_view) {
    if (!(in >> v)) fail("short feature_view");
  }
  HeteroGraph g(nodes);
  std::size_t count = 0;
  while (in >> word) {
    if (word != "relation") fail("expected 'relation', got '" + word + "'");
    std::string name;
    if (!(in >> name >> count)) fail("bad relation header");
    const Relation r = RelationFromName(name);
    std::vector<Edge> edges(count);
    for (auto& e : edges) {
      std::string w;
      if (!(in >> e.source >> e.target >> w)) fail("short edge list for " + name);
      auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), e.weight);
      if (ec != std::errc() || ptr != w.data() + w.size()) fail("bad weight '" + w + "'");
    }
    g.SetEdges(r, std::move(edges));
  }
  return g;
}

}  // namespace mvfs
