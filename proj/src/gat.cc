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

#include "mvfs/gat.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "json.hpp"
#include "mvfs/error.h"
#include "mvfs/util.h"

namespace mvfs {

using nlohmann::json;

void TrainConfig::Validate() const {
  if (hidden == 0 || layers == 0 || epochs == 0 || !(learning_rate > 0.0) ||
      !(negative_ratio >= 0.0) || !(lambda >= 0.0) || !(leaky_slope > 0.0)) {
    throw Error(ErrorCode::kConfigError, "train config values must be positive");
  }
  if (!seed) throw Error(ErrorCode::kConfigError, "train config needs a seed");
}

std::string TrainConfig::Digest() const {
  const json j{{"hidden", hidden},           {"layers", layers},
               {"epochs", epochs},           {"learning_rate", learning_rate},
               {"negative_ratio", negative_ratio}, {"lambda", lambda},
               {"leaky_slope", leaky_slope}, {"seed", seed.value_or(0)}};
  return Sha256Hex(j.dump());
}

namespace {

constexpr std::size_t TypeIndex(NodeType t) { return static_cast<std::size_t>(t); }

}  // namespace

Matrix RawNodeStatistics(const HeteroGraph& graph, NodeType type) {
  const std::size_t n = graph.nodes().Count(type);
  Matrix out(n, kInputDim, 0.0);
  std::vector<double> sum(n), max(n), degree(n);
  for (Relation r : AllRelations()) {
    const auto& info = Info(r);
    std::fill(sum.begin(), sum.end(), 0.0);
    std::fill(max.begin(), max.end(), 0.0);
    std::fill(degree.begin(), degree.end(), 0.0);
    for (const auto& e : graph.edges(r)) {
      auto touch = [&](std::uint32_t node) {
        sum[node] += e.weight;
        max[node] = std::max(max[node], e.weight);
        degree[node] += 1.0;
      };
      if (info.source == type) touch(e.source);
      // Undirected relations hold both directions; the outgoing copy
      // already covers each incidence.
      if (info.target == type && !info.undirected) touch(e.target);
    }
    const std::size_t col = static_cast<std::size_t>(r) * kStatsPerRelation;
    for (std::size_t i = 0; i < n; ++i) {
      out(i, col) = sum[i];
      out(i, col + 1) = max[i];
      out(i, col + 2) = degree[i] > 0 ? sum[i] / degree[i] : 0.0;
      out(i, col + 3) = degree[i];
    }
  }
  return out;
}

NodeFeatureTable InitNodeFeatures(const HeteroGraph& graph) {
  NodeFeatureTable table;
  for (NodeType t : {NodeType::kView, NodeType::kFeature, NodeType::kLabel}) {
    Matrix m = RawNodeStatistics(graph, t);
    const std::size_t n = m.rows();
    for (std::size_t c = 0; c < m.cols(); ++c) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += m(i, c);
      mean = n ? mean / static_cast<double>(n) : 0.0;
      double var = 0.0;
      for (std::size_t i = 0; i < n; ++i) var += (m(i, c) - mean) * (m(i, c) - mean);
      const double sd = n ? std::sqrt(var / static_cast<double>(n)) : 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (sd > 1e-12) m(i, c) = (m(i, c) - mean) / sd;
      }
    }
    table.by_type[TypeIndex(t)] = std::move(m);
  }
  return table;
}

const std::vector<MessageRelationInfo>& MessageRelations() {
  static const std::vector<MessageRelationInfo> relations = [] {
    std::vector<MessageRelationInfo> out;
    for (Relation r : AllRelations()) {
      const auto& info = Info(r);
      out.push_back({r, false, info.source, info.target, info.name});
      if (!info.undirected) {
        out.push_back({r, true, info.target, info.source, std::string("rev_") + info.name});
      }
    }
    return out;
  }();
  return relations;
}

std::string GatParameters::BlockName(std::size_t i) const {
  const auto& rels = MessageRelations();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    const std::string prefix = "layer" + std::to_string(l + 1) + "/";
    for (std::size_t r = 0; r < layer.relations.size(); ++r) {
      const auto& s = layer.relations[r];
      const std::size_t h = layer.out_dim;
      if (i >= s.weight && i < s.weight + layer.in_dim * h) return prefix + rels[r].name + "/weight";
      if (i >= s.attn_source && i < s.attn_source + h) return prefix + rels[r].name + "/attn_source";
      if (i >= s.attn_target && i < s.attn_target + h) return prefix + rels[r].name + "/attn_target";
      if (i == s.edge_coef) return prefix + rels[r].name + "/edge_coef";
    }
    for (std::size_t t = 0; t < kNumNodeTypes; ++t) {
      if (i >= layer.type_bias[t] && i < layer.type_bias[t] + layer.out_dim) {
        return prefix + NodeTypeName(static_cast<NodeType>(t)) + "_bias";
      }
    }
  }
  if (i == readout_bias) return "readout/bias";
  return "readout/weight";
}

GatParameters InitParameters(const TrainConfig& config) {
  config.Validate();
  GatParameters p;
  p.config = config;
  std::size_t offset = 0;
  auto take = [&](std::size_t n) {
    const std::size_t at = offset;
    offset += n;
    return at;
  };
  const std::size_t h = config.hidden;
  for (std::size_t l = 0; l < config.layers; ++l) {
    GatParameters::LayerSlot layer;
    layer.in_dim = l == 0 ? kInputDim : h;
    layer.out_dim = h;
    for (std::size_t r = 0; r < MessageRelations().size(); ++r) {
      GatParameters::RelationSlot s;
      s.weight = take(layer.in_dim * h);
      s.attn_source = take(h);
      s.attn_target = take(h);
      s.edge_coef = take(1);
      layer.relations.push_back(s);
    }
    for (auto& b : layer.type_bias) b = take(h);
    p.layers.push_back(std::move(layer));
  }
  p.readout_weight = take(h);
  p.readout_bias = take(1);
  p.values.assign(offset, 0.0);

  Rng rng(*config.seed);
  auto glorot = [&](std::size_t at, std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < fan_in * fan_out; ++i) p.values[at + i] = rng.Uniform(-limit, limit);
  };
  for (const auto& layer : p.layers) {
    for (const auto& s : layer.relations) {
      glorot(s.weight, layer.in_dim, layer.out_dim);
      glorot(s.attn_source, layer.out_dim, 1);
      glorot(s.attn_target, layer.out_dim, 1);
    }
  }
  glorot(p.readout_weight, h, 1);
  return p;
}

namespace {

struct MsgEdge {
  std::uint32_t source;
  std::uint32_t target;
  double weight;
};

struct MsgRelation {
  NodeType source;
  NodeType target;
  std::vector<MsgEdge> edges;       // grouped by target, then source
  std::vector<std::size_t> groups;  // group g spans [groups[g], groups[g+1])
};

struct MessageGraph {
  std::array<std::size_t, kNumNodeTypes> counts{};
  std::vector<MsgRelation> relations;
  std::array<std::vector<std::uint8_t>, kNumNodeTypes> isolated;
};

MessageGraph BuildMessageGraph(const HeteroGraph& graph) {
  MessageGraph mg;
  for (std::size_t t = 0; t < kNumNodeTypes; ++t) {
    mg.counts[t] = graph.nodes().Count(static_cast<NodeType>(t));
    mg.isolated[t].assign(mg.counts[t], 1);
  }
  for (const auto& info : MessageRelations()) {
    MsgRelation rel{info.source, info.target, {}, {}};
    for (const auto& e : graph.edges(info.relation)) {
      rel.edges.push_back(info.reversed ? MsgEdge{e.target, e.source, e.weight}
                                        : MsgEdge{e.source, e.target, e.weight});
    }
    std::sort(rel.edges.begin(), rel.edges.end(), [](const MsgEdge& a, const MsgEdge& b) {
      return a.target != b.target ? a.target < b.target : a.source < b.source;
    });
    for (std::size_t k = 0; k < rel.edges.size(); ++k) {
      if (k == 0 || rel.edges[k].target != rel.edges[k - 1].target) rel.groups.push_back(k);
      mg.isolated[TypeIndex(info.target)][rel.edges[k].target] = 0;
    }
    rel.groups.push_back(rel.edges.size());
    mg.relations.push_back(std::move(rel));
  }
  return mg;
}

// out = in (n x k) * W (k x h, row-major at `w`).
void MatMul(const Matrix& in, const double* w, std::size_t h, Matrix& out) {
  const std::size_t n = in.rows();
  const std::size_t k = in.cols();
  out = Matrix(n, h, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = &in(i, 0);
    double* o = &out(i, 0);
    for (std::size_t a = 0; a < k; ++a) {
      const double xa = x[a];
      if (xa == 0.0) continue;
      const double* wr = w + a * h;
      for (std::size_t c = 0; c < h; ++c) o[c] += xa * wr[c];
    }
  }
}

double Dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

struct RelationCache {
  Matrix g_source;  // n_src x h
  Matrix g_target;  // n_tgt x h
  std::vector<double> logits;  // pre-activation, per edge
  std::vector<double> alpha;
};

struct LayerCache {
  std::array<Matrix, kNumNodeTypes> input;
  std::array<Matrix, kNumNodeTypes> pre;  // before the nonlinearity
  std::vector<RelationCache> relations;
};

// Runs one layer from `input`, filling `cache` and returning the output.
std::array<Matrix, kNumNodeTypes> RunLayer(const GatParameters& params, const MessageGraph& mg,
                                           std::size_t l,
                                           const std::array<Matrix, kNumNodeTypes>& input,
                                           LayerCache* cache,
                                           std::vector<AttentionRecord>* attention) {
  const auto& layer = params.layers.at(l);
  const std::size_t h = layer.out_dim;
  const double slope = params.config.leaky_slope;
  const double* v = params.values.data();
  for (std::size_t t = 0; t < kNumNodeTypes; ++t) {
    if (input[t].rows() != mg.counts[t] || (mg.counts[t] > 0 && input[t].cols() != layer.in_dim)) {
      throw Error(ErrorCode::kShapeMismatch,
                  std::string("layer input for ") + NodeTypeName(static_cast<NodeType>(t)) +
                      " nodes has shape " + std::to_string(input[t].rows()) + "x" +
                      std::to_string(input[t].cols()));
    }
  }

  std::array<Matrix, kNumNodeTypes> pre;
  for (std::size_t t = 0; t < kNumNodeTypes; ++t) pre[t] = Matrix(mg.counts[t], h, 0.0);
  if (cache) {
    cache->input = input;
    cache->relations.assign(mg.relations.size(), {});
  }

  for (std::size_t r = 0; r < mg.relations.size(); ++r) {
    const auto& rel = mg.relations[r];
    if (rel.edges.empty()) continue;
    const auto& slot = layer.relations[r];
    RelationCache rc;
    MatMul(input[TypeIndex(rel.source)], v + slot.weight, h, rc.g_source);
    MatMul(input[TypeIndex(rel.target)], v + slot.weight, h, rc.g_target);
    const double* a_src = v + slot.attn_source;
    const double* a_dst = v + slot.attn_target;
    const double coef = v[slot.edge_coef];
    rc.logits.resize(rel.edges.size());
    rc.alpha.resize(rel.edges.size());
    Matrix& out = pre[TypeIndex(rel.target)];
    for (std::size_t g = 0; g + 1 < rel.groups.size(); ++g) {
      const std::size_t begin = rel.groups[g];
      const std::size_t end = rel.groups[g + 1];
      const std::uint32_t target = rel.edges[begin].target;
      const double pd = Dot(&rc.g_target(target, 0), a_dst, h);
      double max_e = -std::numeric_limits<double>::infinity();
      for (std::size_t k = begin; k < end; ++k) {
        const auto& e = rel.edges[k];
        const double s = Dot(&rc.g_source(e.source, 0), a_src, h) + pd + coef * e.weight;
        rc.logits[k] = s;
        const double act = s > 0.0 ? s : slope * s;
        rc.alpha[k] = act;
        max_e = std::max(max_e, act);
      }
      double z = 0.0;
      for (std::size_t k = begin; k < end; ++k) {
        rc.alpha[k] = std::exp(rc.alpha[k] - max_e);
        z += rc.alpha[k];
      }
      double* o = &out(target, 0);
      for (std::size_t k = begin; k < end; ++k) {
        rc.alpha[k] /= z;
        const double* gs = &rc.g_source(rel.edges[k].source, 0);
        for (std::size_t c = 0; c < h; ++c) o[c] += rc.alpha[k] * gs[c];
        if (attention) {
          attention->push_back({l, r, rel.edges[k].source, target, rc.alpha[k]});
        }
      }
    }
    if (cache) cache->relations[r] = std::move(rc);
  }

  for (std::size_t t = 0; t < kNumNodeTypes; ++t) {
    const double* bias = v + layer.type_bias[t];
    for (std::size_t i = 0; i < mg.counts[t]; ++i) {
      if (!mg.isolated[t][i]) continue;
      for (std::size_t c = 0; c < h; ++c) pre[t](i, c) += bias[c];
    }
  }

  const bool last = l + 1 == params.layers.size();
  std::array<Matrix, kNumNodeTypes> out = pre;
  if (!last) {
    for (auto& m : out) {
      for (double& x : m.data()) x = x > 0.0 ? x : std::expm1(x);
    }
  }
  if (cache) cache->pre = std::move(pre);
  return out;
}

std::array<Matrix, kNumNodeTypes> InputArrays(const HeteroGraph& graph) {
  return InitNodeFeatures(graph).by_type;
}

struct ModelContext {
  MessageGraph mg;
  std::array<Matrix, kNumNodeTypes> input;
};

std::array<Matrix, kNumNodeTypes> ForwardAll(const GatParameters& params, const ModelContext& ctx,
                                             std::vector<LayerCache>* caches,
                                             std::vector<AttentionRecord>* attention) {
  std::array<Matrix, kNumNodeTypes> h = ctx.input;
  if (caches) caches->assign(params.layers.size(), {});
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    h = RunLayer(params, ctx.mg, l, h, caches ? &(*caches)[l] : nullptr, attention);
  }
  return h;
}

// Backpropagates dZ (final-layer output gradients) into `grad`.
void Backward(const GatParameters& params, const ModelContext& ctx,
              const std::vector<LayerCache>& caches, std::array<Matrix, kNumNodeTypes> d_out,
              std::vector<double>& grad) {
  const double* v = params.values.data();
  const double slope = params.config.leaky_slope;
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const auto& layer = params.layers[l];
    const auto& cache = caches[l];
    const std::size_t h = layer.out_dim;
    const std::size_t in_dim = layer.in_dim;
    const bool last = l + 1 == params.layers.size();

    std::array<Matrix, kNumNodeTypes> d_pre = std::move(d_out);
    if (!last) {
      for (std::size_t t = 0; t < kNumNodeTypes; ++t) {
        auto& d = d_pre[t].data();
        const auto& p = cache.pre[t].data();
        for (std::size_t i = 0; i < d.size(); ++i) {
          if (p[i] <= 0.0) d[i] *= std::exp(p[i]);
        }
      }
    }
    for (std::size_t t = 0; t < kNumNodeTypes; ++t) {
      double* gb = grad.data() + layer.type_bias[t];
      for (std::size_t i = 0; i < ctx.mg.counts[t]; ++i) {
        if (!ctx.mg.isolated[t][i]) continue;
        for (std::size_t c = 0; c < h; ++c) gb[c] += d_pre[t](i, c);
      }
    }

    std::array<Matrix, kNumNodeTypes> d_in;
    for (std::size_t t = 0; t < kNumNodeTypes; ++t) d_in[t] = Matrix(ctx.mg.counts[t], in_dim, 0.0);

    for (std::size_t r = 0; r < ctx.mg.relations.size(); ++r) {
      const auto& rel = ctx.mg.relations[r];
      if (rel.edges.empty()) continue;
      const auto& slot = layer.relations[r];
      const auto& rc = cache.relations[r];
      const std::size_t ts = TypeIndex(rel.source);
      const std::size_t tt = TypeIndex(rel.target);
      const double* a_src = v + slot.attn_source;
      const double* a_dst = v + slot.attn_target;

      Matrix d_gs(ctx.mg.counts[ts], h, 0.0);
      Matrix d_gt(ctx.mg.counts[tt], h, 0.0);
      std::vector<double> d_ps(ctx.mg.counts[ts], 0.0);
      std::vector<double> d_pd(ctx.mg.counts[tt], 0.0);
      double d_coef = 0.0;

      std::vector<double> d_alpha;
      for (std::size_t g = 0; g + 1 < rel.groups.size(); ++g) {
        const std::size_t begin = rel.groups[g];
        const std::size_t end = rel.groups[g + 1];
        const std::uint32_t target = rel.edges[begin].target;
        const double* d_o = &d_pre[tt](target, 0);
        d_alpha.assign(end - begin, 0.0);
        double weighted = 0.0;
        for (std::size_t k = begin; k < end; ++k) {
          const std::uint32_t u = rel.edges[k].source;
          d_alpha[k - begin] = Dot(d_o, &rc.g_source(u, 0), h);
          weighted += rc.alpha[k] * d_alpha[k - begin];
          double* dg = &d_gs(u, 0);
          for (std::size_t c = 0; c < h; ++c) dg[c] += rc.alpha[k] * d_o[c];
        }
        for (std::size_t k = begin; k < end; ++k) {
          const double d_e = rc.alpha[k] * (d_alpha[k - begin] - weighted);
          const double d_s = d_e * (rc.logits[k] > 0.0 ? 1.0 : slope);
          d_ps[rel.edges[k].source] += d_s;
          d_pd[target] += d_s;
          d_coef += d_s * rel.edges[k].weight;
        }
      }
      grad[slot.edge_coef] += d_coef;

      double* g_as = grad.data() + slot.attn_source;
      for (std::size_t u = 0; u < d_ps.size(); ++u) {
        if (d_ps[u] == 0.0) continue;
        const double* gs = &rc.g_source(u, 0);
        double* dg = &d_gs(u, 0);
        for (std::size_t c = 0; c < h; ++c) {
          g_as[c] += d_ps[u] * gs[c];
          dg[c] += d_ps[u] * a_src[c];
        }
      }
      double* g_ad = grad.data() + slot.attn_target;
      for (std::size_t t = 0; t < d_pd.size(); ++t) {
        if (d_pd[t] == 0.0) continue;
        const double* gt = &rc.g_target(t, 0);
        double* dg = &d_gt(t, 0);
        for (std::size_t c = 0; c < h; ++c) {
          g_ad[c] += d_pd[t] * gt[c];
          dg[c] += d_pd[t] * a_dst[c];
        }
      }

      // W is shared by the source and target projections.
      double* g_w = grad.data() + slot.weight;
      const double* w = v + slot.weight;
      auto accumulate = [&](const Matrix& in, const Matrix& d_g, Matrix& d_input) {
        for (std::size_t i = 0; i < in.rows(); ++i) {
          const double* dg = &d_g(i, 0);
          bool any = false;
          for (std::size_t c = 0; c < h && !any; ++c) any = dg[c] != 0.0;
          if (!any) continue;
          const double* x = &in(i, 0);
          double* dx = &d_input(i, 0);
          for (std::size_t a = 0; a < in_dim; ++a) {
            double* gw = g_w + a * h;
            const double* wr = w + a * h;
            double acc = 0.0;
            for (std::size_t c = 0; c < h; ++c) {
              gw[c] += x[a] * dg[c];
              acc += dg[c] * wr[c];
            }
            dx[a] += acc;
          }
        }
      };
      accumulate(cache.input[ts], d_gs, d_in[ts]);
      accumulate(cache.input[tt], d_gt, d_in[tt]);
    }
    d_out = std::move(d_in);
  }
}

double Sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

LossValue LossWithContext(const GatParameters& params, const ModelContext& ctx,
                          const Supervision& sup, std::vector<double>* gradient) {
  std::vector<LayerCache> caches;
  const auto z = ForwardAll(params, ctx, gradient ? &caches : nullptr, nullptr);
  const std::size_t h = params.config.hidden;
  const double* v = params.values.data();

  std::array<Matrix, kNumNodeTypes> d_z;
  for (std::size_t t = 0; t < kNumNodeTypes; ++t) d_z[t] = Matrix(z[t].rows(), h, 0.0);

  LossValue loss;
  const double n_rec = static_cast<double>(sup.pairs.size());
  for (const auto& p : sup.pairs) {
    const double* za = &z[TypeIndex(p.type_a)](p.a, 0);
    const double* zb = &z[TypeIndex(p.type_b)](p.b, 0);
    const double prob = Sigmoid(Dot(za, zb, h));
    const double diff = prob - p.target;
    loss.reconstruction += diff * diff / n_rec;
    if (gradient) {
      const double coeff = 2.0 * diff * prob * (1.0 - prob) / n_rec;
      double* da = &d_z[TypeIndex(p.type_a)](p.a, 0);
      double* db = &d_z[TypeIndex(p.type_b)](p.b, 0);
      for (std::size_t c = 0; c < h; ++c) {
        da[c] += coeff * zb[c];
        db[c] += coeff * za[c];
      }
    }
  }

  const Matrix& zf = z[TypeIndex(NodeType::kFeature)];
  const double n_f = static_cast<double>(zf.rows());
  const double* w_out = v + params.readout_weight;
  const double lambda = params.config.lambda;
  for (std::size_t f = 0; f < zf.rows(); ++f) {
    const double y = Dot(&zf(f, 0), w_out, h) + v[params.readout_bias];
    const double diff = y - sup.score_targets[f];
    loss.score += diff * diff / n_f;
    if (gradient && lambda != 0.0) {
      const double g = lambda * 2.0 * diff / n_f;
      double* gw = gradient->data() + params.readout_weight;
      double* dz = &d_z[TypeIndex(NodeType::kFeature)](f, 0);
      for (std::size_t c = 0; c < h; ++c) {
        gw[c] += g * zf(f, c);
        dz[c] += g * w_out[c];
      }
      (*gradient)[params.readout_bias] += g;
    }
  }
  loss.total = loss.reconstruction + lambda * loss.score;
  if (gradient) Backward(params, ctx, caches, std::move(d_z), *gradient);
  return loss;
}

ModelContext MakeContext(const HeteroGraph& graph) {
  return {BuildMessageGraph(graph), InputArrays(graph)};
}

}  // namespace

Embeddings LayerForward(const GatParameters& params, const HeteroGraph& graph,
                        std::size_t layer_index, const Embeddings& input,
                        std::vector<AttentionRecord>* attention) {
  if (layer_index >= params.layers.size()) {
    throw Error(ErrorCode::kShapeMismatch, "layer index out of range");
  }
  const MessageGraph mg = BuildMessageGraph(graph);
  Embeddings out;
  out.by_type = RunLayer(params, mg, layer_index, input.by_type, nullptr, attention);
  return out;
}

Embeddings Forward(const GatParameters& params, const HeteroGraph& graph,
                   std::vector<AttentionRecord>* attention) {
  const ModelContext ctx = MakeContext(graph);
  Embeddings out;
  out.by_type = ForwardAll(params, ctx, nullptr, attention);
  return out;
}

Supervision BuildSupervision(const HeteroGraph& graph, const TrainConfig& config) {
  config.Validate();
  const auto& nodes = graph.nodes();
  Supervision sup;

  std::set<std::pair<std::uint32_t, std::uint32_t>> fl_edges, ll_edges;
  for (Relation r : {Relation::kFlStat, Relation::kFlSem}) {
    for (const auto& e : graph.edges(r)) {
      sup.pairs.push_back({NodeType::kFeature, e.source, NodeType::kLabel, e.target, e.weight});
      fl_edges.insert({e.source, e.target});
    }
  }
  if (fl_edges.empty()) {
    throw Error(ErrorCode::kNoSupervisionEdges, "graph has no feature-label edge");
  }
  for (Relation r : {Relation::kLlStat, Relation::kLlSem}) {
    for (const auto& e : graph.edges(r)) {
      if (e.source > e.target) continue;
      sup.pairs.push_back({NodeType::kLabel, e.source, NodeType::kLabel, e.target, e.weight});
      ll_edges.insert({e.source, e.target});
    }
  }
  sup.positives = sup.pairs.size();

  Rng rng(*config.seed ^ 0x9e3779b97f4a7c15ULL);
  auto sample = [&](std::vector<ReconstructionPair> pool, std::size_t count) {
    count = std::min(count, pool.size());
    for (std::size_t i = 0; i < count; ++i) {
      std::swap(pool[i], pool[i + rng.Below(pool.size() - i)]);
      sup.pairs.push_back(pool[i]);
    }
  };
  const std::size_t fl_positive = static_cast<std::size_t>(
      std::count_if(sup.pairs.begin(), sup.pairs.end(),
                    [](const auto& p) { return p.type_a == NodeType::kFeature; }));
  const std::size_t ll_positive = sup.positives - fl_positive;
  {
    std::vector<ReconstructionPair> pool;
    for (std::uint32_t f = 0; f < nodes.features; ++f) {
      for (std::uint32_t l = 0; l < nodes.labels; ++l) {
        if (!fl_edges.contains({f, l})) pool.push_back({NodeType::kFeature, f, NodeType::kLabel, l, 0.0});
      }
    }
    sample(std::move(pool), static_cast<std::size_t>(
                                std::llround(config.negative_ratio * static_cast<double>(fl_positive))));
  }
  {
    std::vector<ReconstructionPair> pool;
    for (std::uint32_t a = 0; a < nodes.labels; ++a) {
      for (std::uint32_t b = a + 1; b < nodes.labels; ++b) {
        if (!ll_edges.contains({a, b})) pool.push_back({NodeType::kLabel, a, NodeType::kLabel, b, 0.0});
      }
    }
    sample(std::move(pool), static_cast<std::size_t>(
                                std::llround(config.negative_ratio * static_cast<double>(ll_positive))));
  }

  sup.score_targets.assign(nodes.features, 0.0);
  for (Relation r : {Relation::kFlStat, Relation::kFlSem, Relation::kFfStat}) {
    for (const auto& e : graph.edges(r)) sup.score_targets[e.source] += e.weight;
  }
  const auto [lo, hi] = std::minmax_element(sup.score_targets.begin(), sup.score_targets.end());
  const double min = *lo;
  const double range = *hi - *lo;
  for (double& t : sup.score_targets) t = range > 0.0 ? (t - min) / range : 0.0;
  return sup;
}

LossValue ComputeLoss(const GatParameters& params, const HeteroGraph& graph,
                      const Supervision& supervision, std::vector<double>* gradient) {
  if (gradient) gradient->assign(params.values.size(), 0.0);
  return LossWithContext(params, MakeContext(graph), supervision, gradient);
}

TrainResult Train(const HeteroGraph& graph, const TrainConfig& config) {
  const Supervision sup = BuildSupervision(graph, config);
  const ModelContext ctx = MakeContext(graph);
  GatParameters params = InitParameters(config);

  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  std::vector<double> m(params.values.size(), 0.0);
  std::vector<double> s(params.values.size(), 0.0);
  std::vector<double> grad;

  TrainResult result;
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_values;
  for (std::size_t epoch = 0; epoch <= config.epochs; ++epoch) {
    grad.assign(params.values.size(), 0.0);
    const bool update = epoch < config.epochs;
    const LossValue loss = LossWithContext(params, ctx, sup, update ? &grad : nullptr);
    if (!std::isfinite(loss.total)) {
      throw Error(ErrorCode::kNonFiniteLoss, "loss is not finite at epoch " + std::to_string(epoch));
    }
    if (epoch == 0) result.initial_loss = loss.total;
    if (loss.total < best) {
      best = loss.total;
      best_values = params.values;
    }
    if (!update) break;
    result.loss_history.push_back(loss.total);
    const double t = static_cast<double>(epoch + 1);
    const double c1 = 1.0 - std::pow(kBeta1, t);
    const double c2 = 1.0 - std::pow(kBeta2, t);
    for (std::size_t i = 0; i < params.values.size(); ++i) {
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * grad[i];
      s[i] = kBeta2 * s[i] + (1.0 - kBeta2) * grad[i] * grad[i];
      params.values[i] -= config.learning_rate * (m[i] / c1) / (std::sqrt(s[i] / c2) + kEps);
    }
    for (double x : params.values) {
      if (!std::isfinite(x)) {
        throw Error(ErrorCode::kNonFiniteLoss,
                    "parameters became non-finite at epoch " + std::to_string(epoch));
      }
    }
  }
  params.values = std::move(best_values);
  result.final_loss = best;
  result.params = std::move(params);
  return result;
}

std::vector<double> FeatureScores(const GatParameters& params, const HeteroGraph& graph) {
  const Embeddings z = Forward(params, graph);
  const Matrix& zf = z.of(NodeType::kFeature);
  const std::size_t h = params.config.hidden;
  std::vector<double> scores(zf.rows());
  for (std::size_t f = 0; f < zf.rows(); ++f) {
    scores[f] = Dot(&zf(f, 0), params.values.data() + params.readout_weight, h) +
                params.values[params.readout_bias];
  }
  return scores;
}

GradientCheckResult GradientCheck(GatParameters params, const HeteroGraph& graph, double step,
                                  double tolerance) {
  const Supervision sup = BuildSupervision(graph, params.config);
  const ModelContext ctx = MakeContext(graph);

  for (int round = 0; round < 20; ++round) {
    std::vector<LayerCache> caches;
    ForwardAll(params, ctx, &caches, nullptr);
    bool moved = false;
    for (std::size_t l = 0; l < caches.size(); ++l) {
      for (std::size_t r = 0; r < caches[l].relations.size(); ++r) {
        const auto& logits = caches[l].relations[r].logits;
        const bool near_kink = std::any_of(logits.begin(), logits.end(),
                                           [](double s) { return std::abs(s) < 1e-4; });
        if (near_kink) {
          params.values[params.layers[l].relations[r].edge_coef] += 0.05;
          moved = true;
        }
      }
    }
    if (!moved) break;
  }

  std::vector<double> analytic(params.values.size(), 0.0);
  LossWithContext(params, ctx, sup, &analytic);

  GradientCheckResult result;
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    const double saved = params.values[i];
    params.values[i] = saved + step;
    const double up = LossWithContext(params, ctx, sup, nullptr).total;
    params.values[i] = saved - step;
    const double down = LossWithContext(params, ctx, sup, nullptr).total;
    params.values[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-5});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    ++result.checked;
    if (rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_block = params.BlockName(i);
    }
  }
  if (!(result.max_relative_error < tolerance)) {
    throw Error(ErrorCode::kGradCheckFailure,
                "max relative error " + FormatDouble(result.max_relative_error) + " in " +
                    result.worst_block);
  }
  return result;
}

std::string SerializeCheckpoint(const GatParameters& params) {
  const auto& c = params.config;
  json j{{"format", "mvfs-gat"},
         {"version", 1},
         {"config",
          {{"hidden", c.hidden},
           {"layers", c.layers},
           {"epochs", c.epochs},
           {"learning_rate", c.learning_rate},
           {"negative_ratio", c.negative_ratio},
           {"lambda", c.lambda},
           {"leaky_slope", c.leaky_slope},
           {"seed", c.seed.value_or(0)}}},
         {"config_digest", c.Digest()},
         {"values", params.values}};
  return j.dump() + "\n";
}

GatParameters ParseCheckpoint(std::string_view text) {
  try {
    const json j = json::parse(text);
    if (j.at("format") != "mvfs-gat" || j.at("version") != 1) {
      throw Error(ErrorCode::kParseError, "not an mvfs-gat checkpoint");
    }
    const json& cj = j.at("config");
    TrainConfig c;
    c.hidden = cj.at("hidden").get<std::size_t>();
    c.layers = cj.at("layers").get<std::size_t>();
    c.epochs = cj.at("epochs").get<std::size_t>();
    c.learning_rate = cj.at("learning_rate").get<double>();
    c.negative_ratio = cj.at("negative_ratio").get<double>();
    c.lambda = cj.at("lambda").get<double>();
    c.leaky_slope = cj.at("leaky_slope").get<double>();
    c.seed = cj.at("seed").get<std::uint64_t>();
    if (c.Digest() != j.at("config_digest").get<std::string>()) {
      throw Error(ErrorCode::kParseError, "checkpoint config digest mismatch");
    }
    GatParameters p = InitParameters(c);
    auto values = j.at("values").get<std::vector<double>>();
    if (values.size() != p.values.size()) {
      throw Error(ErrorCode::kShapeMismatch, "checkpoint has " + std::to_string(values.size()) +
                                                 " values, expected " +
                                                 std::to_string(p.values.size()));
    }
    p.values = std::move(values);
    return p;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("checkpoint: ") + e.what());
  }
}

}  // namespace mvfs
