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

#include "mvfs/pipeline.h"

#include <algorithm>
#include <memory>

#include "mvfs/error.h"
#include "mvfs/select.h"
#include "mvfs/util.h"

namespace mvfs {

namespace fs = std::filesystem;
using nlohmann::json;

const char* RunModeName(RunMode mode) {
  switch (mode) {
    case RunMode::kStatistical: return "statistical";
    case RunMode::kSemanticMock: return "semantic-mock";
    case RunMode::kSemanticLlm: return "semantic-llm";
    case RunMode::kAblationHalfdata: return "ablation-halfdata";
  }
  return "?";
}

RunMode ParseRunMode(std::string_view name) {
  for (RunMode m : {RunMode::kStatistical, RunMode::kSemanticMock, RunMode::kSemanticLlm,
                    RunMode::kAblationHalfdata}) {
    if (name == RunModeName(m)) return m;
  }
  throw Error(ErrorCode::kConfigError, "unknown mode '" + std::string(name) +
                                           "' (statistical, semantic-mock, semantic-llm, "
                                           "ablation-halfdata)");
}

void RunConfig::Validate() const {
  if (manifest.empty()) throw Error(ErrorCode::kConfigError, "no dataset manifest");
  if (output_dir.empty()) throw Error(ErrorCode::kConfigError, "no output directory");
  if (mi.bins < 2) throw Error(ErrorCode::kConfigError, "bins must be >= 2");
  if (protocol.repeats == 0) throw Error(ErrorCode::kConfigError, "repeats must be >= 1");
  if (protocol.ratios.empty()) throw Error(ErrorCode::kConfigError, "no selection ratios");
  for (double r : protocol.ratios) {
    if (!(r > 0.0 && r <= 1.0)) {
      throw Error(ErrorCode::kConfigError, "ratio " + FormatDouble(r) + " outside (0, 1]");
    }
  }
  if (!(protocol.train_fraction > 0.0 && protocol.train_fraction < 1.0)) {
    throw Error(ErrorCode::kConfigError, "train fraction must be in (0, 1)");
  }
  if (!(subsample_fraction > 0.0 && subsample_fraction < 1.0)) {
    throw Error(ErrorCode::kConfigError, "subsample fraction must be in (0, 1)");
  }
  if (ablation_semantic != RunMode::kSemanticMock && ablation_semantic != RunMode::kSemanticLlm) {
    throw Error(ErrorCode::kConfigError, "ablation scorer must be semantic-mock or semantic-llm");
  }
  if (!(thresholds.delta >= 0.0 && thresholds.delta <= 1.0)) {
    throw Error(ErrorCode::kConfigError, "delta must be in [0, 1]");
  }
  if (batch_size == 0) throw Error(ErrorCode::kConfigError, "batch size must be >= 1");
  TrainConfig t = train;
  t.seed = TrainSeed();
  t.Validate();
}

namespace {

json OptionalPath(const std::optional<fs::path>& p) {
  return p ? json(p->string()) : json(nullptr);
}

std::optional<fs::path> ReadOptionalPath(const json& j, const char* key, const fs::path& base) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  fs::path p = j.at(key).get<std::string>();
  if (p.is_relative() && !base.empty()) p = base / p;
  return p;
}

template <typename T>
void ReadIf(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

}  // namespace

json RunConfig::ToJson() const {
  return json{
      {"manifest", manifest.string()},
      {"mode", RunModeName(mode)},
      {"thresholds",
       {{"tau1", thresholds.tau1.ToString()},
        {"tau2", thresholds.tau2.ToString()},
        {"tau3", thresholds.tau3.ToString()},
        {"delta", thresholds.delta}}},
      {"mi", {{"bins", mi.bins}, {"ff_top_m", mi.ff_top_m}, {"workers", mi.workers}}},
      {"train",
       {{"hidden", train.hidden},
        {"layers", train.layers},
        {"epochs", train.epochs},
        {"learning_rate", train.learning_rate},
        {"negative_ratio", train.negative_ratio},
        {"lambda", train.lambda},
        {"leaky_slope", train.leaky_slope},
        {"seed", TrainSeed()}}},
      {"protocol",
       {{"ratios", protocol.ratios},
        {"repeats", protocol.repeats},
        {"base_seed", protocol.base_seed},
        {"train_fraction", protocol.train_fraction},
        {"knn_k", protocol.knn_k},
        {"smoothing", protocol.smoothing},
        {"workers", protocol.workers}}},
      {"output_dir", output_dir.string()},
      {"semantic",
       {{"url", endpoint.url},
        {"model", endpoint.model},
        {"api_key_env", endpoint.api_key_env},
        {"temperature", endpoint.temperature},
        {"timeout_seconds", endpoint.timeout_seconds},
        {"synonyms", OptionalPath(synonyms)},
        {"replay", OptionalPath(replay_transcript)},
        {"record", OptionalPath(record_transcript)},
        {"cache", OptionalPath(semantic_cache)},
        {"batch_size", batch_size},
        {"workers", semantic_workers},
        {"requests_per_second", requests_per_second}}},
      {"ablation",
       {{"subsample_fraction", subsample_fraction},
        {"semantic", RunModeName(ablation_semantic)}}},
      {"baselines", baselines}};
}

RunConfig RunConfig::FromJson(const json& j, const fs::path& base) {
  RunConfig c;
  try {
    auto path_of = [&](const char* key) {
      fs::path p = j.at(key).get<std::string>();
      return p.is_relative() && !base.empty() ? base / p : p;
    };
    if (j.contains("manifest")) c.manifest = path_of("manifest");
    if (j.contains("output_dir")) c.output_dir = path_of("output_dir");
    if (j.contains("mode")) c.mode = ParseRunMode(j.at("mode").get<std::string>());
    if (j.contains("thresholds")) {
      const json& t = j.at("thresholds");
      if (t.contains("tau1")) c.thresholds.tau1 = Threshold::Parse(t.at("tau1").get<std::string>());
      if (t.contains("tau2")) c.thresholds.tau2 = Threshold::Parse(t.at("tau2").get<std::string>());
      if (t.contains("tau3")) c.thresholds.tau3 = Threshold::Parse(t.at("tau3").get<std::string>());
      ReadIf(t, "delta", c.thresholds.delta);
    }
    if (j.contains("mi")) {
      const json& m = j.at("mi");
      ReadIf(m, "bins", c.mi.bins);
      ReadIf(m, "ff_top_m", c.mi.ff_top_m);
      ReadIf(m, "workers", c.mi.workers);
    }
    if (j.contains("train")) {
      const json& t = j.at("train");
      ReadIf(t, "hidden", c.train.hidden);
      ReadIf(t, "layers", c.train.layers);
      ReadIf(t, "epochs", c.train.epochs);
      ReadIf(t, "learning_rate", c.train.learning_rate);
      ReadIf(t, "negative_ratio", c.train.negative_ratio);
      ReadIf(t, "lambda", c.train.lambda);
      ReadIf(t, "leaky_slope", c.train.leaky_slope);
      if (t.contains("seed") && !t.at("seed").is_null()) c.train.seed = t.at("seed").get<std::uint64_t>();
    }
    if (j.contains("protocol")) {
      const json& p = j.at("protocol");
      ReadIf(p, "ratios", c.protocol.ratios);
      ReadIf(p, "repeats", c.protocol.repeats);
      ReadIf(p, "base_seed", c.protocol.base_seed);
      ReadIf(p, "train_fraction", c.protocol.train_fraction);
      ReadIf(p, "knn_k", c.protocol.knn_k);
      ReadIf(p, "smoothing", c.protocol.smoothing);
      ReadIf(p, "workers", c.protocol.workers);
    }
    if (j.contains("semantic")) {
      const json& s = j.at("semantic");
      ReadIf(s, "url", c.endpoint.url);
      ReadIf(s, "model", c.endpoint.model);
      ReadIf(s, "api_key_env", c.endpoint.api_key_env);
      ReadIf(s, "temperature", c.endpoint.temperature);
      ReadIf(s, "timeout_seconds", c.endpoint.timeout_seconds);
      c.synonyms = ReadOptionalPath(s, "synonyms", base);
      c.replay_transcript = ReadOptionalPath(s, "replay", base);
      c.record_transcript = ReadOptionalPath(s, "record", base);
      c.semantic_cache = ReadOptionalPath(s, "cache", base);
      ReadIf(s, "batch_size", c.batch_size);
      ReadIf(s, "workers", c.semantic_workers);
      ReadIf(s, "requests_per_second", c.requests_per_second);
    }
    if (j.contains("ablation")) {
      const json& a = j.at("ablation");
      ReadIf(a, "subsample_fraction", c.subsample_fraction);
      if (a.contains("semantic")) c.ablation_semantic = ParseRunMode(a.at("semantic").get<std::string>());
    }
    ReadIf(j, "baselines", c.baselines);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigError, std::string("run config: ") + e.what());
  }
  return c;
}

MiMatrices ComputeOrLoadMi(const MultiViewDataset& dataset, const MiOptions& options,
                           const fs::path& cache_dir, bool* from_cache) {
  const std::string digest = DatasetDigest(dataset);
  const fs::path path = MiCachePath(cache_dir, digest, options);
  if (auto cached = ReadMiCache(path, digest, options)) {
    if (from_cache) *from_cache = true;
    return std::move(*cached);
  }
  MiMatrices mi = ComputeMiMatrices(dataset, options);
  fs::create_directories(cache_dir);
  WriteMiCache(path, mi, digest, options);
  if (from_cache) *from_cache = false;
  return mi;
}

SemanticScoreSet ComputeSemanticScores(const LoadedDataset& data, const RunConfig& config,
                                       RunMode mode) {
  ScoringOptions options;
  options.batch_size = config.batch_size;
  options.workers = config.semantic_workers;
  options.requests_per_second = config.requests_per_second;

  if (mode == RunMode::kSemanticMock) {
    MockAgent agent(config.synonyms ? LoadSynonyms(*config.synonyms) : SynonymTable{});
    ScoreCache cache;
    return ScoreCatalog(data.dataset, data.catalog, agent, cache, options);
  }
  if (mode != RunMode::kSemanticLlm) {
    throw Error(ErrorCode::kConfigError, std::string("mode ") + RunModeName(mode) +
                                             " has no semantic scorer");
  }
  std::unique_ptr<ChatClient> base;
  if (config.replay_transcript) {
    base = std::make_unique<ReplayChatClient>(*config.replay_transcript, config.endpoint.model);
  } else {
    base = std::make_unique<HttpChatClient>(config.endpoint);
  }
  std::unique_ptr<RecordingChatClient> recorder;
  ChatClient* client = base.get();
  if (config.record_transcript) {
    recorder = std::make_unique<RecordingChatClient>(*base, *config.record_transcript);
    client = recorder.get();
  }
  LlmAgent agent(*client);
  std::optional<fs::path> cache_path = config.semantic_cache;
  if (!cache_path && !config.output_dir.empty()) {
    cache_path = config.output_dir / "semantic_cache.ndjson";
  }
  std::unique_ptr<ScoreCache> cache =
      cache_path ? std::make_unique<ScoreCache>(*cache_path) : std::make_unique<ScoreCache>();
  return ScoreCatalog(data.dataset, data.catalog, agent, *cache, options);
}

HeteroGraph BuildGraph(const MultiViewDataset& dataset, const MiMatrices& mi,
                       const SemanticScoreSet* scores, const Thresholds& thresholds) {
  const NodeSets nodes = NodeSetsFor(dataset);
  HeteroGraph stat = BuildStatisticalGraph(nodes, mi, thresholds);
  if (!scores) return stat;
  return Merge(stat, BuildSemanticGraph(nodes, *scores, thresholds.delta));
}

SplitIndices AblationSubsample(std::size_t n, const RunConfig& config) {
  // Offset so the subsample is not the first protocol split.
  return Split(n, config.subsample_fraction, config.protocol.base_seed + 0x5eed0000ULL);
}

namespace {

template <typename F>
auto RunStage(const char* name, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    throw Error(e.code(), std::string("stage ") + name + ": " + e.detail());
  } catch (const std::filesystem::filesystem_error& e) {
    throw Error(ErrorCode::kMissingFile, std::string("stage ") + name + ": " + e.what());
  }
}

struct ArtifactLog {
  fs::path dir;
  json digests = json::object();

  void Write(const std::string& name, const std::string& content) {
    WriteFileAtomic(dir / name, content);
    digests[name] = Sha256Hex(content);
  }
};

}  // namespace

std::string FormatAblationCsv(const EvalReport& report, const std::vector<std::string>& variants) {
  std::string out = "metric";
  for (const auto& v : variants) out += "," + v;
  out += "\n";
  for (std::size_t m = 0; m < kNumMetrics; ++m) {
    out += MetricName(static_cast<Metric>(m));
    for (const auto& v : variants) {
      out += "," + FormatDouble(report.Get(v, std::nullopt, static_cast<Metric>(m)).mean);
    }
    out += "\n";
  }
  return out;
}

RunResult RunPipeline(const RunConfig& config) {
  RunStage("config", [&] {
    config.Validate();
    return 0;
  });
  fs::create_directories(config.output_dir);
  ArtifactLog log{config.output_dir};
  const fs::path cache_dir = config.output_dir / "cache";

  const LoadedDataset data = RunStage("ingest", [&] { return LoadDataset(config.manifest); });
  const MultiViewDataset& ds = data.dataset;

  json stage_notes = json::object();
  bool stats_cached = false;
  const MiMatrices mi = RunStage("stats", [&] {
    return ComputeOrLoadMi(ds, config.mi, cache_dir, &stats_cached);
  });
  stage_notes["stats"] = stats_cached ? "cached" : "computed";

  const bool ablation = config.mode == RunMode::kAblationHalfdata;
  std::optional<SplitIndices> subsample;
  std::optional<MiMatrices> half_mi;
  if (ablation) {
    subsample = AblationSubsample(ds.num_samples(), config);
    bool cached = false;
    half_mi = RunStage("stats", [&] {
      return ComputeOrLoadMi(ds.SelectRows(subsample->train_ids), config.mi, cache_dir, &cached);
    });
    stage_notes["stats_subsample"] = cached ? "cached" : "computed";
  }

  std::optional<SemanticScoreSet> semantic;
  if (config.mode != RunMode::kStatistical) {
    const RunMode scorer = ablation ? config.ablation_semantic : config.mode;
    semantic = RunStage("semantic", [&] { return ComputeSemanticScores(data, config, scorer); });
    log.Write("semantic_scores.json", SerializeScores(*semantic));
  }

  struct VariantPlan {
    std::string name;
    const MiMatrices* mi;
    const SemanticScoreSet* scores;
  };
  std::vector<VariantPlan> plans;
  if (ablation) {
    plans.push_back({RunModeName(config.ablation_semantic), &mi, &*semantic});
    plans.push_back({"statistical", &mi, nullptr});
    plans.push_back({"semantic-small-scale", &*half_mi, &*semantic});
  } else {
    plans.push_back({RunModeName(config.mode), &mi, semantic ? &*semantic : nullptr});
  }

  TrainConfig train = config.train;
  train.seed = config.TrainSeed();
  const auto feature_view = ds.FeatureViews();
  const std::size_t d = ds.num_features();

  RunResult result;
  json variant_notes = json::array();
  for (const auto& plan : plans) {
    const HeteroGraph graph = RunStage("graph", [&] {
      return BuildGraph(ds, *plan.mi, plan.scores, config.thresholds);
    });
    log.Write("graph_" + plan.name + ".txt", DumpGraph(graph));
    const TrainResult trained = RunStage("train", [&] { return Train(graph, train); });
    log.Write("checkpoint_" + plan.name + ".json", SerializeCheckpoint(trained.params));
    VariantResult v{plan.name, FeatureScores(trained.params, graph), trained.initial_loss,
                    trained.final_loss};
    log.Write("scores_" + plan.name + ".csv", FormatScoresCsv(v.scores));
    const std::string dump = RunStage("select", [&] {
      std::vector<SelectionResult> selections;
      for (double r : config.protocol.ratios) {
        selections.push_back(TopK(v.scores, RatioToK(r, d), feature_view, r));
      }
      return FormatSelectionDump(selections, v.scores, feature_view);
    });
    log.Write("selections_" + plan.name + ".csv", dump);
    variant_notes.push_back({{"name", plan.name},
                             {"edges", graph.EdgeCount()},
                             {"initial_loss", v.initial_loss},
                             {"final_loss", v.final_loss}});
    result.variants.push_back(std::move(v));
  }

  std::vector<ProtocolMethod> methods;
  for (const auto& v : result.variants) methods.push_back(FixedScoresMethod(v.name, v.scores));
  if (config.baselines) {
    const auto max_mi = MaxMiScores(mi);
    log.Write("scores_max-mi.csv", FormatScoresCsv(max_mi));
    methods.push_back(FixedScoresMethod("max-mi", max_mi));
    methods.push_back(RandomMethod(d, config.protocol.base_seed));
  }
  result.report = RunStage("eval", [&] { return RunProtocol(ds, methods, config.protocol); });
  log.Write("eval.csv", FormatEvalCsv(result.report));
  log.Write("eval_repeats.csv", FormatRepeatCsv(result.report));
  if (ablation) {
    std::vector<std::string> names;
    for (const auto& v : result.variants) names.push_back(v.name);
    log.Write("ablation.csv", FormatAblationCsv(result.report, names));
  }

  json split_seeds = json::array();
  for (std::size_t r = 0; r < config.protocol.repeats; ++r) {
    split_seeds.push_back(config.protocol.base_seed + r);
  }
  json seeds{{"base_seed", config.protocol.base_seed},
             {"train_seed", *train.seed},
             {"split_seeds", split_seeds},
             {"random_baseline_seeds", split_seeds}};
  if (subsample) seeds["subsample_seed"] = subsample->seed;
  RunConfig resolved = config;
  resolved.manifest = fs::absolute(config.manifest);
  resolved.output_dir = fs::absolute(config.output_dir);
  result.manifest = json{{"format", "mvfs-run"},
                         {"version", 1},
                         {"config", resolved.ToJson()},
                         {"seeds", seeds},
                         {"dataset",
                          {{"digest", DatasetDigest(ds)},
                           {"samples", ds.num_samples()},
                           {"features", d},
                           {"labels", ds.num_labels()},
                           {"views", ds.num_views()}}},
                         {"train_config_digest", train.Digest()},
                         {"stages", stage_notes},
                         {"variants", variant_notes},
                         {"artifacts", log.digests}};
  WriteFileAtomic(config.output_dir / "run_manifest.json", result.manifest.dump(2) + "\n");
  return result;
}

}  // namespace mvfs
