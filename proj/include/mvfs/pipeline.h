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

#ifndef MVFS_PIPELINE_H_
#define MVFS_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mvfs/dataset.h"
#include "mvfs/eval.h"
#include "mvfs/gat.h"
#include "mvfs/graph.h"
#include "mvfs/llm_client.h"
#include "mvfs/semantic.h"
#include "mvfs/stats.h"

namespace mvfs {

enum class RunMode { kStatistical, kSemanticMock, kSemanticLlm, kAblationHalfdata };
const char* RunModeName(RunMode mode);
// Throws ConfigError for unknown names.
RunMode ParseRunMode(std::string_view name);

struct RunConfig {
  std::filesystem::path manifest;
  RunMode mode = RunMode::kStatistical;
  Thresholds thresholds;
  MiOptions mi;
  TrainConfig train;  // seed falls back to protocol.base_seed
  ProtocolConfig protocol{DefaultRatios()};
  std::filesystem::path output_dir;

  // Semantic scoring.
  ChatEndpoint endpoint;
  std::optional<std::filesystem::path> synonyms;
  std::optional<std::filesystem::path> replay_transcript;
  std::optional<std::filesystem::path> record_transcript;
  std::optional<std::filesystem::path> semantic_cache;
  std::size_t batch_size = 20;
  unsigned semantic_workers = 1;
  double requests_per_second = 0.0;

  // Ablation: fraction (0, 1) of samples used for the statistical graph, and the
  // scorer behind its semantic variants.
  double subsample_fraction = 0.5;
  RunMode ablation_semantic = RunMode::kSemanticMock;

  bool baselines = true;

  // Throws ConfigError.
  void Validate() const;
  std::uint64_t TrainSeed() const { return train.seed.value_or(protocol.base_seed); }

  nlohmann::json ToJson() const;
  // Relative paths resolve against `base`.
  static RunConfig FromJson(const nlohmann::json& j, const std::filesystem::path& base = {});
};

// MI matrices, read from `cache_dir` when a matching cache exists and
// written there otherwise.
MiMatrices ComputeOrLoadMi(const MultiViewDataset& dataset, const MiOptions& options,
                           const std::filesystem::path& cache_dir, bool* from_cache = nullptr);

// Scores the whole catalog with the scorer selected by `mode`
// (kSemanticMock or kSemanticLlm).
SemanticScoreSet ComputeSemanticScores(const LoadedDataset& data, const RunConfig& config,
                                       RunMode mode);

// Statistical graph, merged with the semantic graph when scores are given.
HeteroGraph BuildGraph(const MultiViewDataset& dataset, const MiMatrices& mi,
                       const SemanticScoreSet* scores, const Thresholds& thresholds);

// The 50% (configurable) subsample used for statistical-graph construction
// in ablation mode.
SplitIndices AblationSubsample(std::size_t n, const RunConfig& config);

struct VariantResult {
  std::string name;
  std::vector<double> scores;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

struct RunResult {
  std::vector<VariantResult> variants;
  EvalReport report;
  nlohmann::json manifest;
};

// ingest -> stats -> semantic -> graph -> train -> select -> eval, writing
// every artifact and run_manifest.json into config.output_dir. Errors carry
// the stage name.
RunResult RunPipeline(const RunConfig& config);

// Metric rows, one column per variant, over-ratio means.
std::string FormatAblationCsv(const EvalReport& report, const std::vector<std::string>& variants);

// Per-metric CSV tables and SVG charts over the runs' eval.csv files.
// Returns the written paths. Throws MissingRun.
std::vector<std::filesystem::path> WriteReport(const std::vector<std::filesystem::path>& run_dirs,
                                               const std::filesystem::path& out_dir);

// SVG line chart of one metric against selection ratio with the plotted
// values embedded as a CSV comment.
std::string RenderChart(std::string_view metric, const std::vector<double>& ratios,
                        const std::vector<std::string>& series_names,
                        const std::vector<std::vector<std::optional<double>>>& series);

}  // namespace mvfs

#endif  // MVFS_PIPELINE_H_
