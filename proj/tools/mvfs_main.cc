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

#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mvfs/dataset.h"
#include "mvfs/error.h"
#include "mvfs/eval.h"
#include "mvfs/gat.h"
#include "mvfs/graph.h"
#include "mvfs/pipeline.h"
#include "mvfs/select.h"
#include "mvfs/semantic.h"
#include "mvfs/stats.h"
#include "mvfs/util.h"

namespace {

namespace fs = std::filesystem;
using namespace mvfs;

std::vector<double> ParseRatios(const std::string& text) {
  std::vector<double> out;
  for (const auto& cell : SplitString(text, ',')) {
    const std::string t = Trim(cell);
    if (t.empty()) continue;
    try {
      std::size_t used = 0;
      const double r = std::stod(t, &used);
      if (used != t.size()) throw std::invalid_argument(t);
      out.push_back(r);
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::kConfigError, "bad ratio '" + t + "'");
    }
  }
  if (out.empty()) throw Error(ErrorCode::kConfigError, "empty ratio list");
  return out;
}

std::string JoinRatios(const std::vector<double>& ratios) {
  std::string out;
  for (double r : ratios) out += (out.empty() ? "" : ",") + FormatDouble(r);
  return out;
}

ArffView ParseViewSpec(const std::string& spec) {
  const auto colon = spec.rfind(':');
  if (colon == std::string::npos || colon == 0) {
    throw Error(ErrorCode::kConfigError, "view spec '" + spec + "' is not NAME:COLUMNS");
  }
  try {
    return {spec.substr(0, colon), std::stoul(spec.substr(colon + 1))};
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::kConfigError, "view spec '" + spec + "' is not NAME:COLUMNS");
  }
}

void PrintSummary(const MultiViewDataset& ds) {
  std::cout << "samples " << ds.num_samples() << "  features " << ds.num_features()
            << "  labels " << ds.num_labels() << "  views";
  for (const auto& v : ds.views()) std::cout << " " << v.name << ":" << v.matrix.cols();
  std::cout << "\ndigest " << DatasetDigest(ds) << "\n";
}

// Options shared by commands that build a statistical graph.
struct GraphFlags {
  std::string tau1 = "q0.7", tau2 = "q0.7", tau3 = "q0.7";
  double delta = 0.5;
  int bins = 10;
  std::size_t ff_top_m = 0;
  unsigned workers = 0;

  void Add(CLI::App* cmd) {
    cmd->add_option("--tau1", tau1, "feature-label MI threshold (value or qQUANTILE)");
    cmd->add_option("--tau2", tau2, "feature-feature MI threshold");
    cmd->add_option("--tau3", tau3, "view-label MI threshold");
    cmd->add_option("--delta", delta, "semantic score threshold");
    cmd->add_option("--bins", bins, "equal-frequency bins");
    cmd->add_option("--ff-top-m", ff_top_m, "keep the M strongest feature pairs per feature");
    cmd->add_option("--workers", workers, "MI worker threads (0 = all cores)");
  }
  Thresholds thresholds() const {
    return {Threshold::Parse(tau1), Threshold::Parse(tau2), Threshold::Parse(tau3), delta};
  }
  MiOptions mi() const { return {bins, ff_top_m, workers}; }
};

struct SemanticFlags {
  std::string scorer = "mock";
  std::string synonyms, replay, record, cache;
  std::string url = ChatEndpoint{}.url;
  std::string model = ChatEndpoint{}.model;
  std::string api_key_env = ChatEndpoint{}.api_key_env;
  std::size_t batch_size = 20;
  unsigned workers = 1;
  double rps = 0.0;

  void Add(CLI::App* cmd) {
    cmd->add_option("--synonyms", synonyms, "synonym table for the mock scorer");
    cmd->add_option("--replay", replay, "answer LLM prompts from a recorded transcript");
    cmd->add_option("--record", record, "append LLM exchanges to a transcript");
    cmd->add_option("--semantic-cache", cache, "persistent score cache (NDJSON)");
    cmd->add_option("--url", url, "chat-completions base URL");
    cmd->add_option("--model", model, "LLM model id");
    cmd->add_option("--api-key-env", api_key_env,
                    "name of the environment variable holding the API key");
    cmd->add_option("--batch-size", batch_size, "features per prompt (max 20)");
    cmd->add_option("--semantic-workers", workers, "concurrent prompts");
    cmd->add_option("--requests-per-second", rps, "request rate limit (0 = none)");
  }
  void Apply(RunConfig& c, const CLI::App* cmd) const {
    auto given = [&](const char* name) { return cmd->count(name) > 0; };
    if (given("--synonyms")) c.synonyms = synonyms;
    if (given("--replay")) c.replay_transcript = replay;
    if (given("--record")) c.record_transcript = record;
    if (given("--semantic-cache")) c.semantic_cache = cache;
    if (given("--url")) c.endpoint.url = url;
    if (given("--model")) c.endpoint.model = model;
    if (given("--api-key-env")) c.endpoint.api_key_env = api_key_env;
    if (given("--batch-size")) c.batch_size = batch_size;
    if (given("--semantic-workers")) c.semantic_workers = workers;
    if (given("--requests-per-second")) c.requests_per_second = rps;
  }
};

struct TrainFlags {
  TrainConfig config;
  std::uint64_t seed = 0;

  void Add(CLI::App* cmd) {
    cmd->add_option("--hidden", config.hidden, "hidden width");
    cmd->add_option("--layers", config.layers, "GAT layers");
    cmd->add_option("--epochs", config.epochs, "training epochs");
    cmd->add_option("--lr", config.learning_rate, "Adam learning rate");
    cmd->add_option("--lambda", config.lambda, "weight of the readout loss");
    cmd->add_option("--negative-ratio", config.negative_ratio, "non-edges per edge");
    cmd->add_option("--train-seed", seed, "training seed");
  }
  void Apply(TrainConfig& c, const CLI::App* cmd) const {
    auto given = [&](const char* name) { return cmd->count(name) > 0; };
    if (given("--hidden")) c.hidden = config.hidden;
    if (given("--layers")) c.layers = config.layers;
    if (given("--epochs")) c.epochs = config.epochs;
    if (given("--lr")) c.learning_rate = config.learning_rate;
    if (given("--lambda")) c.lambda = config.lambda;
    if (given("--negative-ratio")) c.negative_ratio = config.negative_ratio;
    if (given("--train-seed")) c.seed = seed;
  }
};

struct ProtocolFlags {
  std::string ratios = JoinRatios(DefaultRatios());
  ProtocolConfig protocol;

  void Add(CLI::App* cmd) {
    cmd->add_option("--ratios", ratios, "comma-separated selection ratios");
    cmd->add_option("--repeats", protocol.repeats, "random splits");
    cmd->add_option("--seed", protocol.base_seed, "base seed; repeat r uses seed + r");
    cmd->add_option("--train-fraction", protocol.train_fraction, "training share of each split");
    cmd->add_option("--knn-k", protocol.knn_k, "ML-kNN neighbors");
    cmd->add_option("--eval-workers", protocol.workers, "repeats evaluated in parallel");
  }
  void Apply(ProtocolConfig& p, const CLI::App* cmd) const {
    auto given = [&](const char* name) { return cmd->count(name) > 0; };
    if (given("--ratios")) p.ratios = ParseRatios(ratios);
    if (given("--repeats")) p.repeats = protocol.repeats;
    if (given("--seed")) p.base_seed = protocol.base_seed;
    if (given("--train-fraction")) p.train_fraction = protocol.train_fraction;
    if (given("--knn-k")) p.knn_k = protocol.knn_k;
    if (given("--eval-workers")) p.workers = protocol.workers;
  }
  ProtocolConfig Resolved(const CLI::App* cmd) const {
    ProtocolConfig p{DefaultRatios()};
    Apply(p, cmd);
    return p;
  }
};

int Main(int argc, char** argv) {
  CLI::App app{"LLM-guided multi-view multi-label feature selection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "mvfs 1.0.0");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate a dataset and write a normalized copy");
  std::string ingest_manifest, ingest_arff, ingest_out;
  std::vector<std::string> ingest_views;
  std::size_t ingest_labels = 0;
  auto* im = ingest->add_option("--manifest", ingest_manifest, "dataset manifest (JSON)");
  auto* ia = ingest->add_option("--arff", ingest_arff, "MULAN ARFF file");
  im->excludes(ia);
  ingest->add_option("--view", ingest_views, "NAME:COLUMNS for ARFF input, in column order");
  ingest->add_option("--labels", ingest_labels, "label attributes at the end of the ARFF file");
  ingest->add_option("--out", ingest_out, "output directory")->required();

  // stats
  auto* stats = app.add_subcommand("stats", "Compute (or load cached) MI matrices");
  std::string stats_manifest, stats_out;
  GraphFlags stats_flags;
  stats->add_option("--manifest", stats_manifest, "dataset manifest")->required();
  stats->add_option("--out", stats_out, "cache directory")->required();
  stats_flags.Add(stats);

  // semantic
  auto* semantic = app.add_subcommand("semantic", "Score feature/view/label pairs");
  std::string sem_manifest, sem_out;
  SemanticFlags sem_flags;
  semantic->add_option("--manifest", sem_manifest, "dataset manifest")->required();
  semantic->add_option("--scorer", sem_flags.scorer, "mock or llm")
      ->check(CLI::IsMember({"mock", "llm"}));
  semantic->add_option("--out", sem_out, "score set (JSON)")->required();
  sem_flags.Add(semantic);

  // graph
  auto* graph = app.add_subcommand("graph", "Build the heterogeneous graph");
  std::string graph_manifest, graph_semantic, graph_cache, graph_out;
  GraphFlags graph_flags;
  graph->add_option("--manifest", graph_manifest, "dataset manifest")->required();
  graph->add_option("--semantic", graph_semantic, "semantic score set to merge");
  graph->add_option("--cache", graph_cache, "MI cache directory");
  graph->add_option("--out", graph_out, "graph dump")->required();
  graph_flags.Add(graph);

  // train
  auto* train = app.add_subcommand("train", "Train the GAT and score features");
  std::string train_graph, train_out, train_scores;
  TrainFlags train_flags;
  bool train_gradcheck = false;
  train->add_option("--graph", train_graph, "graph dump")->required();
  train->add_option("--out", train_out, "checkpoint (JSON)")->required();
  train->add_option("--scores", train_scores, "feature score CSV");
  train->add_flag("--gradient-check", train_gradcheck,
                  "check gradients of the initial parameters first");
  train_flags.Add(train);
  train->get_option("--train-seed")->required();

  // select
  auto* select = app.add_subcommand("select", "Rank features and dump top-k selections");
  std::string select_scores, select_manifest, select_out;
  std::string select_ratios = JoinRatios(DefaultRatios());
  select->add_option("--scores", select_scores, "feature score CSV")->required();
  select->add_option("--manifest", select_manifest, "dataset manifest (for view ids)");
  select->add_option("--ratios", select_ratios, "comma-separated selection ratios");
  select->add_option("--out", select_out, "selection dump (CSV)")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Run the repeated-split ML-kNN protocol");
  std::string eval_manifest, eval_out, eval_repeats_out;
  std::vector<std::string> eval_scores;
  bool eval_random = false, eval_maxmi = false;
  ProtocolFlags eval_flags;
  int eval_bins = 10;
  eval->add_option("--manifest", eval_manifest, "dataset manifest")->required();
  eval->add_option("--scores", eval_scores, "NAME=PATH feature score CSV (repeatable)");
  eval->add_flag("--random-baseline", eval_random, "add seeded random selection");
  eval->add_flag("--max-mi-baseline", eval_maxmi, "add ranking by max feature-label MI");
  eval->add_option("--bins", eval_bins, "bins for the max-MI baseline");
  eval->add_option("--out", eval_out, "aggregate report (CSV)")->required();
  eval->add_option("--repeats-out", eval_repeats_out, "per-repeat rows (CSV)");
  eval_flags.Add(eval);

  // run
  auto* run = app.add_subcommand("run", "Run the whole pipeline");
  std::string run_config, run_manifest, run_out, run_mode, run_ablation_scorer;
  double run_subsample = 0.5;
  bool run_no_baselines = false;
  GraphFlags run_graph;
  SemanticFlags run_sem;
  TrainFlags run_train;
  ProtocolFlags run_protocol;
  run->add_option("--config", run_config, "run config (JSON); flags override it");
  run->add_option("--manifest", run_manifest, "dataset manifest");
  run->add_option("--out", run_out, "output directory");
  run->add_option("--mode", run_mode, "statistical, semantic-mock, semantic-llm, ablation-halfdata");
  run->add_option("--subsample-fraction", run_subsample, "statistics share in ablation mode");
  run->add_option("--ablation-scorer", run_ablation_scorer,
                  "semantic-mock or semantic-llm for ablation mode");
  run->add_flag("--no-baselines", run_no_baselines, "skip random and max-MI baselines");
  run_graph.Add(run);
  run_sem.Add(run);
  run_train.Add(run);
  run_protocol.Add(run);

  // report
  auto* report = app.add_subcommand("report", "Tables and charts across runs");
  std::vector<std::string> report_runs;
  std::string report_out;
  report->add_option("--runs", report_runs, "run directories");
  report->add_option("--out", report_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*ingest) {
    LoadedDataset data;
    if (!ingest_arff.empty()) {
      std::vector<ArffView> views;
      for (const auto& v : ingest_views) views.push_back(ParseViewSpec(v));
      if (views.empty()) throw Error(ErrorCode::kConfigError, "--arff needs at least one --view");
      data = ReadArff(ingest_arff, views, ingest_labels);
    } else if (!ingest_manifest.empty()) {
      data = LoadDataset(ingest_manifest);
    } else {
      throw Error(ErrorCode::kConfigError, "ingest needs --manifest or --arff");
    }
    const fs::path path = WriteDataset(data.dataset, data.catalog, ingest_out);
    PrintSummary(data.dataset);
    std::cout << "wrote " << path.string() << "\n";
  } else if (*stats) {
    const LoadedDataset data = LoadDataset(stats_manifest);
    bool cached = false;
    const MiMatrices mi = ComputeOrLoadMi(data.dataset, stats_flags.mi(), stats_out, &cached);
    WriteFileAtomic(fs::path(stats_out) / "fl.csv", FormatMatrixCsv(mi.fl));
    WriteFileAtomic(fs::path(stats_out) / "vl.csv", FormatMatrixCsv(mi.vl));
    std::cout << (cached ? "loaded cached" : "computed") << " MI: " << mi.fl.rows() << "x"
              << mi.fl.cols() << " feature-label, " << mi.ff.size() << " feature pairs\n";
  } else if (*semantic) {
    RunConfig c;
    sem_flags.Apply(c, semantic);
    const LoadedDataset data = LoadDataset(sem_manifest);
    const RunMode mode = sem_flags.scorer == "llm" ? RunMode::kSemanticLlm : RunMode::kSemanticMock;
    const SemanticScoreSet scores = ComputeSemanticScores(data, c, mode);
    WriteFileAtomic(sem_out, SerializeScores(scores));
    std::cout << "scored " << scores.Count(PairKind::kFeatureLabel) << " feature-label, "
              << scores.Count(PairKind::kViewLabel) << " view-label, "
              << scores.Count(PairKind::kLabelLabel) << " label-label pairs\n";
  } else if (*graph) {
    const LoadedDataset data = LoadDataset(graph_manifest);
    const MiMatrices mi = graph_cache.empty()
                              ? ComputeMiMatrices(data.dataset, graph_flags.mi())
                              : ComputeOrLoadMi(data.dataset, graph_flags.mi(), graph_cache);
    std::optional<SemanticScoreSet> scores;
    if (!graph_semantic.empty()) scores = ParseScores(ReadFile(graph_semantic));
    const HeteroGraph g =
        BuildGraph(data.dataset, mi, scores ? &*scores : nullptr, graph_flags.thresholds());
    WriteFileAtomic(graph_out, DumpGraph(g));
    for (Relation r : AllRelations()) {
      std::cout << Info(r).name << " " << g.edges(r).size() << "\n";
    }
  } else if (*train) {
    const HeteroGraph g = ParseGraph(ReadFile(train_graph));
    TrainConfig config;
    train_flags.Apply(config, train);
    config.Validate();
    if (train_gradcheck) {
      const auto check = GradientCheck(InitParameters(config), g);
      std::cout << "gradient check: max relative error "
                << FormatDouble(check.max_relative_error) << " (" << check.worst_block << ")\n";
    }
    const TrainResult result = Train(g, config);
    WriteFileAtomic(train_out, SerializeCheckpoint(result.params));
    const auto scores = FeatureScores(result.params, g);
    if (!train_scores.empty()) WriteFileAtomic(train_scores, FormatScoresCsv(scores));
    std::cout << "loss " << FormatDouble(result.initial_loss) << " -> "
              << FormatDouble(result.final_loss) << "\n";
  } else if (*select) {
    const auto scores = ParseScoresCsv(ReadFile(select_scores));
    std::vector<std::size_t> feature_view;
    if (!select_manifest.empty()) {
      feature_view = LoadDataset(select_manifest).dataset.FeatureViews();
      if (feature_view.size() != scores.size()) {
        throw Error(ErrorCode::kLengthMismatch, "scores do not match the dataset's features");
      }
    }
    std::vector<SelectionResult> selections;
    for (double r : ParseRatios(select_ratios)) {
      selections.push_back(TopK(scores, RatioToK(r, scores.size()), feature_view, r));
    }
    WriteFileAtomic(select_out, FormatSelectionDump(selections, scores, feature_view));
  } else if (*eval) {
    const LoadedDataset data = LoadDataset(eval_manifest);
    const std::size_t d = data.dataset.num_features();
    std::vector<ProtocolMethod> methods;
    for (const auto& spec : eval_scores) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos || eq == 0) {
        throw Error(ErrorCode::kConfigError, "--scores expects NAME=PATH, got '" + spec + "'");
      }
      methods.push_back(
          FixedScoresMethod(spec.substr(0, eq), ParseScoresCsv(ReadFile(spec.substr(eq + 1)))));
    }
    const ProtocolConfig protocol = eval_flags.Resolved(eval);
    if (eval_maxmi) {
      MiOptions o;
      o.bins = eval_bins;
      methods.push_back(FixedScoresMethod("max-mi", MaxMiScores(ComputeMiMatrices(data.dataset, o))));
    }
    if (eval_random) methods.push_back(RandomMethod(d, protocol.base_seed));
    const EvalReport rep = RunProtocol(data.dataset, methods, protocol);
    WriteFileAtomic(eval_out, FormatEvalCsv(rep));
    if (!eval_repeats_out.empty()) WriteFileAtomic(eval_repeats_out, FormatRepeatCsv(rep));
    for (const auto& m : rep.Methods()) {
      std::cout << m;
      for (std::size_t k = 0; k < kNumMetrics; ++k) {
        const auto& a = rep.Get(m, std::nullopt, static_cast<Metric>(k));
        std::cout << "  " << MetricName(a.metric) << " " << FormatDouble(a.mean);
      }
      std::cout << "\n";
    }
  } else if (*run) {
    RunConfig c;
    if (!run_config.empty()) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(ReadFile(run_config));
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kConfigError, run_config + ": " + e.what());
      }
      // A run manifest carries its config under "config".
      if (j.contains("format") && j["format"] == "mvfs-run") j = j.at("config");
      c = RunConfig::FromJson(j, fs::path(run_config).parent_path());
    }
    auto given = [&](const char* name) { return run->count(name) > 0; };
    if (given("--manifest")) c.manifest = run_manifest;
    if (given("--out")) c.output_dir = run_out;
    if (given("--mode")) c.mode = ParseRunMode(run_mode);
    if (given("--subsample-fraction")) c.subsample_fraction = run_subsample;
    if (given("--ablation-scorer")) c.ablation_semantic = ParseRunMode(run_ablation_scorer);
    if (run_no_baselines) c.baselines = false;
    if (given("--tau1")) c.thresholds.tau1 = Threshold::Parse(run_graph.tau1);
    if (given("--tau2")) c.thresholds.tau2 = Threshold::Parse(run_graph.tau2);
    if (given("--tau3")) c.thresholds.tau3 = Threshold::Parse(run_graph.tau3);
    if (given("--delta")) c.thresholds.delta = run_graph.delta;
    if (given("--bins")) c.mi.bins = run_graph.bins;
    if (given("--ff-top-m")) c.mi.ff_top_m = run_graph.ff_top_m;
    if (given("--workers")) c.mi.workers = run_graph.workers;
    run_sem.Apply(c, run);
    run_train.Apply(c.train, run);
    run_protocol.Apply(c.protocol, run);
    const RunResult result = RunPipeline(c);
    for (const auto& m : result.report.Methods()) {
      std::cout << m;
      for (std::size_t k = 0; k < kNumMetrics; ++k) {
        const auto& a = result.report.Get(m, std::nullopt, static_cast<Metric>(k));
        std::cout << "  " << MetricName(a.metric) << " " << FormatDouble(a.mean);
      }
      std::cout << "\n";
    }
    std::cout << "artifacts in " << c.output_dir.string() << "\n";
  } else if (*report) {
    std::vector<fs::path> dirs(report_runs.begin(), report_runs.end());
    for (const auto& p : WriteReport(dirs, report_out)) std::cout << p.string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return Main(argc, argv);
  } catch (const mvfs::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return mvfs::ExitCodeFor(e.code());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 5;
  }
}
