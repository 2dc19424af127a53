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

#ifndef MVFS_SEMANTIC_H_
#define MVFS_SEMANTIC_H_

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mvfs/dataset.h"

namespace mvfs {

enum class PairKind { kFeatureLabel, kViewLabel, kLabelLabel };

const char* PairKindName(PairKind kind);

// A scored object pair. Feature ids are global; for label-label pairs
// a < b.
struct PairKey {
  PairKind kind = PairKind::kFeatureLabel;
  std::size_t a = 0;
  std::size_t b = 0;
  auto operator<=>(const PairKey&) const = default;
};

PairKey MakePairKey(PairKind kind, std::size_t a, std::size_t b);

struct PromptItem {
  std::size_t id = 0;
  std::string name;
  std::string text;
};

extern const char* const kDefaultRoleText;
std::string DefaultTaskText(PairKind kind);

// The five prompt components plus the pair kind being scored.
struct PromptSpec {
  std::string role_text = kDefaultRoleText;
  PairKind kind = PairKind::kFeatureLabel;
  std::vector<PromptItem> views;
  std::vector<PromptItem> features;  // name = owning view name
  std::vector<PromptItem> labels;
  std::string task_text;  // empty: DefaultTaskText(kind)
  // Non-empty: only these pairs are requested and listed in the task.
  std::vector<PairKey> restrict_pairs;
  std::size_t max_batch = 20;
};

std::vector<PairKey> RequestedPairs(const PromptSpec& spec);

// Role, Views, Features, Labels, Task, then the output-format instruction.
// Byte-deterministic. Throws BatchTooLarge when the feature batch exceeds
// spec.max_batch.
std::string BuildPrompt(const PromptSpec& spec);

// Appended when re-prompting after an unparseable answer.
extern const char* const kStrictFormatReminder;

// Parses an answer into scores for requested pairs. Accepts an optional code
// fence and either {"scores": [...]} or a bare array. Entries for pairs that
// were not requested are dropped with a warning. Throws MalformedResponse.
std::map<PairKey, double> ParseScoreResponse(std::string_view content,
                                             const PromptSpec& spec);

struct ScoreEntry {
  double score = 0.0;
  std::string model;
  std::string prompt_digest;
  bool operator==(const ScoreEntry&) const = default;
};

struct SemanticScoreSet {
  std::map<PairKey, ScoreEntry> entries;

  std::optional<double> Get(PairKind kind, std::size_t a, std::size_t b) const;
  void Merge(const SemanticScoreSet& other);
  std::size_t Count(PairKind kind) const;
  bool operator==(const SemanticScoreSet&) const = default;
};

std::string SerializeScores(const SemanticScoreSet& scores);
SemanticScoreSet ParseScores(std::string_view text);

// Token -> canonical token.
using SynonymTable = std::unordered_map<std::string, std::string>;

// One "a,b" pair per line; both map to the first token.
SynonymTable LoadSynonyms(const std::filesystem::path& path);

std::vector<std::string> Tokenize(std::string_view text);

// Jaccard similarity of the lowercase alphanumeric token sets after mapping
// through `synonyms`.
double MockScore(std::string_view text_a, std::string_view text_b,
                 const SynonymTable& synonyms = {});

// Anything that can score the pairs of a prompt.
class ScoringAgent {
 public:
  virtual ~ScoringAgent() = default;
  virtual std::string ModelId() const = 0;
  // May omit pairs; values may lie outside [0, 1].
  virtual std::map<PairKey, double> Score(const PromptSpec& spec) = 0;
};

class MockAgent : public ScoringAgent {
 public:
  explicit MockAgent(SynonymTable synonyms = {}) : synonyms_(std::move(synonyms)) {}
  std::string ModelId() const override { return "mock-jaccard"; }
  std::map<PairKey, double> Score(const PromptSpec& spec) override;

 private:
  SynonymTable synonyms_;
};

// Transport for a chat-completion service. Throws TransportError.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::string ModelId() const = 0;
  virtual std::string Complete(const std::string& prompt) = 0;
};

struct LlmAgentOptions {
  int max_attempts = 4;
  std::chrono::milliseconds initial_backoff{500};
};

// Prompts a ChatClient: retries transport failures with exponential backoff,
// re-prompts once with a format reminder on unparseable answers, and
// re-queries pairs missing from an answer one at a time.
class LlmAgent : public ScoringAgent {
 public:
  LlmAgent(ChatClient& client, LlmAgentOptions options = {})
      : client_(client), options_(options) {}

  std::string ModelId() const override { return client_.ModelId(); }
  std::map<PairKey, double> Score(const PromptSpec& spec) override;

  // Test hook; defaults to std::this_thread::sleep_for.
  void set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper) {
    sleeper_ = std::move(sleeper);
  }

 private:
  std::string CompleteWithRetry(const std::string& prompt);
  std::map<PairKey, double> QueryParsed(const PromptSpec& spec);

  ChatClient& client_;
  LlmAgentOptions options_;
  std::function<void(std::chrono::milliseconds)> sleeper_;
};

// Persistent score cache: newline-delimited JSON records
// {key, score, model, timestamp}, appended under an exclusive file lock with
// one write per record. Corrupt lines are skipped with a warning.
class ScoreCache {
 public:
  ScoreCache() = default;  // in-memory only
  explicit ScoreCache(std::filesystem::path path);

  static std::string Key(const std::string& model,
                         const std::string& prompt_digest, const PairKey& pair);

  std::optional<double> Get(const std::string& key) const;
  void Put(const std::string& key, double score, const std::string& model);
  std::size_t size() const;
  // Re-reads the file, picking up records appended by other processes.
  void Reload();

 private:
  void LoadFile();

  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, double> entries_;
};

// Token bucket; rate <= 0 disables limiting.
class RateLimiter {
 public:
  RateLimiter(double tokens_per_second, double burst);
  void Acquire();

 private:
  std::mutex mu_;
  double rate_;
  double burst_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
};

// Scores every requested pair of one prompt, serving cached pairs without
// calling the agent. Out-of-range scores are clamped with a warning.
SemanticScoreSet ScorePairs(ScoringAgent& agent, const PromptSpec& spec,
                            ScoreCache& cache);

struct ScoringOptions {
  std::size_t batch_size = 20;
  unsigned workers = 1;
  double requests_per_second = 0.0;
  // When set, feature-label scoring is limited to these global feature ids.
  std::optional<std::vector<std::size_t>> feature_subset;
};

// Prompt specs covering a dataset: feature batches against all labels, one
// view-label prompt and one label-label prompt.
std::vector<PromptSpec> MakePromptSpecs(const MultiViewDataset& dataset,
                                        const TextCatalog& catalog,
                                        const ScoringOptions& options);

SemanticScoreSet ScoreCatalog(const MultiViewDataset& dataset,
                              const TextCatalog& catalog, ScoringAgent& agent,
                              ScoreCache& cache,
                              const ScoringOptions& options = {});

}  // namespace mvfs

#endif  // MVFS_SEMANTIC_H_
