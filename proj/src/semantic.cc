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

#include "mvfs/semantic.h"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "mvfs/error.h"
#include "mvfs/util.h"

namespace mvfs {

using nlohmann::json;

const char* const kDefaultRoleText =
    "You are a data scientist working on multi-view multi-label feature "
    "selection. Your goal is dedicated to exploring the impact of semantic "
    "relationships among features, labels, and views on feature selection "
    "results.";

const char* const kStrictFormatReminder =
    "IMPORTANT: your previous answer could not be parsed. Reply with the JSON "
    "object only, exactly in the format described above, with no other text.";

const char* PairKindName(PairKind kind) {
  switch (kind) {
    case PairKind::kFeatureLabel: return "feature-label";
    case PairKind::kViewLabel: return "view-label";
    case PairKind::kLabelLabel: return "label-label";
  }
  return "unknown";
}

namespace {

PairKind PairKindFromName(std::string_view name) {
  if (name == "feature-label") return PairKind::kFeatureLabel;
  if (name == "view-label") return PairKind::kViewLabel;
  if (name == "label-label") return PairKind::kLabelLabel;
  throw Error(ErrorCode::kParseError, "unknown pair kind '" + std::string(name) + "'");
}

// JSON field names of the two ids in a response entry.
std::pair<const char*, const char*> FieldNames(PairKind kind) {
  switch (kind) {
    case PairKind::kFeatureLabel: return {"feature", "label"};
    case PairKind::kViewLabel: return {"view", "label"};
    case PairKind::kLabelLabel: return {"label_a", "label_b"};
  }
  return {"a", "b"};
}

}  // namespace

PairKey MakePairKey(PairKind kind, std::size_t a, std::size_t b) {
  if (kind == PairKind::kLabelLabel && b < a) std::swap(a, b);
  return {kind, a, b};
}

std::string DefaultTaskText(PairKind kind) {
  switch (kind) {
    case PairKind::kFeatureLabel:
      return "Identify which of the listed features are semantically relevant "
             "or redundant with respect to each listed label. Assign every "
             "(feature, label) pair a semantic relevance score in the range "
             "[0, 1], where 0 means unrelated and 1 means the feature directly "
             "expresses the meaning of the label.";
    case PairKind::kViewLabel:
      return "Judge how semantically relevant each listed view is to each "
             "listed label. Assign every (view, label) pair a semantic "
             "relevance score in the range [0, 1], where 0 means unrelated and "
             "1 means the view is essential for recognizing the label.";
    case PairKind::kLabelLabel:
      return "Judge how semantically similar the listed labels are to each "
             "other. Assign every pair of distinct labels a semantic "
             "similarity score in the range [0, 1], where 0 means unrelated "
             "and 1 means the labels have the same meaning.";
  }
  return {};
}

std::vector<PairKey> RequestedPairs(const PromptSpec& spec) {
  if (!spec.restrict_pairs.empty()) {
    std::vector<PairKey> out;
    for (const auto& p : spec.restrict_pairs) out.push_back(MakePairKey(p.kind, p.a, p.b));
    return out;
  }
  std::vector<PairKey> out;
  switch (spec.kind) {
    case PairKind::kFeatureLabel:
      for (const auto& f : spec.features) {
        for (const auto& l : spec.labels) out.push_back({spec.kind, f.id, l.id});
      }
      break;
    case PairKind::kViewLabel:
      for (const auto& v : spec.views) {
        for (const auto& l : spec.labels) out.push_back({spec.kind, v.id, l.id});
      }
      break;
    case PairKind::kLabelLabel:
      for (std::size_t i = 0; i < spec.labels.size(); ++i) {
        for (std::size_t j = i + 1; j < spec.labels.size(); ++j) {
          out.push_back(MakePairKey(spec.kind, spec.labels[i].id, spec.labels[j].id));
        }
      }
      break;
  }
  return out;
}

std::string BuildPrompt(const PromptSpec& spec) {
  if (spec.features.size() > spec.max_batch) {
    throw Error(ErrorCode::kBatchTooLarge,
                std::to_string(spec.features.size()) + " features exceed the batch limit of " +
                    std::to_string(spec.max_batch));
  }
  std::ostringstream out;
  out << "# Role\n" << spec.role_text << "\n\n";

  out << "# Views\n";
  for (const auto& v : spec.views) {
    out << "- view " << v.id << ": " << v.name;
    if (!v.text.empty() && v.text != v.name) out << " (" << v.text << ")";
    out << "\n";
  }
  if (spec.views.empty()) out << "(none)\n";

  out << "\n# Features\n";
  for (const auto& f : spec.features) {
    out << "- feature " << f.id << " [view " << f.name << "]: " << f.text << "\n";
  }
  if (spec.features.empty()) out << "(none for this task)\n";

  out << "\n# Labels\n";
  for (const auto& l : spec.labels) out << "- label " << l.id << ": " << l.text << "\n";
  if (spec.labels.empty()) out << "(none)\n";

  out << "\n# Task\n"
      << (spec.task_text.empty() ? DefaultTaskText(spec.kind) : spec.task_text) << "\n";
  const auto [field_a, field_b] = FieldNames(spec.kind);
  if (!spec.restrict_pairs.empty()) {
    out << "Score only these pairs (" << field_a << ", " << field_b << "):";
    for (const auto& p : RequestedPairs(spec)) out << " (" << p.a << ", " << p.b << ")";
    out << "\n";
  }

  out << "\n# Output format\n"
      << "Respond with a single JSON object and nothing else:\n"
      << "{\"scores\": [{\"" << field_a << "\": <id>, \"" << field_b
      << "\": <id>, \"score\": <number in [0, 1]>}, ...]}\n"
      << "Include exactly one entry for every requested pair, using the "
         "numeric ids listed above.\n";
  return out.str();
}

namespace {

std::size_t ParseId(const json& node, const char* field) {
  if (node.is_number_unsigned()) return node.get<std::size_t>();
  if (node.is_number_integer() && node.get<long long>() >= 0) {
    return static_cast<std::size_t>(node.get<long long>());
  }
  if (node.is_string()) {
    const std::string s = Trim(node.get<std::string>());
    if (!s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
          return std::isdigit(static_cast<unsigned char>(c));
        })) {
      return static_cast<std::size_t>(std::stoull(s));
    }
  }
  throw Error(ErrorCode::kMalformedResponse,
              std::string("entry field '") + field + "' is not a numeric id");
}

}  // namespace

std::map<PairKey, double> ParseScoreResponse(std::string_view content,
                                             const PromptSpec& spec) {
  const auto first = content.find_first_of("{[");
  const auto last = content.find_last_of("}]");
  if (first == std::string_view::npos || last == std::string_view::npos || last < first) {
    throw Error(ErrorCode::kMalformedResponse, "no JSON payload in answer");
  }
  json doc;
  try {
    doc = json::parse(content.substr(first, last - first + 1));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kMalformedResponse, e.what());
  }
  const json* list = &doc;
  if (doc.is_object()) {
    if (!doc.contains("scores")) {
      throw Error(ErrorCode::kMalformedResponse, "missing 'scores' array");
    }
    list = &doc["scores"];
  }
  if (!list->is_array()) throw Error(ErrorCode::kMalformedResponse, "'scores' is not an array");

  const auto requested_list = RequestedPairs(spec);
  const std::set<PairKey> requested(requested_list.begin(), requested_list.end());
  const auto [field_a, field_b] = FieldNames(spec.kind);
  std::map<PairKey, double> out;
  for (const auto& entry : *list) {
    if (!entry.is_object() || !entry.contains(field_a) || !entry.contains(field_b) ||
        !entry.contains("score")) {
      throw Error(ErrorCode::kMalformedResponse, "entry lacks ids or score");
    }
    const json& score = entry["score"];
    double value = 0.0;
    if (score.is_number()) {
      value = score.get<double>();
    } else if (score.is_string()) {
      try {
        value = std::stod(score.get<std::string>());
      } catch (const std::exception&) {
        throw Error(ErrorCode::kMalformedResponse, "non-numeric score");
      }
    } else {
      throw Error(ErrorCode::kMalformedResponse, "non-numeric score");
    }
    const PairKey key = MakePairKey(spec.kind, ParseId(entry[field_a], field_a),
                                    ParseId(entry[field_b], field_b));
    if (!requested.contains(key)) {
      Warn("dropping unrequested pair (" + std::to_string(key.a) + ", " +
           std::to_string(key.b) + ") from response");
      continue;
    }
    out[key] = value;
  }
  return out;
}

std::optional<double> SemanticScoreSet::Get(PairKind kind, std::size_t a,
                                            std::size_t b) const {
  const auto it = entries.find(MakePairKey(kind, a, b));
  if (it == entries.end()) return std::nullopt;
  return it->second.score;
}

void SemanticScoreSet::Merge(const SemanticScoreSet& other) {
  for (const auto& [k, v] : other.entries) entries[k] = v;
}

std::size_t SemanticScoreSet::Count(PairKind kind) const {
  return static_cast<std::size_t>(std::count_if(
      entries.begin(), entries.end(), [&](const auto& e) { return e.first.kind == kind; }));
}

std::string SerializeScores(const SemanticScoreSet& scores) {
  json out = json::array();
  for (const auto& [k, v] : scores.entries) {
    out.push_back({{"kind", PairKindName(k.kind)},
                   {"a", k.a},
                   {"b", k.b},
                   {"score", v.score},
                   {"model", v.model},
                   {"prompt", v.prompt_digest}});
  }
  return out.dump(1) + "\n";
}

SemanticScoreSet ParseScores(std::string_view text) {
  SemanticScoreSet out;
  try {
    const json doc = json::parse(text);
    for (const auto& e : doc) {
      const PairKey key = MakePairKey(PairKindFromName(e.at("kind").get<std::string>()),
                                      e.at("a").get<std::size_t>(),
                                      e.at("b").get<std::size_t>());
      out.entries[key] = {e.at("score").get<double>(), e.at("model").get<std::string>(),
                          e.at("prompt").get<std::string>()};
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("semantic scores: ") + e.what());
  }
  return out;
}

std::vector<std::string> Tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

SynonymTable LoadSynonyms(const std::filesystem::path& path) {
  SynonymTable table;
  std::size_t line_no = 0;
  for (const auto& line : SplitString(ReadFile(path), '\n')) {
    ++line_no;
    const std::string t = Trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto parts = SplitString(t, ',');
    if (parts.size() < 2) {
      throw Error(ErrorCode::kParseError,
                  path.string() + ":" + std::to_string(line_no) + ": expected 'a,b'");
    }
    const auto canon = Tokenize(parts[0]);
    if (canon.size() != 1) {
      throw Error(ErrorCode::kParseError,
                  path.string() + ":" + std::to_string(line_no) + ": expected single tokens");
    }
    for (std::size_t i = 1; i < parts.size(); ++i) {
      for (const auto& tok : Tokenize(parts[i])) table[tok] = canon[0];
    }
  }
  return table;
}

double MockScore(std::string_view text_a, std::string_view text_b,
                 const SynonymTable& synonyms) {
  auto canonical_set = [&](std::string_view text) {
    std::set<std::string> out;
    for (auto& tok : Tokenize(text)) {
      const auto it = synonyms.find(tok);
      out.insert(it == synonyms.end() ? tok : it->second);
    }
    return out;
  };
  const auto a = canonical_set(text_a);
  const auto b = canonical_set(text_b);
  if (a.empty() && b.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& t : a) common += b.count(t);
  const std::size_t uni = a.size() + b.size() - common;
  return static_cast<double>(common) / static_cast<double>(uni);
}

std::map<PairKey, double> MockAgent::Score(const PromptSpec& spec) {
  auto text_of = [](const std::vector<PromptItem>& items, std::size_t id) -> const std::string& {
    for (const auto& item : items) {
      if (item.id == id) return item.text;
    }
    throw Error(ErrorCode::kInvalidArgument, "pair refers to an id missing from the prompt");
  };
  std::map<PairKey, double> out;
  for (const auto& p : RequestedPairs(spec)) {
    switch (p.kind) {
      case PairKind::kFeatureLabel:
        out[p] = MockScore(text_of(spec.features, p.a), text_of(spec.labels, p.b), synonyms_);
        break;
      case PairKind::kViewLabel:
        out[p] = MockScore(text_of(spec.views, p.a), text_of(spec.labels, p.b), synonyms_);
        break;
      case PairKind::kLabelLabel:
        out[p] = MockScore(text_of(spec.labels, p.a), text_of(spec.labels, p.b), synonyms_);
        break;
    }
  }
  return out;
}

std::string LlmAgent::CompleteWithRetry(const std::string& prompt) {
  auto delay = options_.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      return client_.Complete(prompt);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kTransportError || attempt >= options_.max_attempts) throw;
      Warn(std::string("transport failure (attempt ") + std::to_string(attempt) +
           "), retrying: " + e.what());
      if (sleeper_) {
        sleeper_(delay);
      } else {
        std::this_thread::sleep_for(delay);
      }
      delay *= 2;
    }
  }
}

std::map<PairKey, double> LlmAgent::QueryParsed(const PromptSpec& spec) {
  const std::string prompt = BuildPrompt(spec);
  try {
    return ParseScoreResponse(CompleteWithRetry(prompt), spec);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kMalformedResponse) throw;
    Warn(std::string("unparseable answer, re-prompting: ") + e.what());
  }
  return ParseScoreResponse(
      CompleteWithRetry(prompt + "\n" + kStrictFormatReminder + "\n"), spec);
}

std::map<PairKey, double> LlmAgent::Score(const PromptSpec& spec) {
  auto scores = QueryParsed(spec);
  for (const auto& pair : RequestedPairs(spec)) {
    if (scores.contains(pair)) continue;
    Warn(std::string("pair (") + std::to_string(pair.a) + ", " + std::to_string(pair.b) +
         ") missing from answer, re-querying it alone");
    PromptSpec single = spec;
    single.restrict_pairs = {pair};
    if (pair.kind == PairKind::kFeatureLabel) {
      single.features.clear();
      for (const auto& f : spec.features) {
        if (f.id == pair.a) single.features.push_back(f);
      }
    }
    const auto retry = QueryParsed(single);
    const auto it = retry.find(pair);
    if (it == retry.end()) {
      throw Error(ErrorCode::kMissingPairInResponse,
                  std::string(PairKindName(pair.kind)) + " pair (" + std::to_string(pair.a) +
                      ", " + std::to_string(pair.b) + ") missing after re-query");
    }
    scores[pair] = it->second;
  }
  return scores;
}

ScoreCache::ScoreCache(std::filesystem::path path) : path_(std::move(path)) {
  LoadFile();
}

std::string ScoreCache::Key(const std::string& model, const std::string& prompt_digest,
                            const PairKey& pair) {
  return Sha256Hex(model + "\n" + prompt_digest + "\n" + PairKindName(pair.kind) + ":" +
                   std::to_string(pair.a) + ":" + std::to_string(pair.b));
}

void ScoreCache::LoadFile() {
  if (path_.empty() || !std::filesystem::exists(path_)) return;
  const std::string data = ReadFile(path_);
  std::size_t line_no = 0;
  for (const auto& line : SplitString(data, '\n')) {
    ++line_no;
    if (Trim(line).empty()) continue;
    try {
      const json rec = json::parse(line);
      const double score = rec.at("score").get<double>();
      entries_[rec.at("key").get<std::string>()] = score;
    } catch (const json::exception&) {
      Warn(std::string(ErrorCodeName(ErrorCode::kCorruptCacheEntry)) + ": " +
           path_.string() + ":" + std::to_string(line_no) + " skipped");
    }
  }
}

void ScoreCache::Reload() {
  std::lock_guard lock(mu_);
  LoadFile();
}

std::optional<double> ScoreCache::Get(const std::string& key) const {
  std::lock_guard lock(mu_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::size_t ScoreCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

void ScoreCache::Put(const std::string& key, double score, const std::string& model) {
  std::lock_guard lock(mu_);
  entries_[key] = score;
  if (path_.empty()) return;
  const auto now = std::chrono::duration_cast<std::chrono::seconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                       .count();
  const std::string line =
      json{{"key", key}, {"score", score}, {"model", model}, {"timestamp", now}}.dump() + "\n";
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  const int fd = ::open(path_.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644);
  if (fd < 0) throw Error(ErrorCode::kMissingFile, "cannot open cache " + path_.string());
  ::flock(fd, LOCK_EX);
  const char* p = line.data();
  std::size_t left = line.size();
  while (left > 0) {
    const ssize_t n = ::write(fd, p, left);
    if (n <= 0) break;
    p += n;
    left -= static_cast<std::size_t>(n);
  }
  ::flock(fd, LOCK_UN);
  ::close(fd);
  if (left != 0) throw Error(ErrorCode::kMissingFile, "short write to " + path_.string());
}

RateLimiter::RateLimiter(double tokens_per_second, double burst)
    : rate_(tokens_per_second),
      burst_(std::max(1.0, burst)),
      tokens_(std::max(1.0, burst)),
      last_(std::chrono::steady_clock::now()) {}

void RateLimiter::Acquire() {
  if (rate_ <= 0.0) return;
  std::unique_lock lock(mu_);
  while (true) {
    const auto now = std::chrono::steady_clock::now();
    tokens_ = std::min(burst_, tokens_ + rate_ * std::chrono::duration<double>(now - last_).count());
    last_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    const auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
    lock.unlock();
    std::this_thread::sleep_for(wait);
    lock.lock();
  }
}

SemanticScoreSet ScorePairs(ScoringAgent& agent, const PromptSpec& spec, ScoreCache& cache) {
  const std::string model = agent.ModelId();
  const std::string digest = Sha256Hex(BuildPrompt(spec));
  const auto requested = RequestedPairs(spec);

  SemanticScoreSet out;
  bool all_cached = true;
  for (const auto& pair : requested) {
    if (const auto hit = cache.Get(ScoreCache::Key(model, digest, pair))) {
      out.entries[pair] = {*hit, model, digest};
    } else {
      all_cached = false;
    }
  }
  if (all_cached) return out;

  const auto fresh = agent.Score(spec);
  for (const auto& pair : requested) {
    if (out.entries.contains(pair)) continue;
    const auto it = fresh.find(pair);
    if (it == fresh.end()) {
      throw Error(ErrorCode::kMissingPairInResponse,
                  std::string(PairKindName(pair.kind)) + " pair (" + std::to_string(pair.a) +
                      ", " + std::to_string(pair.b) + ") not scored");
    }
    double score = it->second;
    if (!(score >= 0.0 && score <= 1.0)) {
      Warn("score " + FormatDouble(score) + " for pair (" + std::to_string(pair.a) + ", " +
           std::to_string(pair.b) + ") clamped to [0,1]");
      score = std::isnan(score) ? 0.0 : std::clamp(score, 0.0, 1.0);
    }
    cache.Put(ScoreCache::Key(model, digest, pair), score, model);
    out.entries[pair] = {score, model, digest};
  }
  return out;
}

std::vector<PromptSpec> MakePromptSpecs(const MultiViewDataset& dataset,
                                        const TextCatalog& catalog,
                                        const ScoringOptions& options) {
  std::vector<PromptItem> views;
  for (std::size_t v = 0; v < dataset.num_views(); ++v) {
    views.push_back({v, dataset.view(v).name, catalog.view_texts.at(v)});
  }
  std::vector<PromptItem> labels;
  for (std::size_t j = 0; j < dataset.num_labels(); ++j) {
    labels.push_back({j, "", catalog.label_texts.at(j)});
  }

  std::vector<std::size_t> features;
  if (options.feature_subset) {
    features = *options.feature_subset;
    std::sort(features.begin(), features.end());
  } else {
    for (std::size_t g = 0; g < dataset.num_features(); ++g) features.push_back(g);
  }
  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);

  std::vector<PromptSpec> specs;
  for (std::size_t start = 0; start < features.size(); start += batch) {
    PromptSpec spec;
    spec.kind = PairKind::kFeatureLabel;
    spec.max_batch = batch;
    spec.views = views;
    spec.labels = labels;
    for (std::size_t i = start; i < std::min(features.size(), start + batch); ++i) {
      const std::size_t g = features[i];
      spec.features.push_back(
          {g, dataset.view(dataset.Locate(g).view).name, catalog.FeatureText(dataset, g)});
    }
    specs.push_back(std::move(spec));
  }
  PromptSpec vl;
  vl.kind = PairKind::kViewLabel;
  vl.views = views;
  vl.labels = labels;
  specs.push_back(vl);
  if (labels.size() > 1) {
    PromptSpec ll;
    ll.kind = PairKind::kLabelLabel;
    ll.views = views;
    ll.labels = labels;
    specs.push_back(std::move(ll));
  }
  return specs;
}

SemanticScoreSet ScoreCatalog(const MultiViewDataset& dataset, const TextCatalog& catalog,
                              ScoringAgent& agent, ScoreCache& cache,
                              const ScoringOptions& options) {
  const auto specs = MakePromptSpecs(dataset, catalog, options);
  std::vector<SemanticScoreSet> results(specs.size());
  RateLimiter limiter(options.requests_per_second, std::max(1u, options.workers));

  std::mutex error_mu;
  std::exception_ptr first_error;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= specs.size()) return;
      {
        std::lock_guard lock(error_mu);
        if (first_error) return;
      }
      try {
        limiter.Acquire();
        results[i] = ScorePairs(agent, specs[i], cache);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const unsigned workers = std::max(1u, options.workers);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (unsigned w = 0; w < workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  SemanticScoreSet out;
  for (const auto& r : results) out.Merge(r);
  return out;
}

}  // namespace mvfs
