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

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include <gtest/gtest.h>

#include "httplib.h"
#include "json.hpp"
#include "mvfs/error.h"
#include "mvfs/llm_client.h"
#include "mvfs/semantic.h"
#include "mvfs/util.h"
#include "test_support.h"

namespace mvfs {
namespace {

using nlohmann::json;

struct Exchange {
  std::string prompt;
  std::string authorization;
};

// Local chat-completion server; `respond` maps (call index, prompt) to
// (status, content). Content is wrapped in a completion payload when the
// status is 200.
class FakeService {
 public:
  using Responder = std::function<std::pair<int, std::string>(int, const std::string&)>;

  explicit FakeService(Responder respond) : respond_(std::move(respond)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                httplib::Response& res) {
      const json body = json::parse(req.body);
      const std::string prompt = body["messages"][0]["content"].get<std::string>();
      int index = 0;
      {
        std::lock_guard lock(mu_);
        index = static_cast<int>(exchanges_.size());
        exchanges_.push_back({prompt, req.get_header_value("Authorization")});
        bodies_.push_back(body);
      }
      auto [status, content] = respond_(index, prompt);
      res.status = status;
      if (status == 200 && content.rfind("RAW:", 0) != 0) {
        res.set_content(
            json{{"choices", json::array({{{"message", {{"role", "assistant"},
                                                         {"content", content}}}}})}}
                .dump(),
            "application/json");
      } else {
        res.set_content(status == 200 ? content.substr(4) : "{\"error\": \"busy\"}",
                        "application/json");
      }
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeService() {
    server_.stop();
    thread_.join();
  }

  ChatEndpoint Endpoint() const {
    ChatEndpoint e;
    e.url = "http://127.0.0.1:" + std::to_string(port_) + "/v1";
    e.model = "test-model";
    e.api_key_env = "MVFS_TEST_ONLY_KEY";
    e.timeout_seconds = 10;
    return e;
  }
  std::vector<Exchange> exchanges() {
    std::lock_guard lock(mu_);
    return exchanges_;
  }
  std::vector<json> bodies() {
    std::lock_guard lock(mu_);
    return bodies_;
  }

 private:
  Responder respond_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::mutex mu_;
  std::vector<Exchange> exchanges_;
  std::vector<json> bodies_;
};

// Answers every feature-label pair found in the prompt, except `skip`.
std::string AnswerAll(const std::string& prompt, double score,
                      std::pair<long, long> skip = {-1, -1}) {
  std::vector<long> features, labels;
  const std::regex feature_re(R"(- feature (\d+) \[)"), label_re(R"(- label (\d+):)");
  for (std::sregex_iterator it(prompt.begin(), prompt.end(), feature_re), end; it != end; ++it) {
    features.push_back(std::stol((*it)[1]));
  }
  for (std::sregex_iterator it(prompt.begin(), prompt.end(), label_re), end; it != end; ++it) {
    labels.push_back(std::stol((*it)[1]));
  }
  json scores = json::array();
  for (long f : features) {
    for (long l : labels) {
      if (f == skip.first && l == skip.second) continue;
      scores.push_back({{"feature", f}, {"label", l}, {"score", score}});
    }
  }
  return json{{"scores", scores}}.dump();
}

PromptSpec Batch(std::size_t features, std::size_t labels) {
  PromptSpec spec;
  spec.kind = PairKind::kFeatureLabel;
  spec.views = {{0, "v", "view"}};
  for (std::size_t f = 0; f < features; ++f) {
    spec.features.push_back({f, "v", "feature text " + std::to_string(f)});
  }
  for (std::size_t l = 0; l < labels; ++l) spec.labels.push_back({l, "", "label " + std::to_string(l)});
  return spec;
}

class LlmClientTest : public ::testing::Test {
 protected:
  void SetUp() override { setenv("MVFS_TEST_ONLY_KEY", "sk-test-123", 1); }
  void TearDown() override { unsetenv("MVFS_TEST_ONLY_KEY"); }
};

TEST_F(LlmClientTest, BearerTokenFromEnvironment) {
  FakeService service([](int, const std::string&) { return std::pair{200, std::string("hi")}; });
  HttpChatClient client(service.Endpoint());
  EXPECT_EQ(client.Complete("hello"), "hi");
  const auto ex = service.exchanges();
  ASSERT_EQ(ex.size(), 1u);
  EXPECT_EQ(ex[0].authorization, "Bearer sk-test-123");
  EXPECT_EQ(ex[0].prompt, "hello");
  const json body = service.bodies()[0];
  EXPECT_EQ(body["model"], "test-model");
  EXPECT_EQ(body["temperature"], 0.0);
  EXPECT_EQ(body["messages"][0]["role"], "user");
  EXPECT_EQ(body.dump().find("sk-test-123"), std::string::npos);
}

TEST_F(LlmClientTest, NoHeaderWithoutKey) {
  unsetenv("MVFS_TEST_ONLY_KEY");
  FakeService service([](int, const std::string&) { return std::pair{200, std::string("x")}; });
  HttpChatClient client(service.Endpoint());
  client.Complete("p");
  EXPECT_EQ(service.exchanges()[0].authorization, "");
}

TEST_F(LlmClientTest, StatusMapping) {
  for (int status : {429, 500, 503, 400}) {
    FakeService service(
        [status](int, const std::string&) { return std::pair{status, std::string()}; });
    HttpChatClient client(service.Endpoint());
    try {
      client.Complete("p");
      ADD_FAILURE() << status;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kTransportError) << status;
    }
  }
  FakeService garbage(
      [](int, const std::string&) { return std::pair{200, std::string("RAW:{\"nope\": 1}")}; });
  HttpChatClient client(garbage.Endpoint());
  try {
    client.Complete("p");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMalformedResponse);
  }
}

TEST_F(LlmClientTest, ConnectionRefusedIsTransportError) {
  ChatEndpoint e;
  {
    FakeService service([](int, const std::string&) { return std::pair{200, std::string()}; });
    e = service.Endpoint();
  }
  e.timeout_seconds = 2;
  HttpChatClient client(e);
  try {
    client.Complete("p");
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::kTransportError);
  }
}

TEST_F(LlmClientTest, RetriesTransientFailuresWithBackoff) {
  FakeService service([](int i, const std::string& prompt) {
    if (i == 0) return std::pair{429, std::string()};
    if (i == 1) return std::pair{502, std::string()};
    return std::pair{200, AnswerAll(prompt, 0.5)};
  });
  HttpChatClient client(service.Endpoint());
  LlmAgent agent(client);
  std::vector<long long> delays;
  agent.set_sleeper([&](std::chrono::milliseconds d) { delays.push_back(d.count()); });
  WarningCapture capture;
  const auto scores = agent.Score(Batch(2, 2));
  EXPECT_EQ(scores.size(), 4u);
  EXPECT_EQ(service.exchanges().size(), 3u);
  EXPECT_EQ(delays, (std::vector<long long>{500, 1000}));
}

TEST_F(LlmClientTest, GivesUpAfterMaxAttempts) {
  FakeService service([](int, const std::string&) { return std::pair{503, std::string()}; });
  HttpChatClient client(service.Endpoint());
  LlmAgent agent(client, {3, std::chrono::milliseconds(1)});
  agent.set_sleeper([](std::chrono::milliseconds) {});
  WarningCapture capture;
  try {
    agent.Score(Batch(1, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTransportError);
  }
  EXPECT_EQ(service.exchanges().size(), 3u);
}

TEST_F(LlmClientTest, RepromptsOnceAfterMalformedAnswer) {
  FakeService service([](int i, const std::string& prompt) {
    if (i == 0) return std::pair{200, std::string("I think they are related.")};
    return std::pair{200, AnswerAll(prompt, 0.75)};
  });
  HttpChatClient client(service.Endpoint());
  LlmAgent agent(client);
  WarningCapture capture;
  const auto scores = agent.Score(Batch(3, 2));
  EXPECT_EQ(scores.size(), 6u);
  const auto ex = service.exchanges();
  ASSERT_EQ(ex.size(), 2u);
  EXPECT_EQ(ex[0].prompt.find(kStrictFormatReminder), std::string::npos);
  EXPECT_NE(ex[1].prompt.find(kStrictFormatReminder), std::string::npos);
}

TEST_F(LlmClientTest, FailsBatchAfterSecondMalformedAnswer) {
  FakeService service([](int, const std::string&) { return std::pair{200, std::string("nope")}; });
  HttpChatClient client(service.Endpoint());
  LlmAgent agent(client);
  WarningCapture capture;
  try {
    agent.Score(Batch(1, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMalformedResponse);
  }
  EXPECT_EQ(service.exchanges().size(), 2u);
}

TEST_F(LlmClientTest, RequeriesMissingPairAlone) {
  FakeService service([](int i, const std::string& prompt) {
    if (i == 0) return std::pair{200, AnswerAll(prompt, 0.5, {2, 1})};
    return std::pair{200, AnswerAll(prompt, 0.9)};
  });
  HttpChatClient client(service.Endpoint());
  LlmAgent agent(client);
  WarningCapture capture;
  const auto scores = agent.Score(Batch(3, 2));
  EXPECT_EQ(scores.size(), 6u);
  EXPECT_EQ(scores.at(MakePairKey(PairKind::kFeatureLabel, 2, 1)), 0.9);
  EXPECT_EQ(scores.at(MakePairKey(PairKind::kFeatureLabel, 0, 0)), 0.5);
  const auto ex = service.exchanges();
  ASSERT_EQ(ex.size(), 2u);
  EXPECT_NE(ex[1].prompt.find("Score only these pairs (feature, label): (2, 1)"),
            std::string::npos);
  EXPECT_EQ(ex[1].prompt.find("feature text 0"), std::string::npos);
}

TEST_F(LlmClientTest, PersistentlyMissingPairFails) {
  FakeService service(
      [](int, const std::string& prompt) { return std::pair{200, AnswerAll(prompt, 0.5, {0, 0})}; });
  HttpChatClient client(service.Endpoint());
  LlmAgent agent(client);
  WarningCapture capture;
  try {
    agent.Score(Batch(2, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingPairInResponse);
  }
}

TEST_F(LlmClientTest, FullBatchIsOneRequest) {
  FakeService service(
      [](int, const std::string& prompt) { return std::pair{200, AnswerAll(prompt, 0.3)}; });
  HttpChatClient client(service.Endpoint());
  LlmAgent agent(client);
  ScoreCache cache;
  const PromptSpec spec = Batch(20, 7);
  const auto set = ScorePairs(agent, spec, cache);
  EXPECT_EQ(service.exchanges().size(), 1u);
  EXPECT_EQ(set.entries.size(), 140u);
  for (const auto& [k, v] : set.entries) {
    EXPECT_EQ(v.score, 0.3);
    EXPECT_EQ(v.model, "test-model");
  }
  // Served from the cache the second time.
  ScorePairs(agent, spec, cache);
  EXPECT_EQ(service.exchanges().size(), 1u);
}

TEST_F(LlmClientTest, RecordThenReplay) {
  FakeService service(
      [](int, const std::string& prompt) { return std::pair{200, AnswerAll(prompt, 0.6)}; });
  const auto dir = testing::FreshDir("llm_record");
  const auto transcript = dir / "t.ndjson";
  HttpChatClient http(service.Endpoint());
  RecordingChatClient recorder(http, transcript);
  LlmAgent live(recorder);
  const auto a = live.Score(Batch(4, 2));

  ReplayChatClient replay(transcript, "test-model");
  EXPECT_EQ(replay.size(), 1u);
  LlmAgent offline(replay);
  EXPECT_EQ(offline.Score(Batch(4, 2)), a);
  EXPECT_EQ(ReadFile(transcript).find("sk-test-123"), std::string::npos);
  try {
    replay.Complete("unseen prompt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTransportError);
  }
}

TEST(RateLimiterTest, SpacesRequests) {
  RateLimiter limiter(50.0, 1.0);
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < 6; ++i) limiter.Acquire();
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_GE(elapsed, 0.09);
  RateLimiter off(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) off.Acquire();
}

}  // namespace
}  // namespace mvfs
