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

#ifndef MVFS_LLM_CLIENT_H_
#define MVFS_LLM_CLIENT_H_

#include <filesystem>
#include <map>
#include <mutex>
#include <string>

#include "mvfs/semantic.h"

namespace mvfs {

struct ChatEndpoint {
  // Base URL of an OpenAI-compatible API, e.g. "https://api.openai.com/v1".
  std::string url = "https://api.openai.com/v1";
  std::string model = "gpt-4o-mini";
  // Name of the environment variable holding the bearer token.
  std::string api_key_env = "MVFS_LLM_API_KEY";
  double temperature = 0.0;
  int timeout_seconds = 120;
};

// POSTs {model, temperature, messages:[{role:user, content}]} to
// <url>/chat/completions and returns choices[0].message.content. Connection
// failures, 429 and 5xx raise TransportError; other unexpected answers raise
// MalformedResponse.
class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(ChatEndpoint endpoint);

  std::string ModelId() const override { return endpoint_.model; }
  std::string Complete(const std::string& prompt) override;

  // Request body sent for `prompt`.
  std::string RequestBody(const std::string& prompt) const;

 private:
  ChatEndpoint endpoint_;
  std::string api_key_;
};

// Recorded request/response pairs, one JSON object per line:
//   {"prompt_sha256": ..., "request": ..., "response": ...}
// Replays answers by prompt digest; unknown prompts raise TransportError.
class ReplayChatClient : public ChatClient {
 public:
  ReplayChatClient(const std::filesystem::path& transcript, std::string model);

  std::string ModelId() const override { return model_; }
  std::string Complete(const std::string& prompt) override;
  std::size_t size() const { return responses_.size(); }

 private:
  std::string model_;
  std::map<std::string, std::string> responses_;
};

// Forwards to another client and appends every exchange to a transcript.
class RecordingChatClient : public ChatClient {
 public:
  RecordingChatClient(ChatClient& inner, std::filesystem::path transcript)
      : inner_(inner), transcript_(std::move(transcript)) {}

  std::string ModelId() const override { return inner_.ModelId(); }
  std::string Complete(const std::string& prompt) override;

 private:
  ChatClient& inner_;
  std::filesystem::path transcript_;
  std::mutex mu_;
};

}  // namespace mvfs

#endif  // MVFS_LLM_CLIENT_H_
