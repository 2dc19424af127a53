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

#include "mvfs/llm_client.h"

#include <cstdlib>
#include <fstream>

#include "httplib.h"
#include "json.hpp"
#include "mvfs/error.h"
#include "mvfs/util.h"

namespace mvfs {

using nlohmann::json;

namespace {

struct ParsedUrl {
  std::string scheme_host_port;
  std::string base_path;
};

ParsedUrl ParseUrl(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::kConfigError, "endpoint URL needs a scheme: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  if (path_start == std::string::npos) {
    out.scheme_host_port = url;
  } else {
    out.scheme_host_port = url.substr(0, path_start);
    out.base_path = url.substr(path_start);
  }
  while (!out.base_path.empty() && out.base_path.back() == '/') out.base_path.pop_back();
  return out;
}

}  // namespace

HttpChatClient::HttpChatClient(ChatEndpoint endpoint) : endpoint_(std::move(endpoint)) {
  if (!endpoint_.api_key_env.empty()) {
    if (const char* key = std::getenv(endpoint_.api_key_env.c_str())) api_key_ = key;
  }
}

std::string HttpChatClient::RequestBody(const std::string& prompt) const {
  return json{{"model", endpoint_.model},
              {"temperature", endpoint_.temperature},
              {"messages", json::array({{{"role", "user"}, {"content", prompt}}})}}
      .dump();
}

std::string HttpChatClient::Complete(const std::string& prompt) {
  const ParsedUrl url = ParseUrl(endpoint_.url);
  httplib::Client client(url.scheme_host_port);
  client.set_connection_timeout(endpoint_.timeout_seconds, 0);
  client.set_read_timeout(endpoint_.timeout_seconds, 0);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  auto res = client.Post(url.base_path + "/chat/completions", headers, RequestBody(prompt),
                         "application/json");
  if (!res) {
    throw Error(ErrorCode::kTransportError,
                "request to " + endpoint_.url + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status == 429 || res->status >= 500) {
    throw Error(ErrorCode::kTransportError, "HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::kTransportError,
                "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
  }
  try {
    const json body = json::parse(res->body);
    return body.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedResponse,
                std::string("unexpected completion payload: ") + e.what());
  }
}

ReplayChatClient::ReplayChatClient(const std::filesystem::path& transcript, std::string model)
    : model_(std::move(model)) {
  std::size_t line_no = 0;
  for (const auto& line : SplitString(ReadFile(transcript), '\n')) {
    ++line_no;
    if (Trim(line).empty()) continue;
    try {
      const json rec = json::parse(line);
      responses_[rec.at("prompt_sha256").get<std::string>()] =
          rec.at("response").get<std::string>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParseError,
                  transcript.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

std::string ReplayChatClient::Complete(const std::string& prompt) {
  const auto it = responses_.find(Sha256Hex(prompt));
  if (it == responses_.end()) {
    throw Error(ErrorCode::kTransportError, "no recorded response for prompt");
  }
  return it->second;
}

std::string RecordingChatClient::Complete(const std::string& prompt) {
  std::string response = inner_.Complete(prompt);
  const json rec{{"prompt_sha256", Sha256Hex(prompt)},
                 {"model", inner_.ModelId()},
                 {"request", prompt},
                 {"response", response}};
  std::lock_guard lock(mu_);
  if (transcript_.has_parent_path()) std::filesystem::create_directories(transcript_.parent_path());
  std::ofstream out(transcript_, std::ios::app);
  out << rec.dump() << "\n";
  return response;
}

}  // namespace mvfs
