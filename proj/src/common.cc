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

#include <openssl/evp.h>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mvfs/error.h"
#include "mvfs/util.h"

namespace mvfs {

const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kMissingRun: return "MissingRun";
    case ErrorCode::kMissingFile: return "MissingFile";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kRowCountMismatch: return "RowCountMismatch";
    case ErrorCode::kNonBinaryLabel: return "NonBinaryLabel";
    case ErrorCode::kDegenerateSplit: return "DegenerateSplit";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kNodeSetMismatch: return "NodeSetMismatch";
    case ErrorCode::kKTooLarge: return "KTooLarge";
    case ErrorCode::kTooFewSamples: return "TooFewSamples";
    case ErrorCode::kNoPositives: return "NoPositives";
    case ErrorCode::kNoSupervisionEdges: return "NoSupervisionEdges";
    case ErrorCode::kCorruptCacheEntry: return "CorruptCacheEntry";
    case ErrorCode::kTransportError: return "TransportError";
    case ErrorCode::kMalformedResponse: return "MalformedResponse";
    case ErrorCode::kMissingPairInResponse: return "MissingPairInResponse";
    case ErrorCode::kBatchTooLarge: return "BatchTooLarge";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kGradCheckFailure: return "GradCheckFailure";
    case ErrorCode::kInternal: return "Internal";
  }
  return "Unknown";
}

int ExitCodeFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfigError:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kMissingRun:
      return 2;
    case ErrorCode::kMissingFile:
    case ErrorCode::kParseError:
    case ErrorCode::kRowCountMismatch:
    case ErrorCode::kNonBinaryLabel:
    case ErrorCode::kDegenerateSplit:
    case ErrorCode::kLengthMismatch:
    case ErrorCode::kNodeSetMismatch:
    case ErrorCode::kKTooLarge:
    case ErrorCode::kTooFewSamples:
    case ErrorCode::kNoPositives:
    case ErrorCode::kNoSupervisionEdges:
    case ErrorCode::kCorruptCacheEntry:
      return 3;
    case ErrorCode::kTransportError:
    case ErrorCode::kMalformedResponse:
    case ErrorCode::kMissingPairInResponse:
    case ErrorCode::kBatchTooLarge:
      return 4;
    case ErrorCode::kShapeMismatch:
    case ErrorCode::kNonFiniteLoss:
    case ErrorCode::kGradCheckFailure:
    case ErrorCode::kInternal:
      return 5;
  }
  return 5;
}

namespace {
thread_local WarningCapture* active_capture = nullptr;
}  // namespace

WarningCapture::WarningCapture() : previous_(active_capture) {
  active_capture = this;
}

WarningCapture::~WarningCapture() { active_capture = previous_; }

bool WarningCapture::Contains(std::string_view needle) const {
  for (const auto& m : messages_) {
    if (m.find(needle) != std::string::npos) return true;
  }
  return false;
}

void Warn(std::string_view message) {
  if (active_capture != nullptr) {
    active_capture->messages_.emplace_back(message);
    return;
  }
  std::cerr << "warning: " << message << '\n';
}

std::uint64_t Rng::Below(std::uint64_t bound) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % bound;
}

Sha256::Sha256() : ctx_(EVP_MD_CTX_new()) {
  EVP_DigestInit_ex(static_cast<EVP_MD_CTX*>(ctx_), EVP_sha256(), nullptr);
}

Sha256::~Sha256() { EVP_MD_CTX_free(static_cast<EVP_MD_CTX*>(ctx_)); }

void Sha256::Update(const void* data, std::size_t size) {
  EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), data, size);
}

void Sha256::Update(std::string_view bytes) { Update(bytes.data(), bytes.size()); }

std::string Sha256::HexDigest() {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(static_cast<EVP_MD_CTX*>(ctx_), digest, &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string Sha256Hex(std::string_view bytes) {
  Sha256 h;
  h.Update(bytes);
  return h.HexDigest();
}

std::string FormatDouble(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw Error(ErrorCode::kInternal, "to_chars failed");
  return std::string(buf, end);
}

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kMissingFile, "cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFileAtomic(const std::filesystem::path& path, std::string_view data) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kMissingFile, "cannot write " + tmp.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error(ErrorCode::kMissingFile, "write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<std::string> SplitString(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(text.substr(start));
      return out;
    }
    out.emplace_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string Trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(first, last - first + 1));
}

}  // namespace mvfs
