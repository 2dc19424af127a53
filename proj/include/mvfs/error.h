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

#ifndef MVFS_ERROR_H_
#define MVFS_ERROR_H_

#include <stdexcept>
#include <string>

namespace mvfs {

enum class ErrorCode {
  // Configuration.
  kConfigError,
  kInvalidArgument,
  kMissingRun,
  // Data.
  kMissingFile,
  kParseError,
  kRowCountMismatch,
  kNonBinaryLabel,
  kDegenerateSplit,
  kLengthMismatch,
  kNodeSetMismatch,
  kKTooLarge,
  kTooFewSamples,
  kNoPositives,
  kNoSupervisionEdges,
  kCorruptCacheEntry,
  // External service.
  kTransportError,
  kMalformedResponse,
  kMissingPairInResponse,
  kBatchTooLarge,
  // Internal invariants.
  kShapeMismatch,
  kNonFiniteLoss,
  kGradCheckFailure,
  kInternal,
};

const char* ErrorCodeName(ErrorCode code);

// Process exit code for the CLI: 2 config, 3 data, 4 external service,
// 5 internal invariant.
int ExitCodeFor(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const { return code_; }
  // The message without the code name.
  const std::string& detail() const { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace mvfs

#endif  // MVFS_ERROR_H_
