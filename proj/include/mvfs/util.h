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

#ifndef MVFS_UTIL_H_
#define MVFS_UTIL_H_

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace mvfs {

// Prints a warning to stderr, or records it when a WarningCapture is active
// on the calling thread.
void Warn(std::string_view message);

class WarningCapture {
 public:
  WarningCapture();
  ~WarningCapture();
  WarningCapture(const WarningCapture&) = delete;
  WarningCapture& operator=(const WarningCapture&) = delete;

  const std::vector<std::string>& messages() const { return messages_; }
  bool Contains(std::string_view needle) const;

 private:
  friend void Warn(std::string_view message);
  std::vector<std::string> messages_;
  WarningCapture* previous_;
};

// Seeded generator with platform-independent derived distributions (the
// standard distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t Next() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double Uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  // Uniform in [0, bound), bound > 0, without modulo bias.
  std::uint64_t Below(std::uint64_t bound);

  template <typename T>
  void Shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[Below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

std::string Sha256Hex(std::string_view bytes);

// Incremental SHA-256.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void Update(std::string_view bytes);
  void Update(const void* data, std::size_t size);
  std::string HexDigest();

 private:
  void* ctx_;
};

// Shortest decimal representation that parses back to the same double.
std::string FormatDouble(double value);

std::string ReadFile(const std::filesystem::path& path);
// Writes through a temporary file and renames it into place.
void WriteFileAtomic(const std::filesystem::path& path, std::string_view data);

std::vector<std::string> SplitString(std::string_view text, char sep);
std::string Trim(std::string_view text);

}  // namespace mvfs

#endif  // MVFS_UTIL_H_
