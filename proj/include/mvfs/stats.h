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

#ifndef MVFS_STATS_H_
#define MVFS_STATS_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvfs/dataset.h"
#include "mvfs/matrix.h"

namespace mvfs {

struct DiscreteColumn {
  std::vector<std::uint16_t> codes;  // each < bin_count
  int bin_count = 1;
};

// Equal-frequency binning by rank. Columns with at most `bins` distinct
// values are coded by distinct-value identity; otherwise the element at
// sorted position p gets bin floor(p * bins / n) and tied values all take
// the lowest bin among their positions. A constant column yields a single
// code 0.
DiscreteColumn Discretize(std::span<const double> column, int bins);
DiscreteColumn FromBinary(std::span<const std::uint8_t> column);

// Entropy in nats.
double Entropy(const DiscreteColumn& x);

// Plug-in mutual information in nats over the joint histogram; clamped at
// zero and exactly symmetric in its arguments.
double MutualInformation(const DiscreteColumn& x, const DiscreteColumn& y);

struct FeaturePairMi {
  std::uint32_t a = 0;  // a < b, global feature ids
  std::uint32_t b = 0;
  double mi = 0.0;
  bool operator==(const FeaturePairMi&) const = default;
};

struct MiMatrices {
  Matrix fl;                       // d x c, MI(feature, label)
  std::vector<FeaturePairMi> ff;   // sorted by (a, b)
  Matrix vl;                       // V x c, mean of fl over each view
  BasicMatrix<std::int64_t> cooc;  // c x c label co-occurrence counts
  bool operator==(const MiMatrices&) const = default;
};

struct MiOptions {
  int bins = 10;
  // When > 0, keep only pairs that are among the M strongest for at least
  // one endpoint.
  std::size_t ff_top_m = 0;
  // 0 = hardware concurrency.
  unsigned workers = 0;
};

MiMatrices ComputeMiMatrices(const MultiViewDataset& dataset,
                             const MiOptions& options = {});

BasicMatrix<std::int64_t> LabelCooccurrence(const BinaryMatrix& labels);

// Content digest of matrices, labels and view names.
std::string DatasetDigest(const MultiViewDataset& dataset);

// Binary cache keyed by dataset digest and bin count.
std::filesystem::path MiCachePath(const std::filesystem::path& dir,
                                  const std::string& digest,
                                  const MiOptions& options);
void WriteMiCache(const std::filesystem::path& path, const MiMatrices& mi,
                  const std::string& digest, const MiOptions& options);
// Empty when the file is missing or belongs to another digest/options.
std::optional<MiMatrices> ReadMiCache(const std::filesystem::path& path,
                                      const std::string& digest,
                                      const MiOptions& options);

}  // namespace mvfs

#endif  // MVFS_STATS_H_
