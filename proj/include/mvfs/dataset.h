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

#ifndef MVFS_DATASET_H_
#define MVFS_DATASET_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mvfs/matrix.h"

namespace mvfs {

// One feature block (modality) of a multi-view dataset.
struct ViewBlock {
  std::string name;
  Matrix matrix;  // n x d(i)
  // Names as given in the source data; entries may be empty.
  std::vector<std::string> feature_names;
};

struct FeatureRef {
  std::size_t view = 0;
  std::size_t local = 0;
  bool operator==(const FeatureRef&) const = default;
};

// Per-view feature matrices plus a binary label matrix. Features are
// addressed globally by concatenating views in order.
class MultiViewDataset {
 public:
  MultiViewDataset() = default;
  // Validates shapes, finiteness and label binarity. Warns (does not fail)
  // on all-zero label columns.
  MultiViewDataset(std::vector<ViewBlock> views, BinaryMatrix labels);

  std::size_t num_samples() const { return labels_.rows(); }
  std::size_t num_views() const { return views_.size(); }
  std::size_t num_features() const { return feature_refs_.size(); }
  std::size_t num_labels() const { return labels_.cols(); }

  const std::vector<ViewBlock>& views() const { return views_; }
  const ViewBlock& view(std::size_t i) const { return views_.at(i); }
  const BinaryMatrix& labels() const { return labels_; }

  std::size_t GlobalId(std::size_t view, std::size_t local) const;
  FeatureRef Locate(std::size_t global_id) const;
  // Owning view of every global feature id.
  std::vector<std::size_t> FeatureViews() const;
  std::vector<double> FeatureColumn(std::size_t global_id) const;
  std::vector<std::uint8_t> LabelColumn(std::size_t label) const;

  // Rows restricted (and reordered) to `rows`.
  MultiViewDataset SelectRows(std::span<const std::size_t> rows) const;
  // Columns restricted to the given global feature ids, concatenated into a
  // single n x ids.size() matrix.
  Matrix GatherFeatures(std::span<const std::size_t> global_ids) const;

  bool operator==(const MultiViewDataset& other) const;

 private:
  std::vector<ViewBlock> views_;
  BinaryMatrix labels_;
  std::vector<std::size_t> view_offsets_;
  std::vector<FeatureRef> feature_refs_;
};

// Natural-language descriptions of views, features and labels.
struct TextCatalog {
  std::vector<std::string> view_texts;
  std::vector<std::vector<std::string>> feature_texts;  // per view
  std::vector<std::string> label_texts;

  const std::string& FeatureText(const MultiViewDataset& dataset,
                                 std::size_t global_id) const;
  bool operator==(const TextCatalog&) const = default;
};

struct LoadedDataset {
  MultiViewDataset dataset;
  TextCatalog catalog;
};

// "<view_name> feature <local_index + 1>".
std::string PseudoName(std::string_view view_name, std::size_t local_index);

// True for names that carry no meaning: empty, all digits, or digits after a
// single alphabetic prefix character ("17", "f17").
bool IsBareNumberName(std::string_view name);

// Builds the catalog for a dataset, substituting pseudo-names for bare-number
// feature names and the view name for missing view texts.
TextCatalog MakeCatalog(const MultiViewDataset& dataset,
                        std::vector<std::string> view_texts,
                        std::vector<std::string> label_texts);

// Reads a JSON manifest:
//   {"views": [{"name", "matrix", "feature_texts"?}], "labels",
//    "view_texts"?, "label_texts"}
// Paths are relative to the manifest. `feature_texts` and `label_texts` are
// either inline string arrays or paths to files with one text per line.
LoadedDataset LoadDataset(const std::filesystem::path& manifest_path);

// Writes manifest.json plus one CSV per view and labels.csv into `dir`.
// Returns the manifest path.
std::filesystem::path WriteDataset(const MultiViewDataset& dataset,
                                   const TextCatalog& catalog,
                                   const std::filesystem::path& dir);

// Comma-delimited numeric matrix, one row per line, no header. Rejects
// NaN/Inf and ragged rows with the offending line number.
Matrix ReadMatrixCsv(const std::filesystem::path& path);
std::string FormatMatrixCsv(const Matrix& m);

struct ArffView {
  std::string name;
  std::size_t columns = 0;
};

// MULAN-style ARFF: feature attributes, consumed in order by `views`,
// followed by `num_labels` binary label attributes. Dense and sparse
// ({index value, ...}) rows are accepted. Feature attribute names are
// dropped so features get pseudo-names; label attribute names become label
// texts.
LoadedDataset ReadArff(const std::filesystem::path& path, const std::vector<ArffView>& views,
                       std::size_t num_labels);

struct SplitIndices {
  std::vector<std::size_t> train_ids;  // ascending
  std::vector<std::size_t> test_ids;   // ascending
  std::uint64_t seed = 0;
};

// Uniform shuffle then prefix split with |train| = round(train_fraction * n).
SplitIndices Split(std::size_t n, double train_fraction, std::uint64_t seed);

}  // namespace mvfs

#endif  // MVFS_DATASET_H_
