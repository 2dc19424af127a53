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

#include "mvfs/dataset.h"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "mvfs/error.h"
#include "mvfs/util.h"

namespace mvfs {

using nlohmann::json;

MultiViewDataset::MultiViewDataset(std::vector<ViewBlock> views,
                                   BinaryMatrix labels)
    : views_(std::move(views)), labels_(std::move(labels)) {
  if (views_.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "dataset has no views");
  }
  const std::size_t n = labels_.rows();
  for (std::size_t v = 0; v < views_.size(); ++v) {
    auto& view = views_[v];
    if (view.matrix.rows() != n) {
      throw Error(ErrorCode::kRowCountMismatch,
                  "view '" + view.name + "' has " +
                      std::to_string(view.matrix.rows()) +
                      " rows but the label matrix has " + std::to_string(n));
    }
    if (view.matrix.cols() == 0) {
      throw Error(ErrorCode::kInvalidArgument,
                  "view '" + view.name + "' has no features");
    }
    for (double x : view.matrix.data()) {
      if (!std::isfinite(x)) {
        throw Error(ErrorCode::kParseError,
                    "view '" + view.name + "' contains a non-finite value");
      }
    }
    if (view.feature_names.empty()) {
      view.feature_names.assign(view.matrix.cols(), "");
    } else if (view.feature_names.size() != view.matrix.cols()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "view '" + view.name + "' has " +
                      std::to_string(view.feature_names.size()) +
                      " feature names for " +
                      std::to_string(view.matrix.cols()) + " columns");
    }
    view_offsets_.push_back(feature_refs_.size());
    for (std::size_t m = 0; m < view.matrix.cols(); ++m) {
      feature_refs_.push_back({v, m});
    }
  }
  for (std::uint8_t x : labels_.data()) {
    if (x > 1) throw Error(ErrorCode::kNonBinaryLabel, "label value not in {0,1}");
  }
  for (std::size_t j = 0; j < labels_.cols(); ++j) {
    bool any = false;
    for (std::size_t i = 0; i < n && !any; ++i) any = labels_(i, j) != 0;
    if (!any) Warn("label column " + std::to_string(j) + " is all zero");
  }
}

std::size_t MultiViewDataset::GlobalId(std::size_t view,
                                       std::size_t local) const {
  if (view >= views_.size() || local >= views_[view].matrix.cols()) {
    throw Error(ErrorCode::kInvalidArgument, "feature reference out of range");
  }
  return view_offsets_[view] + local;
}

FeatureRef MultiViewDataset::Locate(std::size_t global_id) const {
  if (global_id >= feature_refs_.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "global feature id " + std::to_string(global_id) +
                    " out of range");
  }
  return feature_refs_[global_id];
}

std::vector<std::size_t> MultiViewDataset::FeatureViews() const {
  std::vector<std::size_t> out(feature_refs_.size());
  for (std::size_t g = 0; g < out.size(); ++g) out[g] = feature_refs_[g].view;
  return out;
}

std::vector<double> MultiViewDataset::FeatureColumn(std::size_t global_id) const {
  const auto ref = Locate(global_id);
  return views_[ref.view].matrix.column(ref.local);
}

std::vector<std::uint8_t> MultiViewDataset::LabelColumn(std::size_t label) const {
  return labels_.column(label);
}

MultiViewDataset MultiViewDataset::SelectRows(
    std::span<const std::size_t> rows) const {
  std::vector<ViewBlock> views;
  for (const auto& view : views_) {
    ViewBlock out{view.name, Matrix(rows.size(), view.matrix.cols()),
                  view.feature_names};
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto src = view.matrix.row(rows[i]);
      std::copy(src.begin(), src.end(), out.matrix.row(i).begin());
    }
    views.push_back(std::move(out));
  }
  BinaryMatrix labels(rows.size(), labels_.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = labels_.row(rows[i]);
    std::copy(src.begin(), src.end(), labels.row(i).begin());
  }
  return MultiViewDataset(std::move(views), std::move(labels));
}

Matrix MultiViewDataset::GatherFeatures(
    std::span<const std::size_t> global_ids) const {
  Matrix out(num_samples(), global_ids.size());
  for (std::size_t c = 0; c < global_ids.size(); ++c) {
    const auto ref = Locate(global_ids[c]);
    const Matrix& m = views_[ref.view].matrix;
    for (std::size_t i = 0; i < out.rows(); ++i) out(i, c) = m(i, ref.local);
  }
  return out;
}

bool MultiViewDataset::operator==(const MultiViewDataset& other) const {
  if (views_.size() != other.views_.size() || !(labels_ == other.labels_)) {
    return false;
  }
  for (std::size_t v = 0; v < views_.size(); ++v) {
    const auto& a = views_[v];
    const auto& b = other.views_[v];
    if (a.name != b.name || a.feature_names != b.feature_names ||
        !(a.matrix == b.matrix)) {
      return false;
    }
  }
  return true;
}

const std::string& TextCatalog::FeatureText(const MultiViewDataset& dataset,
                                            std::size_t global_id) const {
  const auto ref = dataset.Locate(global_id);
  return feature_texts.at(ref.view).at(ref.local);
}

std::string PseudoName(std::string_view view_name, std::size_t local_index) {
  return std::string(view_name) + " feature " + std::to_string(local_index + 1);
}

bool IsBareNumberName(std::string_view name) {
  const std::string trimmed = Trim(name);
  if (trimmed.empty()) return true;
  std::size_t start = 0;
  if (std::isalpha(static_cast<unsigned char>(trimmed[0]))) start = 1;
  if (start == trimmed.size()) return false;
  return std::all_of(trimmed.begin() + static_cast<std::ptrdiff_t>(start),
                     trimmed.end(),
                     [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

TextCatalog MakeCatalog(const MultiViewDataset& dataset,
                        std::vector<std::string> view_texts,
                        std::vector<std::string> label_texts) {
  TextCatalog catalog;
  if (!view_texts.empty() && view_texts.size() != dataset.num_views()) {
    throw Error(ErrorCode::kInvalidArgument,
                "view_texts has " + std::to_string(view_texts.size()) +
                    " entries for " + std::to_string(dataset.num_views()) +
                    " views");
  }
  if (label_texts.size() != dataset.num_labels()) {
    throw Error(ErrorCode::kInvalidArgument,
                "label_texts has " + std::to_string(label_texts.size()) +
                    " entries for " + std::to_string(dataset.num_labels()) +
                    " labels");
  }
  for (std::size_t v = 0; v < dataset.num_views(); ++v) {
    const auto& view = dataset.view(v);
    std::string text = view_texts.empty() ? std::string() : Trim(view_texts[v]);
    catalog.view_texts.push_back(text.empty() ? view.name : text);
    std::vector<std::string> features;
    for (std::size_t m = 0; m < view.feature_names.size(); ++m) {
      const auto& name = view.feature_names[m];
      features.push_back(IsBareNumberName(name) ? PseudoName(view.name, m)
                                                : Trim(name));
    }
    catalog.feature_texts.push_back(std::move(features));
  }
  for (std::size_t j = 0; j < label_texts.size(); ++j) {
    std::string text = Trim(label_texts[j]);
    catalog.label_texts.push_back(text.empty() ? "label " + std::to_string(j + 1)
                                               : text);
  }
  return catalog;
}

namespace {

double ParseCell(std::string_view cell, const std::filesystem::path& path,
                 std::size_t line) {
  const std::string t = Trim(cell);
  double value = 0.0;
  const char* begin = t.data();
  const char* end = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (t.empty() || ec != std::errc() || ptr != end) {
    throw Error(ErrorCode::kParseError, path.string() + ":" +
                                            std::to_string(line) +
                                            ": cannot parse '" + t + "'");
  }
  if (!std::isfinite(value)) {
    throw Error(ErrorCode::kParseError, path.string() + ":" +
                                            std::to_string(line) +
                                            ": non-finite value '" + t + "'");
  }
  return value;
}

std::vector<std::string> ReadLines(const std::filesystem::path& path) {
  std::vector<std::string> lines = SplitString(ReadFile(path), '\n');
  for (auto& l : lines) {
    if (!l.empty() && l.back() == '\r') l.pop_back();
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

std::vector<std::string> ReadTexts(const json& node,
                                   const std::filesystem::path& base,
                                   const char* key) {
  if (node.is_array()) {
    std::vector<std::string> out;
    for (const auto& item : node) {
      if (!item.is_string()) {
        throw Error(ErrorCode::kParseError,
                    std::string(key) + " entries must be strings");
      }
      out.push_back(item.get<std::string>());
    }
    return out;
  }
  if (node.is_string()) return ReadLines(base / node.get<std::string>());
  throw Error(ErrorCode::kParseError,
              std::string(key) + " must be an array or a file path");
}

BinaryMatrix ReadLabels(const std::filesystem::path& path) {
  const Matrix raw = ReadMatrixCsv(path);
  BinaryMatrix labels(raw.rows(), raw.cols());
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    for (std::size_t j = 0; j < raw.cols(); ++j) {
      const double x = raw(i, j);
      if (x != 0.0 && x != 1.0) {
        throw Error(ErrorCode::kNonBinaryLabel,
                    path.string() + ":" + std::to_string(i + 1) +
                        ": label value " + FormatDouble(x) + " not in {0,1}");
      }
      labels(i, j) = static_cast<std::uint8_t>(x);
    }
  }
  return labels;
}

}  // namespace

Matrix ReadMatrixCsv(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::kMissingFile, path.string());
  }
  const auto lines = ReadLines(path);
  std::size_t cols = 0;
  std::vector<double> values;
  std::size_t rows = 0;
  for (std::size_t l = 0; l < lines.size(); ++l) {
    if (Trim(lines[l]).empty()) {
      throw Error(ErrorCode::kParseError,
                  path.string() + ":" + std::to_string(l + 1) + ": empty row");
    }
    const auto cells = SplitString(lines[l], ',');
    if (rows == 0) {
      cols = cells.size();
    } else if (cells.size() != cols) {
      throw Error(ErrorCode::kParseError,
                  path.string() + ":" + std::to_string(l + 1) + ": expected " +
                      std::to_string(cols) + " columns, found " +
                      std::to_string(cells.size()));
    }
    for (const auto& c : cells) values.push_back(ParseCell(c, path, l + 1));
    ++rows;
  }
  Matrix m(rows, cols);
  m.data() = std::move(values);
  return m;
}

std::string FormatMatrixCsv(const Matrix& m) {
  std::string out;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) out.push_back(',');
      out += FormatDouble(m(i, j));
    }
    out.push_back('\n');
  }
  return out;
}

LoadedDataset LoadDataset(const std::filesystem::path& manifest_path) {
  if (!std::filesystem::exists(manifest_path)) {
    throw Error(ErrorCode::kMissingFile, manifest_path.string());
  }
  const auto base = manifest_path.parent_path();
  json manifest;
  try {
    manifest = json::parse(ReadFile(manifest_path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParseError,
                manifest_path.string() + ": " + e.what());
  }
  if (!manifest.contains("views") || !manifest["views"].is_array() ||
      manifest["views"].empty()) {
    throw Error(ErrorCode::kParseError, "manifest needs a non-empty 'views' array");
  }
  if (!manifest.contains("labels") || !manifest["labels"].is_string()) {
    throw Error(ErrorCode::kParseError, "manifest needs a 'labels' path");
  }

  std::vector<ViewBlock> views;
  for (const auto& v : manifest["views"]) {
    if (!v.contains("name") || !v.contains("matrix")) {
      throw Error(ErrorCode::kParseError, "each view needs 'name' and 'matrix'");
    }
    ViewBlock block;
    block.name = v["name"].get<std::string>();
    block.matrix = ReadMatrixCsv(base / v["matrix"].get<std::string>());
    if (v.contains("feature_texts")) {
      block.feature_names = ReadTexts(v["feature_texts"], base, "feature_texts");
    }
    views.push_back(std::move(block));
  }
  BinaryMatrix labels = ReadLabels(base / manifest["labels"].get<std::string>());

  std::vector<std::string> view_texts;
  if (manifest.contains("view_texts")) {
    view_texts = ReadTexts(manifest["view_texts"], base, "view_texts");
  }
  std::vector<std::string> label_texts;
  if (manifest.contains("label_texts")) {
    label_texts = ReadTexts(manifest["label_texts"], base, "label_texts");
  } else {
    label_texts.assign(labels.cols(), "");
  }

  LoadedDataset out;
  out.dataset = MultiViewDataset(std::move(views), std::move(labels));
  out.catalog = MakeCatalog(out.dataset, std::move(view_texts),
                            std::move(label_texts));
  return out;
}

std::filesystem::path WriteDataset(const MultiViewDataset& dataset,
                                   const TextCatalog& catalog,
                                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["views"] = json::array();
  for (std::size_t v = 0; v < dataset.num_views(); ++v) {
    const auto& view = dataset.view(v);
    const std::string file = "view_" + std::to_string(v) + ".csv";
    WriteFileAtomic(dir / file, FormatMatrixCsv(view.matrix));
    manifest["views"].push_back(
        {{"name", view.name}, {"matrix", file}, {"feature_texts", view.feature_names}});
  }
  Matrix labels(dataset.num_samples(), dataset.num_labels());
  for (std::size_t i = 0; i < labels.rows(); ++i) {
    for (std::size_t j = 0; j < labels.cols(); ++j) {
      labels(i, j) = dataset.labels()(i, j);
    }
  }
  WriteFileAtomic(dir / "labels.csv", FormatMatrixCsv(labels));
  manifest["labels"] = "labels.csv";
  manifest["view_texts"] = catalog.view_texts;
  manifest["label_texts"] = catalog.label_texts;
  const auto path = dir / "manifest.json";
  WriteFileAtomic(path, manifest.dump(2) + "\n");
  return path;
}

SplitIndices Split(std::size_t n, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "train_fraction must be in (0,1)");
  }
  const auto n_train =
      static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n) + 0.5));
  if (n_train == 0 || n_train >= n) {
    throw Error(ErrorCode::kDegenerateSplit,
                "split of " + std::to_string(n) + " samples leaves an empty side");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  rng.Shuffle(perm);
  SplitIndices out;
  out.seed = seed;
  out.train_ids.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.test_ids.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(out.train_ids.begin(), out.train_ids.end());
  std::sort(out.test_ids.begin(), out.test_ids.end());
  return out;
}

namespace {

std::string ArffToken(std::string_view& rest) {
  while (!rest.empty() && std::isspace(static_cast<unsigned char>(rest.front()))) {
    rest.remove_prefix(1);
  }
  if (rest.empty()) return {};
  const char quote = rest.front();
  if (quote == '\'' || quote == '"') {
    const auto end = rest.find(quote, 1);
    std::string tok(rest.substr(1, end == std::string_view::npos ? rest.size() - 1 : end - 1));
    rest.remove_prefix(end == std::string_view::npos ? rest.size() : end + 1);
    return tok;
  }
  std::size_t end = 0;
  while (end < rest.size() && !std::isspace(static_cast<unsigned char>(rest[end]))) ++end;
  std::string tok(rest.substr(0, end));
  rest.remove_prefix(end);
  return tok;
}

double ArffNumber(const std::string& cell, const std::string& where) {
  double v = 0.0;
  const std::string t = Trim(cell);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) {
    throw Error(ErrorCode::kParseError, where + ": bad value '" + t + "'");
  }
  return v;
}

}  // namespace

LoadedDataset ReadArff(const std::filesystem::path& path, const std::vector<ArffView>& views,
                       std::size_t num_labels) {
  const std::string text = ReadFile(path);
  std::vector<std::string> attributes;
  std::vector<std::vector<double>> rows;
  bool in_data = false;
  std::size_t line_no = 0;
  for (const auto& raw : SplitString(text, '\n')) {
    ++line_no;
    const std::string line = Trim(raw);
    if (line.empty() || line[0] == '%') continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (!in_data) {
      std::string lower = line;
      std::transform(lower.begin(), lower.end(), lower.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      if (lower.starts_with("@attribute")) {
        std::string_view rest = std::string_view(line).substr(10);
        attributes.push_back(ArffToken(rest));
      } else if (lower.starts_with("@data")) {
        in_data = true;
      }
      continue;
    }
    std::vector<double> row(attributes.size(), 0.0);
    if (line.front() == '{') {
      const auto close = line.rfind('}');
      for (const auto& item : SplitString(line.substr(1, close == std::string::npos
                                                             ? std::string::npos
                                                             : close - 1),
                                          ',')) {
        std::string_view rest = item;
        const std::string index = ArffToken(rest);
        const std::string value = ArffToken(rest);
        if (index.empty()) continue;
        const auto idx = static_cast<std::size_t>(ArffNumber(index, where));
        if (idx >= row.size()) throw Error(ErrorCode::kParseError, where + ": index out of range");
        row[idx] = ArffNumber(value, where);
      }
    } else {
      const auto cells = SplitString(line, ',');
      if (cells.size() != attributes.size()) {
        throw Error(ErrorCode::kParseError, where + ": expected " +
                                                std::to_string(attributes.size()) + " values, got " +
                                                std::to_string(cells.size()));
      }
      for (std::size_t a = 0; a < cells.size(); ++a) row[a] = ArffNumber(cells[a], where);
    }
    rows.push_back(std::move(row));
  }
  std::size_t feature_columns = 0;
  for (const auto& v : views) feature_columns += v.columns;
  if (feature_columns + num_labels != attributes.size()) {
    throw Error(ErrorCode::kParseError,
                path.string() + " has " + std::to_string(attributes.size()) +
                    " attributes, views and labels account for " +
                    std::to_string(feature_columns + num_labels));
  }
  if (rows.empty()) throw Error(ErrorCode::kParseError, path.string() + " has no data rows");

  std::vector<ViewBlock> blocks;
  std::size_t offset = 0;
  for (const auto& v : views) {
    ViewBlock b;
    b.name = v.name;
    b.matrix = Matrix(rows.size(), v.columns);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t c = 0; c < v.columns; ++c) b.matrix(i, c) = rows[i][offset + c];
    }
    offset += v.columns;
    blocks.push_back(std::move(b));
  }
  BinaryMatrix labels(rows.size(), num_labels);
  std::vector<std::string> label_texts;
  for (std::size_t j = 0; j < num_labels; ++j) {
    label_texts.push_back(attributes[offset + j]);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double v = rows[i][offset + j];
      if (v != 0.0 && v != 1.0) {
        throw Error(ErrorCode::kNonBinaryLabel, "row " + std::to_string(i + 1) + " label " +
                                                    attributes[offset + j] + " is " +
                                                    FormatDouble(v));
      }
      labels(i, j) = static_cast<std::uint8_t>(v);
    }
  }
  LoadedDataset out;
  out.dataset = MultiViewDataset(std::move(blocks), std::move(labels));
  out.catalog = MakeCatalog(out.dataset, {}, std::move(label_texts));
  return out;
}

}  // namespace mvfs
