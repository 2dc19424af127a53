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

#ifndef MVFS_TESTS_SUPPORT_TEST_SUPPORT_H_
#define MVFS_TESTS_SUPPORT_TEST_SUPPORT_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mvfs/dataset.h"
#include "mvfs/eval.h"
#include "mvfs/graph.h"
#include "mvfs/matrix.h"

namespace mvfs::testing {

std::filesystem::path SourceDir();
std::filesystem::path ToyDir();
std::filesystem::path GoldenDir();
std::filesystem::path CliPath();
std::filesystem::path NoNetworkShim();

// Compares `actual` with tests/golden/<name>. With MVFS_UPDATE_GOLDEN=1 in
// the environment the file is rewritten instead. Returns a description of
// the first difference, empty on a match.
std::string CompareGolden(const std::string& name, const std::string& actual);

// Fresh empty directory under the system temp dir.
std::filesystem::path FreshDir(std::string_view name);

// Runs a shell command, returning its exit status and captured stdout+stderr.
struct CommandResult {
  int status = -1;
  std::string output;
};
CommandResult RunCommand(const std::string& command);

// Latent-factor multi-view data: labels threshold noisy linear functions of
// a few latent factors; about 70% of the features are noisy mixes of the
// same factors, the rest pure noise.
struct SyntheticSpec {
  std::size_t samples = 200;
  std::vector<std::pair<std::string, std::size_t>> views = {{"A", 6}, {"B", 4}};
  std::size_t labels = 4;
  std::size_t latent = 5;
};
MultiViewDataset MakeSynthetic(const SyntheticSpec& spec, std::uint64_t seed);
// 2417 samples, views GE(79) and PP(24), 14 labels.
SyntheticSpec YeastShape();

// Small graph with at least one edge in every relation.
HeteroGraph RandomToyGraph(std::size_t views, std::size_t features, std::size_t labels,
                           std::uint64_t seed);

// One view, features {eye, fur, whisker}, labels {dog, cat}: eye and fur
// connect to dog, whisker to cat, optionally dog and cat share an ll_sem
// edge.
HeteroGraph EyeGraph(bool with_ll_sem);

// Reference oracles written independently of the library.
double ReferenceMi(const std::vector<int>& x, const std::vector<int>& y);

struct ReferenceMlknn {
  std::vector<double> prior;
  std::vector<std::vector<long long>> with;     // [label][t]
  std::vector<std::vector<long long>> without;  // [label][t]
  std::vector<std::vector<double>> confidence;  // [test sample][label]
};
ReferenceMlknn RunReferenceMlknn(const Matrix& train_x, const BinaryMatrix& train_y,
                                 const Matrix& test_x, std::size_t k, double s);

}  // namespace mvfs::testing

#endif  // MVFS_TESTS_SUPPORT_TEST_SUPPORT_H_
