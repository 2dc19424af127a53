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

#include "mvfs/stats.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <thread>

#include "mvfs/error.h"
#include "mvfs/util.h"

namespace mvfs {

DiscreteColumn Discretize(std::span<const double> column, int bins) {
  if (bins < 2) throw Error(ErrorCode::kInvalidArgument, "bins must be >= 2");
  const std::size_t n = column.size();
  DiscreteColumn out;
  out.codes.assign(n, 0);
  if (n == 0) return out;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return column[a] < column[b]; });

  std::size_t distinct = 1;
  for (std::size_t p = 1; p < n; ++p) {
    if (column[order[p]] != column[order[p - 1]]) ++distinct;
  }

  if (distinct <= static_cast<std::size_t>(bins)) {
    std::uint16_t code = 0;
    for (std::size_t p = 0; p < n; ++p) {
      if (p > 0 && column[order[p]] != column[order[p - 1]]) ++code;
      out.codes[order[p]] = code;
    }
    out.bin_count = static_cast<int>(distinct);
    return out;
  }

  std::uint16_t run_code = 0;
  int max_code = 0;
  for (std::size_t p = 0; p < n; ++p) {
    if (p == 0 || column[order[p]] != column[order[p - 1]]) {
      run_code = static_cast<std::uint16_t>((p * static_cast<std::size_t>(bins)) / n);
    }
    out.codes[order[p]] = run_code;
    max_code = std::max<int>(max_code, run_code);
  }
  out.bin_count = max_code + 1;
  return out;
}

DiscreteColumn FromBinary(std::span<const std::uint8_t> column) {
  DiscreteColumn out;
  out.codes.assign(column.begin(), column.end());
  out.bin_count = 2;
  return out;
}

double Entropy(const DiscreteColumn& x) {
  const std::size_t n = x.codes.size();
  if (n == 0) return 0.0;
  std::vector<std::size_t> counts(static_cast<std::size_t>(x.bin_count), 0);
  for (auto c : x.codes) ++counts[c];
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(n);
    h -= p * std::log(p);
  }
  return h;
}

namespace {

// Joint histogram MI; `counts` is scratch space of size bx * by.
double JointMi(const DiscreteColumn& x, const DiscreteColumn& y,
               std::vector<std::uint32_t>& counts) {
  const std::size_t n = x.codes.size();
  const std::size_t bx = static_cast<std::size_t>(x.bin_count);
  const std::size_t by = static_cast<std::size_t>(y.bin_count);
  counts.assign(bx * by + bx + by, 0);
  std::uint32_t* joint = counts.data();
  std::uint32_t* mx = joint + bx * by;
  std::uint32_t* my = mx + bx;
  for (std::size_t i = 0; i < n; ++i) {
    ++joint[x.codes[i] * by + y.codes[i]];
    ++mx[x.codes[i]];
    ++my[y.codes[i]];
  }
  const double dn = static_cast<double>(n);
  double mi = 0.0;
  for (std::size_t a = 0; a < bx; ++a) {
    if (mx[a] == 0) continue;
    for (std::size_t b = 0; b < by; ++b) {
      const std::uint32_t c = joint[a * by + b];
      if (c == 0) continue;
      const double dc = static_cast<double>(c);
      mi += dc * std::log(dc * dn /
                          (static_cast<double>(mx[a]) * static_cast<double>(my[b])));
    }
  }
  mi /= dn;
  return mi > 0.0 ? mi : 0.0;
}

// Canonical argument order so MI(x,y) and MI(y,x) share one summation order.
bool SwapForSymmetry(const DiscreteColumn& x, const DiscreteColumn& y) {
  if (x.bin_count != y.bin_count) return y.bin_count < x.bin_count;
  return std::lexicographical_compare(y.codes.begin(), y.codes.end(),
                                      x.codes.begin(), x.codes.end());
}

unsigned ResolveWorkers(unsigned requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

// Runs body(i) for i in [0, count) on `workers` threads with a static
// interleaved schedule.
template <typename Body>
void ParallelFor(std::size_t count, unsigned workers, Body body) {
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(count, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> threads;
  for (unsigned w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) body(i);
    });
  }
  for (auto& t : threads) t.join();
}

}  // namespace

double MutualInformation(const DiscreteColumn& x, const DiscreteColumn& y) {
  if (x.codes.size() != y.codes.size()) {
    throw Error(ErrorCode::kLengthMismatch,
                "columns of length " + std::to_string(x.codes.size()) + " and " +
                    std::to_string(y.codes.size()));
  }
  if (x.codes.empty()) {
    throw Error(ErrorCode::kLengthMismatch, "empty columns");
  }
  std::vector<std::uint32_t> scratch;
  return SwapForSymmetry(x, y) ? JointMi(y, x, scratch) : JointMi(x, y, scratch);
}

BasicMatrix<std::int64_t> LabelCooccurrence(const BinaryMatrix& labels) {
  const std::size_t c = labels.cols();
  BasicMatrix<std::int64_t> cooc(c, c, 0);
  for (std::size_t r = 0; r < labels.rows(); ++r) {
    const auto row = labels.row(r);
    for (std::size_t i = 0; i < c; ++i) {
      if (!row[i]) continue;
      for (std::size_t j = 0; j < c; ++j) {
        if (row[j]) ++cooc(i, j);
      }
    }
  }
  return cooc;
}

MiMatrices ComputeMiMatrices(const MultiViewDataset& dataset,
                             const MiOptions& options) {
  const std::size_t d = dataset.num_features();
  const std::size_t c = dataset.num_labels();
  const unsigned workers = ResolveWorkers(options.workers);

  std::vector<DiscreteColumn> features(d);
  ParallelFor(d, workers, [&](std::size_t g) {
    features[g] = Discretize(dataset.FeatureColumn(g), options.bins);
  });
  std::vector<DiscreteColumn> labels(c);
  for (std::size_t j = 0; j < c; ++j) labels[j] = FromBinary(dataset.LabelColumn(j));

  MiMatrices out;
  out.fl = Matrix(d, c);
  ParallelFor(d, workers, [&](std::size_t g) {
    std::vector<std::uint32_t> scratch;
    for (std::size_t j = 0; j < c; ++j) {
      const auto& x = features[g];
      const auto& y = labels[j];
      out.fl(g, j) = SwapForSymmetry(x, y) ? JointMi(y, x, scratch)
                                           : JointMi(x, y, scratch);
    }
  });

  // Upper triangle, row a holds pairs (a, b > a) at a fixed offset.
  std::vector<std::size_t> row_offset(d + 1, 0);
  for (std::size_t a = 0; a < d; ++a) row_offset[a + 1] = row_offset[a] + (d - a - 1);
  std::vector<FeaturePairMi> pairs(row_offset[d]);
  ParallelFor(d, workers, [&](std::size_t a) {
    std::vector<std::uint32_t> scratch;
    for (std::size_t b = a + 1; b < d; ++b) {
      const auto& x = features[a];
      const auto& y = features[b];
      pairs[row_offset[a] + (b - a - 1)] = {
          static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b),
          SwapForSymmetry(x, y) ? JointMi(y, x, scratch) : JointMi(x, y, scratch)};
    }
  });

  if (options.ff_top_m > 0 && d > 1) {
    // Mark the M strongest partners of every feature; ties by partner id.
    std::vector<std::uint8_t> keep(pairs.size(), 0);
    auto pair_index = [&](std::size_t a, std::size_t b) {
      if (a > b) std::swap(a, b);
      return row_offset[a] + (b - a - 1);
    };
    for (std::size_t f = 0; f < d; ++f) {
      std::vector<std::size_t> partners;
      for (std::size_t g = 0; g < d; ++g) {
        if (g != f) partners.push_back(g);
      }
      const std::size_t m = std::min(options.ff_top_m, partners.size());
      std::partial_sort(partners.begin(), partners.begin() + static_cast<std::ptrdiff_t>(m),
                        partners.end(), [&](std::size_t g1, std::size_t g2) {
                          const double m1 = pairs[pair_index(f, g1)].mi;
                          const double m2 = pairs[pair_index(f, g2)].mi;
                          if (m1 != m2) return m1 > m2;
                          return g1 < g2;
                        });
      for (std::size_t i = 0; i < m; ++i) keep[pair_index(f, partners[i])] = 1;
    }
    std::vector<FeaturePairMi> kept;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (keep[i]) kept.push_back(pairs[i]);
    }
    pairs = std::move(kept);
  }
  out.ff = std::move(pairs);

  out.vl = Matrix(dataset.num_views(), c);
  for (std::size_t v = 0; v < dataset.num_views(); ++v) {
    const std::size_t first = dataset.GlobalId(v, 0);
    const std::size_t width = dataset.view(v).matrix.cols();
    for (std::size_t j = 0; j < c; ++j) {
      double sum = 0.0;
      for (std::size_t m = 0; m < width; ++m) sum += out.fl(first + m, j);
      out.vl(v, j) = sum / static_cast<double>(width);
    }
  }
  out.cooc = LabelCooccurrence(dataset.labels());
  return out;
}

std::string DatasetDigest(const MultiViewDataset& dataset) {
  Sha256 h;
  auto put_u64 = [&](std::uint64_t x) { h.Update(&x, sizeof(x)); };
  put_u64(dataset.num_samples());
  put_u64(dataset.num_views());
  for (const auto& view : dataset.views()) {
    put_u64(view.name.size());
    h.Update(view.name);
    put_u64(view.matrix.rows());
    put_u64(view.matrix.cols());
    h.Update(view.matrix.data().data(), view.matrix.data().size() * sizeof(double));
  }
  put_u64(dataset.num_labels());
  h.Update(dataset.labels().data().data(), dataset.labels().data().size());
  return h.HexDigest();
}

namespace {

constexpr char kCacheMagic[8] = {'M', 'V', 'F', 'S', 'M', 'I', '0', '1'};

std::string CacheKey(const std::string& digest, const MiOptions& options) {
  return digest + "|bins=" + std::to_string(options.bins) +
         "|top_m=" + std::to_string(options.ff_top_m);
}

template <typename T>
void PutPod(std::string& out, const T& value) {
  out.append(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
void PutVector(std::string& out, const std::vector<T>& v) {
  PutPod<std::uint64_t>(out, v.size());
  out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& data) : data_(data) {}

  template <typename T>
  T Pod() {
    T value;
    Take(&value, sizeof(T));
    return value;
  }

  template <typename T>
  std::vector<T> Vector() {
    const auto n = Pod<std::uint64_t>();
    if (n > (data_.size() - pos_) / sizeof(T)) {
      throw Error(ErrorCode::kCorruptCacheEntry, "truncated MI cache");
    }
    std::vector<T> v(n);
    Take(v.data(), n * sizeof(T));
    return v;
  }

  std::string String() {
    const auto n = Pod<std::uint64_t>();
    if (n > data_.size() - pos_) {
      throw Error(ErrorCode::kCorruptCacheEntry, "truncated MI cache");
    }
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool AtEnd() const { return pos_ == data_.size(); }

 private:
  void Take(void* dst, std::size_t n) {
    if (n > data_.size() - pos_) {
      throw Error(ErrorCode::kCorruptCacheEntry, "truncated MI cache");
    }
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }

  const std::string& data_;
  std::size_t pos_ = 0;
};

}  // namespace

std::filesystem::path MiCachePath(const std::filesystem::path& dir,
                                  const std::string& digest,
                                  const MiOptions& options) {
  return dir / ("mi_" + digest.substr(0, 16) + "_b" + std::to_string(options.bins) +
                (options.ff_top_m ? "_m" + std::to_string(options.ff_top_m) : "") +
                ".bin");
}

void WriteMiCache(const std::filesystem::path& path, const MiMatrices& mi,
                  const std::string& digest, const MiOptions& options) {
  std::string out(kCacheMagic, sizeof(kCacheMagic));
  const std::string key = CacheKey(digest, options);
  PutPod<std::uint64_t>(out, key.size());
  out += key;
  PutPod<std::uint64_t>(out, mi.fl.rows());
  PutPod<std::uint64_t>(out, mi.fl.cols());
  PutVector(out, mi.fl.data());
  PutVector(out, mi.ff);
  PutPod<std::uint64_t>(out, mi.vl.rows());
  PutPod<std::uint64_t>(out, mi.vl.cols());
  PutVector(out, mi.vl.data());
  PutPod<std::uint64_t>(out, mi.cooc.rows());
  PutVector(out, mi.cooc.data());
  WriteFileAtomic(path, out);
}

std::optional<MiMatrices> ReadMiCache(const std::filesystem::path& path,
                                      const std::string& digest,
                                      const MiOptions& options) {
  if (!std::filesystem::exists(path)) return std::nullopt;
  const std::string data = ReadFile(path);
  try {
    if (data.size() < sizeof(kCacheMagic) ||
        std::memcmp(data.data(), kCacheMagic, sizeof(kCacheMagic)) != 0) {
      throw Error(ErrorCode::kCorruptCacheEntry, "bad magic");
    }
    const std::string rest = data.substr(sizeof(kCacheMagic));
    Reader r(rest);
    if (r.String() != CacheKey(digest, options)) return std::nullopt;
    MiMatrices mi;
    const auto fl_rows = r.Pod<std::uint64_t>();
    const auto fl_cols = r.Pod<std::uint64_t>();
    mi.fl = Matrix(fl_rows, fl_cols);
    mi.fl.data() = r.Vector<double>();
    mi.ff = r.Vector<FeaturePairMi>();
    const auto vl_rows = r.Pod<std::uint64_t>();
    const auto vl_cols = r.Pod<std::uint64_t>();
    mi.vl = Matrix(vl_rows, vl_cols);
    mi.vl.data() = r.Vector<double>();
    const auto c = r.Pod<std::uint64_t>();
    mi.cooc = BasicMatrix<std::int64_t>(c, c);
    mi.cooc.data() = r.Vector<std::int64_t>();
    if (!r.AtEnd() || mi.fl.data().size() != fl_rows * fl_cols ||
        mi.vl.data().size() != vl_rows * vl_cols || mi.cooc.data().size() != c * c) {
      throw Error(ErrorCode::kCorruptCacheEntry, "inconsistent sizes");
    }
    return mi;
  } catch (const Error& e) {
    Warn("ignoring MI cache " + path.string() + ": " + e.what());
    return std::nullopt;
  }
}

}  // namespace mvfs
