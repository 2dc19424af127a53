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

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "mvfs/error.h"
#include "mvfs/pipeline.h"
#include "mvfs/util.h"

namespace mvfs {

namespace fs = std::filesystem;

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string Fixed(double v, int digits) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

// Ratios keyed to 1e-9 so 0.06 from two files compare equal.
long long RatioKey(double r) { return std::llround(r * 1e9); }

}  // namespace

std::string RenderChart(std::string_view metric, const std::vector<double>& ratios,
                        const std::vector<std::string>& series_names,
                        const std::vector<std::vector<std::optional<double>>>& series) {
  constexpr double kW = 640, kH = 400, kLeft = 70, kRight = 170, kTop = 40, kBottom = 60;
  const double pw = kW - kLeft - kRight;
  const double ph = kH - kTop - kBottom;

  // The axis always spans the standard 2%..20% sweep, widened for other ratios.
  double x_lo = 0.02, x_hi = 0.20;
  for (double r : ratios) {
    x_lo = std::min(x_lo, r);
    x_hi = std::max(x_hi, r);
  }
  double y_lo = 1.0, y_hi = 0.0;
  for (const auto& s : series) {
    for (const auto& v : s) {
      if (!v) continue;
      y_lo = std::min(y_lo, *v);
      y_hi = std::max(y_hi, *v);
    }
  }
  if (y_lo > y_hi) y_lo = 0.0, y_hi = 1.0;
  const double pad = std::max(0.01, (y_hi - y_lo) * 0.1);
  y_lo = std::max(0.0, y_lo - pad);
  y_hi = std::min(1.0, y_hi + pad);
  if (y_hi <= y_lo) y_hi = y_lo + 0.01;

  auto px = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * pw; };
  auto py = [&](double y) { return kTop + (1.0 - (y - y_lo) / (y_hi - y_lo)) * ph; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
         "viewBox=\"0 0 640 400\">\n";
  svg += "<!-- data\nratio";
  for (const auto& n : series_names) svg += "," + n;
  svg += "\n";
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    svg += FormatDouble(ratios[i]);
    for (const auto& s : series) svg += "," + (s[i] ? FormatDouble(*s[i]) : std::string());
    svg += "\n";
  }
  svg += "-->\n";
  svg += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  svg += "<text x=\"" + Fixed(kLeft + pw / 2, 1) +
         "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" +
         std::string(metric) + " vs selection ratio</text>\n";
  svg += "<g stroke=\"black\" stroke-width=\"1\">\n";
  svg += "<line x1=\"" + Fixed(kLeft, 1) + "\" y1=\"" + Fixed(kTop + ph, 1) + "\" x2=\"" +
         Fixed(kLeft + pw, 1) + "\" y2=\"" + Fixed(kTop + ph, 1) + "\"/>\n";
  svg += "<line x1=\"" + Fixed(kLeft, 1) + "\" y1=\"" + Fixed(kTop, 1) + "\" x2=\"" +
         Fixed(kLeft, 1) + "\" y2=\"" + Fixed(kTop + ph, 1) + "\"/>\n";
  svg += "</g>\n<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int step = 0;; ++step) {
    const double x = 0.02 * step;
    if (x > x_hi + 1e-12) break;
    if (x < x_lo - 1e-12) continue;
    svg += "<line x1=\"" + Fixed(px(x), 1) + "\" y1=\"" + Fixed(kTop + ph, 1) + "\" x2=\"" +
           Fixed(px(x), 1) + "\" y2=\"" + Fixed(kTop + ph + 5, 1) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + Fixed(px(x), 1) + "\" y=\"" + Fixed(kTop + ph + 18, 1) +
           "\" text-anchor=\"middle\">" + std::to_string(std::lround(x * 100)) + "%</text>\n";
  }
  for (int i = 0; i <= 5; ++i) {
    const double y = y_lo + (y_hi - y_lo) * i / 5.0;
    svg += "<text x=\"" + Fixed(kLeft - 6, 1) + "\" y=\"" + Fixed(py(y) + 4, 1) +
           "\" text-anchor=\"end\">" + Fixed(y, 3) + "</text>\n";
  }
  svg += "<text x=\"" + Fixed(kLeft + pw / 2, 1) + "\" y=\"" + Fixed(kH - 14, 1) +
         "\" text-anchor=\"middle\">selected features (% of d)</text>\n";
  svg += "</g>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % std::size(kPalette)];
    std::string points;
    for (std::size_t i = 0; i < ratios.size(); ++i) {
      if (!series[s][i]) continue;
      points += (points.empty() ? "" : " ") + Fixed(px(ratios[i]), 2) + "," +
                Fixed(py(*series[s][i]), 2);
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"2\" points=\"" + points + "\"/>\n";
    const double ly = kTop + 14 + 18.0 * static_cast<double>(s);
    svg += "<line x1=\"" + Fixed(kLeft + pw + 12, 1) + "\" y1=\"" + Fixed(ly, 1) + "\" x2=\"" +
           Fixed(kLeft + pw + 32, 1) + "\" y2=\"" + Fixed(ly, 1) + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + Fixed(kLeft + pw + 38, 1) + "\" y=\"" + Fixed(ly + 4, 1) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + series_names[s] + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

std::vector<fs::path> WriteReport(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  if (run_dirs.empty()) throw Error(ErrorCode::kMissingRun, "no run directories given");

  struct Series {
    std::string name;
    std::map<long long, std::array<double, kNumMetrics>> values;
    std::map<long long, std::array<bool, kNumMetrics>> present;
  };
  std::vector<Series> series;
  std::map<long long, double> ratios;

  std::map<std::string, int> method_runs;
  std::vector<std::pair<fs::path, std::vector<AggregateRow>>> loaded;
  for (const auto& dir : run_dirs) {
    const fs::path eval = dir / "eval.csv";
    if (!fs::exists(eval)) {
      throw Error(ErrorCode::kMissingRun, dir.string() + " has no eval.csv");
    }
    auto rows = ParseEvalCsv(ReadFile(eval));
    std::vector<std::string> seen;
    for (const auto& r : rows) {
      if (std::find(seen.begin(), seen.end(), r.method) == seen.end()) {
        seen.push_back(r.method);
        ++method_runs[r.method];
      }
    }
    loaded.emplace_back(dir, std::move(rows));
  }
  for (const auto& [dir, rows] : loaded) {
    for (const auto& r : rows) {
      if (!r.ratio) continue;
      const std::string name = method_runs[r.method] > 1
                                   ? dir.filename().string() + "/" + r.method
                                   : r.method;
      auto it = std::find_if(series.begin(), series.end(),
                             [&](const Series& s) { return s.name == name; });
      if (it == series.end()) {
        series.push_back({name, {}, {}});
        it = series.end() - 1;
      }
      const long long key = RatioKey(*r.ratio);
      ratios[key] = *r.ratio;
      const std::size_t m = static_cast<std::size_t>(r.metric);
      it->values[key][m] = r.mean;
      it->present[key][m] = true;
    }
  }

  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  std::vector<double> ratio_list;
  for (const auto& [key, r] : ratios) ratio_list.push_back(r);
  std::vector<std::string> names;
  for (const auto& s : series) names.push_back(s.name);
  for (std::size_t m = 0; m < kNumMetrics; ++m) {
    const std::string metric = MetricName(static_cast<Metric>(m));
    std::string csv = "ratio";
    for (const auto& n : names) csv += "," + n;
    csv += "\n";
    std::vector<std::vector<std::optional<double>>> columns(series.size());
    for (const auto& [key, r] : ratios) {
      csv += FormatDouble(r);
      for (std::size_t s = 0; s < series.size(); ++s) {
        const auto p = series[s].present.find(key);
        std::optional<double> v;
        if (p != series[s].present.end() && p->second[m]) v = series[s].values.at(key)[m];
        columns[s].push_back(v);
        csv += "," + (v ? FormatDouble(*v) : std::string());
      }
      csv += "\n";
    }
    const fs::path csv_path = out_dir / (metric + ".csv");
    WriteFileAtomic(csv_path, csv);
    written.push_back(csv_path);
    const fs::path svg_path = out_dir / (metric + ".svg");
    WriteFileAtomic(svg_path, RenderChart(metric, ratio_list, names, columns));
    written.push_back(svg_path);
  }
  return written;
}

}  // namespace mvfs
