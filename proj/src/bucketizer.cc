/*
 * Copyright 2026 The commgbdt Authors.
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

#include "commgbdt/bucketizer.h"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace commgbdt {

QuantileSummary::QuantileSummary(std::vector<SummaryItem> items, double step, double offset,
                                 double source_weight)
    : items_(std::move(items)), step_(step), offset_(offset), source_weight_(source_weight) {
  if (!(step_ > 0.0) || !std::isfinite(step_)) throw InvalidArgument("step must be positive");
  if (!(offset_ > 0.0 && offset_ < step_)) {
    throw InvalidArgument("offset must lie in the open interval (0, step)");
  }
  cumulative_units_.reserve(items_.size());
  std::int64_t units = 0;
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (i > 0 && !(items_[i - 1].value < items_[i].value)) {
      throw InvalidArgument("summary values must be strictly increasing");
    }
    const double ratio = items_[i].adjusted_weight / step_;
    const auto k = std::llround(ratio);
    if (k < 1 || std::abs(ratio - static_cast<double>(k)) > 1e-9 * static_cast<double>(k)) {
      throw InvalidArgument("adjusted weight of item " + std::to_string(i) +
                            " is not a positive multiple of step");
    }
    units += k;
    cumulative_units_.push_back(units);
  }
}

QuantileSummary BuildWithOffset(const WeightedDataset& data, double step, double offset) {
  if (!(step > 0.0) || !std::isfinite(step)) throw InvalidArgument("step must be positive");
  if (data.empty()) throw InvalidArgument("cannot summarize an empty dataset");
  if (!(offset > 0.0 && offset < step)) {
    throw InvalidArgument("offset must lie in the open interval (0, step)");
  }
  // Grid points b + j*t, j >= 0, inside [r, r+) number
  // ceil((r+ - b)/t) - ceil((r - b)/t). Adjacent items share the boundary
  // value, so the counts telescope exactly.
  auto first_grid_index = [&](double rank) { return std::ceil((rank - offset) / step); };
  std::vector<SummaryItem> items;
  double lower = first_grid_index(0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double upper = first_grid_index(data.rank_through(i));
    const double caught = upper - lower;
    if (caught > 0.0) items.push_back({data.items()[i].value, caught * step});
    lower = upper;
  }
  return QuantileSummary(std::move(items), step, offset, data.total_weight());
}

QuantileSummary Build(const WeightedDataset& data, double step, RandomSource& rng) {
  if (!(step > 0.0) || !std::isfinite(step)) throw InvalidArgument("step must be positive");
  double offset = 0.0;
  // step * u can round up to step itself; redraw in that case.
  do {
    offset = step * rng.UniformOpen();
  } while (!(offset > 0.0 && offset < step));
  return BuildWithOffset(data, step, offset);
}

double EstimateRank(const QuantileSummary& summary, double v) {
  const auto items = summary.items();
  const auto it = std::lower_bound(items.begin(), items.end(), v,
                                   [](const SummaryItem& a, double x) { return a.value < x; });
  const auto below = static_cast<std::size_t>(it - items.begin());
  if (below == 0) return 0.0;
  return static_cast<double>(summary.cumulative_units(below - 1)) * summary.step();
}

double QueryQuantile(const QuantileSummary& summary, double phi) {
  if (summary.empty()) throw InvalidArgument("quantile of an empty summary");
  if (!(phi >= 0.0 && phi <= 1.0)) throw InvalidArgument("phi must lie in [0, 1]");
  const double target = phi * static_cast<double>(summary.total_units());
  for (std::size_t i = 0; i < summary.size(); ++i) {
    if (static_cast<double>(summary.cumulative_units(i)) >= target) {
      return summary.items()[i].value;
    }
  }
  return summary.items().back().value;
}

WeightedDataset AsWeightedDataset(const QuantileSummary& summary) {
  std::vector<WeightedItem> items;
  items.reserve(summary.size());
  for (const auto& it : summary.items()) items.push_back({it.value, it.adjusted_weight});
  return Coalesce(items);
}

void WriteSummary(const QuantileSummary& summary, const std::string& csv_path,
                  const std::string& json_path) {
  {
    std::ofstream csv(csv_path);
    if (!csv) throw InvalidArgument("cannot write " + csv_path);
    csv << "value,adjusted_weight\n";
    for (const auto& it : summary.items()) {
      csv << FormatDouble(it.value) << ',' << FormatDouble(it.adjusted_weight) << '\n';
    }
  }
  nlohmann::json meta = {{"step", summary.step()},
                         {"offset", summary.offset()},
                         {"source_weight", summary.source_weight()}};
  std::ofstream js(json_path);
  if (!js) throw InvalidArgument("cannot write " + json_path);
  js << meta.dump(2) << '\n';
}

QuantileSummary ReadSummary(const std::string& csv_path, const std::string& json_path) {
  std::ifstream js(json_path);
  if (!js) throw InvalidArgument("cannot open " + json_path);
  nlohmann::json meta;
  try {
    js >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(json_path + ": " + e.what());
  }
  for (const char* key : {"step", "offset", "source_weight"}) {
    if (!meta.contains(key) || !meta[key].is_number()) {
      throw InvalidArgument(json_path + ": missing numeric field '" + key + "'");
    }
  }

  std::vector<SummaryItem> items;
  for (const auto& [v, w] : ReadTwoColumnCsv(csv_path, "value,adjusted_weight")) {
    items.push_back({v, w});
  }
  return QuantileSummary(std::move(items), meta["step"].get<double>(),
                         meta["offset"].get<double>(), meta["source_weight"].get<double>());
}

}  // namespace commgbdt
