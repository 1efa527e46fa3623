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

// Randomized weighted-quantile summary ("bucketizer").
//
// Lay the items of a sorted dataset end to end on [0, w_D), item i covering
// [r(v_i), r+(v_i)). A grid b, b+t, b+2t, ... with b ~ U(0, t) is dropped on
// top; an item is kept iff at least one grid point lands in its interval,
// and its weight becomes t times the number of grid points it caught. The
// rank of v is then estimated as the kept weight strictly below v, which is
// unbiased and never off by more than t.

#ifndef COMMGBDT_BUCKETIZER_H_
#define COMMGBDT_BUCKETIZER_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "commgbdt/core_model.h"

namespace commgbdt {

struct SummaryItem {
  double value = 0.0;
  double adjusted_weight = 0.0;

  friend bool operator==(const SummaryItem&, const SummaryItem&) = default;
};

class QuantileSummary {
 public:
  QuantileSummary() = default;

  // Validates the invariants: sorted distinct values, every weight a
  // positive multiple of step, 0 < offset < step.
  QuantileSummary(std::vector<SummaryItem> items, double step, double offset,
                  double source_weight);

  std::span<const SummaryItem> items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  double step() const { return step_; }
  double offset() const { return offset_; }
  double source_weight() const { return source_weight_; }
  // Number of grid points caught by items [0, i], i.e. cumulative weight / step.
  std::int64_t cumulative_units(std::size_t i) const { return cumulative_units_[i]; }
  std::int64_t total_units() const {
    return cumulative_units_.empty() ? 0 : cumulative_units_.back();
  }
  double total_adjusted_weight() const { return static_cast<double>(total_units()) * step_; }

  friend bool operator==(const QuantileSummary& a, const QuantileSummary& b) {
    return a.items_ == b.items_ && a.step_ == b.step_ && a.offset_ == b.offset_ &&
           a.source_weight_ == b.source_weight_;
  }

 private:
  std::vector<SummaryItem> items_;
  std::vector<std::int64_t> cumulative_units_;
  double step_ = 1.0;
  double offset_ = 0.5;
  double source_weight_ = 0.0;
};

// Draws b uniformly on (0, t) and builds. Throws on t <= 0 or empty data.
QuantileSummary Build(const WeightedDataset& data, double step, RandomSource& rng);

// Deterministic construction for a given offset, O(|D|).
QuantileSummary BuildWithOffset(const WeightedDataset& data, double step, double offset);

// Sum of adjusted weights of items strictly below v.
double EstimateRank(const QuantileSummary& summary, double v);

// Smallest summary value whose cumulative adjusted weight reaches
// phi * (sum of adjusted weights).
double QueryQuantile(const QuantileSummary& summary, double phi);

WeightedDataset AsWeightedDataset(const QuantileSummary& summary);

// CSV `value,adjusted_weight` plus a JSON sidecar {step, offset,
// source_weight}. Both round-trip bit-exactly.
void WriteSummary(const QuantileSummary& summary, const std::string& csv_path,
                  const std::string& json_path);
QuantileSummary ReadSummary(const std::string& csv_path, const std::string& json_path);

}  // namespace commgbdt

#endif  // COMMGBDT_BUCKETIZER_H_
