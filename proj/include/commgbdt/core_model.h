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

#ifndef COMMGBDT_CORE_MODEL_H_
#define COMMGBDT_CORE_MODEL_H_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace commgbdt {

// Raised for domain violations of any public operation (bad parameters,
// malformed inputs). Carries a human readable message only.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Neumaier variant of Kahan summation. Order dependent like any float sum,
// but the error does not grow with the number of terms.
class CompensatedSum {
 public:
  void Add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      compensation_ += (sum_ - t) + x;
    } else {
      compensation_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double Value() const { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

struct WeightedItem {
  double value = 0.0;
  double weight = 0.0;

  friend bool operator==(const WeightedItem&, const WeightedItem&) = default;
};

// Sorted, duplicate-free weighted data. Only constructible through
// Coalesce(), which establishes the invariants. Cumulative ranks are
// precomputed so rank queries are O(log n).
class WeightedDataset {
 public:
  WeightedDataset() = default;

  std::span<const WeightedItem> items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  double total_weight() const { return total_weight_; }

  // r_D(v_i) of the i-th item, i.e. the weight strictly below it.
  double rank_below(std::size_t i) const { return i == 0 ? 0.0 : prefix_[i - 1]; }
  // r_D^+(v_i) of the i-th item.
  double rank_through(std::size_t i) const { return prefix_[i]; }

  friend WeightedDataset Coalesce(std::span<const WeightedItem> raw);

  friend bool operator==(const WeightedDataset& a, const WeightedDataset& b) {
    return a.items_ == b.items_;
  }

 private:
  explicit WeightedDataset(std::vector<WeightedItem> sorted_unique);

  std::vector<WeightedItem> items_;
  std::vector<double> prefix_;
  double total_weight_ = 0.0;
};

// Sorts by value and merges equal values by summing weights. Throws
// InvalidArgument naming the index of the first non-positive or non-finite
// weight.
WeightedDataset Coalesce(std::span<const WeightedItem> raw);

// Union of several datasets, coalesced.
WeightedDataset Union(std::span<const WeightedDataset> parts);

struct Rank {
  double below = 0.0;    // weight of items with value < v
  double through = 0.0;  // weight of items with value <= v
};

Rank RankExact(const WeightedDataset& data, double v);

// Smallest value whose cumulative weight reaches phi * total_weight.
// phi = 0 yields the smallest value. Throws on empty data or phi outside
// [0, 1].
double WeightedQuantile(const WeightedDataset& data, double phi);

struct GradientInstance {
  double value = 0.0;
  double gradient = 0.0;
};

class GradientSet {
 public:
  GradientSet() = default;
  explicit GradientSet(std::vector<GradientInstance> instances);

  std::span<const GradientInstance> instances() const { return instances_; }
  const GradientInstance& operator[](std::size_t i) const { return instances_[i]; }
  std::size_t count() const { return instances_.size(); }
  // W, the total gradient magnitude.
  double total_abs_gradient() const { return total_abs_gradient_; }

 private:
  std::vector<GradientInstance> instances_;
  double total_abs_gradient_ = 0.0;
};

// Counter-based generator: the i-th draw of a stream is a pure function of
// (master_seed, stream_id, i), using the SplitMix64 finalizer as the mixing
// function. Streams for children are obtained with DeriveStream, so results
// never depend on the order in which streams are consumed.
class RandomSource {
 public:
  using result_type = std::uint64_t;

  RandomSource(std::uint64_t master_seed, std::uint64_t stream_id);

  std::uint64_t master_seed() const { return master_seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() { return NextU64(); }

  std::uint64_t NextU64();
  // Uniform on [0, 1) with 53 random bits.
  double Uniform();
  // Uniform on the open interval (0, 1).
  double UniformOpen();
  // Uniform integer in [0, bound). bound must be positive.
  std::uint64_t UniformInt(std::uint64_t bound);
  // Standard normal via Box-Muller. Platform independent, unlike
  // std::normal_distribution.
  double Normal();

 private:
  std::uint64_t master_seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Mixes (stream_id, child_id) through SplitMix64 so sibling and nested
// streams do not collide. Same master seed, fresh counter.
RandomSource DeriveStream(const RandomSource& parent, std::uint64_t child_id);

std::uint64_t SplitMix64(std::uint64_t x);

// One record is one transmitted (value, weight) pair or one scalar.
enum class Phase { kPreround, kSummary };

class CommLedger {
 public:
  struct Edge {
    int sender = 0;
    int receiver = 0;
    Phase phase = Phase::kSummary;
    auto operator<=>(const Edge&) const = default;
  };

  void Record(int sender, int receiver, std::int64_t records, Phase phase);

  const std::map<Edge, std::int64_t>& edges() const { return edges_; }
  std::int64_t total_records() const;
  std::int64_t total_records(Phase phase) const;
  std::map<int, std::int64_t> per_node_sent() const;
  std::map<int, std::int64_t> per_node_sent(Phase phase) const;
  std::int64_t max_node_sent(Phase phase) const;

 private:
  std::map<Edge, std::int64_t> edges_;
};

// Two numeric columns under an exact header line. Errors carry path:line.
std::vector<std::pair<double, double>> ReadTwoColumnCsv(const std::string& path,
                                                        std::string_view header);
void WriteTwoColumnCsv(const std::string& path, std::string_view header,
                       const std::vector<std::pair<double, double>>& rows);

// CSV with header `value,weight`.
std::vector<WeightedItem> ReadWeightedCsv(const std::string& path);
void WriteWeightedCsv(const std::string& path, std::span<const WeightedItem> items);
// CSV with header `value,gradient`.
GradientSet ReadGradientCsv(const std::string& path);
void WriteGradientCsv(const std::string& path, const GradientSet& data);

// Shortest decimal representation that parses back to the same double.
std::string FormatDouble(double x);

}  // namespace commgbdt

#endif  // COMMGBDT_CORE_MODEL_H_
