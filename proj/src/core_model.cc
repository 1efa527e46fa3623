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

#include "commgbdt/core_model.h"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numbers>
#include <sstream>

namespace commgbdt {

WeightedDataset::WeightedDataset(std::vector<WeightedItem> sorted_unique)
    : items_(std::move(sorted_unique)) {
  prefix_.reserve(items_.size());
  CompensatedSum sum;
  for (const auto& item : items_) {
    sum.Add(item.weight);
    prefix_.push_back(sum.Value());
  }
  total_weight_ = prefix_.empty() ? 0.0 : prefix_.back();
}

WeightedDataset Coalesce(std::span<const WeightedItem> raw) {
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!(raw[i].weight > 0.0) || !std::isfinite(raw[i].weight)) {
      throw InvalidArgument("item " + std::to_string(i) +
                            " has non-positive or non-finite weight " +
                            FormatDouble(raw[i].weight));
    }
    if (!std::isfinite(raw[i].value)) {
      throw InvalidArgument("item " + std::to_string(i) + " has non-finite value");
    }
  }
  std::vector<WeightedItem> sorted(raw.begin(), raw.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const WeightedItem& a, const WeightedItem& b) { return a.value < b.value; });
  std::vector<WeightedItem> merged;
  merged.reserve(sorted.size());
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    CompensatedSum w;
    while (j < sorted.size() && sorted[j].value == sorted[i].value) {
      w.Add(sorted[j].weight);
      ++j;
    }
    merged.push_back({sorted[i].value, w.Value()});
    i = j;
  }
  return WeightedDataset(std::move(merged));
}

WeightedDataset Union(std::span<const WeightedDataset> parts) {
  std::vector<WeightedItem> all;
  for (const auto& p : parts) all.insert(all.end(), p.items().begin(), p.items().end());
  return Coalesce(all);
}

Rank RankExact(const WeightedDataset& data, double v) {
  const auto items = data.items();
  const auto lo = std::lower_bound(items.begin(), items.end(), v,
                                   [](const WeightedItem& a, double x) { return a.value < x; });
  const auto below_count = static_cast<std::size_t>(lo - items.begin());
  Rank r;
  r.below = below_count == 0 ? 0.0 : data.rank_through(below_count - 1);
  r.through = r.below;
  if (lo != items.end() && lo->value == v) r.through = data.rank_through(below_count);
  return r;
}

double WeightedQuantile(const WeightedDataset& data, double phi) {
  if (data.empty()) throw InvalidArgument("quantile of an empty dataset");
  if (!(phi >= 0.0 && phi <= 1.0)) throw InvalidArgument("phi must lie in [0, 1]");
  const double target = phi * data.total_weight();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.rank_through(i) >= target) return data.items()[i].value;
  }
  // Only reachable through rounding in phi * total at phi = 1.
  return data.items().back().value;
}

GradientSet::GradientSet(std::vector<GradientInstance> instances)
    : instances_(std::move(instances)) {
  CompensatedSum w;
  for (std::size_t i = 0; i < instances_.size(); ++i) {
    if (!std::isfinite(instances_[i].value) || !std::isfinite(instances_[i].gradient)) {
      throw InvalidArgument("instance " + std::to_string(i) + " is not finite");
    }
    w.Add(std::abs(instances_[i].gradient));
  }
  total_abs_gradient_ = w.Value();
}

std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RandomSource::RandomSource(std::uint64_t master_seed, std::uint64_t stream_id)
    : master_seed_(master_seed),
      stream_id_(stream_id),
      key_(SplitMix64(SplitMix64(master_seed) ^ SplitMix64(~stream_id))) {}

std::uint64_t RandomSource::NextU64() {
  // Weyl sequence over the counter, finalized; the key selects the stream.
  return SplitMix64(key_ + 0x9e3779b97f4a7c15ULL * counter_++);
}

double RandomSource::Uniform() {
  return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
}

double RandomSource::UniformOpen() {
  double u = 0.0;
  do {
    u = Uniform();
  } while (u == 0.0);
  return u;
}

std::uint64_t RandomSource::UniformInt(std::uint64_t bound) {
  if (bound == 0) throw InvalidArgument("UniformInt bound must be positive");
  // Rejection keeps the result exactly uniform.
  const std::uint64_t limit = max() - max() % bound;
  std::uint64_t x = 0;
  do {
    x = NextU64();
  } while (x >= limit);
  return x % bound;
}

double RandomSource::Normal() {
  const double u1 = UniformOpen();
  const double u2 = Uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

RandomSource DeriveStream(const RandomSource& parent, std::uint64_t child_id) {
  const std::uint64_t id =
      SplitMix64(parent.stream_id() * 0xd1342543de82ef95ULL + SplitMix64(child_id));
  return RandomSource(parent.master_seed(), id);
}

void CommLedger::Record(int sender, int receiver, std::int64_t records, Phase phase) {
  if (records < 0) throw InvalidArgument("negative record count");
  edges_[{sender, receiver, phase}] += records;
}

std::int64_t CommLedger::total_records() const {
  std::int64_t total = 0;
  for (const auto& [edge, n] : edges_) total += n;
  return total;
}

std::int64_t CommLedger::total_records(Phase phase) const {
  std::int64_t total = 0;
  for (const auto& [edge, n] : edges_) {
    if (edge.phase == phase) total += n;
  }
  return total;
}

std::map<int, std::int64_t> CommLedger::per_node_sent() const {
  std::map<int, std::int64_t> sent;
  for (const auto& [edge, n] : edges_) sent[edge.sender] += n;
  return sent;
}

std::map<int, std::int64_t> CommLedger::per_node_sent(Phase phase) const {
  std::map<int, std::int64_t> sent;
  for (const auto& [edge, n] : edges_) {
    if (edge.phase == phase) sent[edge.sender] += n;
  }
  return sent;
}

std::int64_t CommLedger::max_node_sent(Phase phase) const {
  std::int64_t best = 0;
  for (const auto& [node, n] : per_node_sent(phase)) best = std::max(best, n);
  return best;
}

std::string FormatDouble(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

namespace {

double ParseDouble(std::string_view field, const std::string& path, std::size_t line) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) {
    field.remove_suffix(1);
  }
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double x = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), x);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw InvalidArgument(path + ":" + std::to_string(line) + ": cannot parse number '" +
                          std::string(field) + "'");
  }
  return x;
}

}  // namespace

std::vector<std::pair<double, double>> ReadTwoColumnCsv(const std::string& path,
                                                        std::string_view header) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument(path + ": missing header");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) {
    throw InvalidArgument(path + ": expected header '" + std::string(header) + "', got '" +
                          line + "'");
  }
  std::vector<std::pair<double, double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw InvalidArgument(path + ":" + std::to_string(lineno) + ": expected two fields");
    }
    const std::string_view sv(line);
    rows.emplace_back(ParseDouble(sv.substr(0, comma), path, lineno),
                      ParseDouble(sv.substr(comma + 1), path, lineno));
  }
  return rows;
}

void WriteTwoColumnCsv(const std::string& path, std::string_view header,
                       const std::vector<std::pair<double, double>>& rows) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  out << header << '\n';
  for (const auto& [a, b] : rows) out << FormatDouble(a) << ',' << FormatDouble(b) << '\n';
}

std::vector<WeightedItem> ReadWeightedCsv(const std::string& path) {
  std::vector<WeightedItem> items;
  for (const auto& [v, w] : ReadTwoColumnCsv(path, "value,weight")) items.push_back({v, w});
  return items;
}

void WriteWeightedCsv(const std::string& path, std::span<const WeightedItem> items) {
  std::vector<std::pair<double, double>> rows;
  for (const auto& it : items) rows.emplace_back(it.value, it.weight);
  WriteTwoColumnCsv(path, "value,weight", rows);
}

GradientSet ReadGradientCsv(const std::string& path) {
  std::vector<GradientInstance> inst;
  for (const auto& [v, g] : ReadTwoColumnCsv(path, "value,gradient")) inst.push_back({v, g});
  return GradientSet(std::move(inst));
}

void WriteGradientCsv(const std::string& path, const GradientSet& data) {
  std::vector<std::pair<double, double>> rows;
  for (const auto& it : data.instances()) rows.emplace_back(it.value, it.gradient);
  WriteTwoColumnCsv(path, "value,gradient", rows);
}

}  // namespace commgbdt
