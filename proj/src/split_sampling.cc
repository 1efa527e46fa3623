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

#include "commgbdt/split_sampling.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace commgbdt {
namespace {

double GainFromSums(double left_sum, double right_sum, std::int64_t left_count,
                    std::int64_t right_count, std::int64_t n) {
  const double left = left_sum * left_sum / static_cast<double>(left_count);
  const double right = right_sum * right_sum / static_cast<double>(right_count);
  return (left + right) / static_cast<double>(n);
}

void CheckCounts(std::int64_t left_count, std::int64_t right_count, std::int64_t n) {
  if (left_count < 1) throw InvalidArgument("left side of the split is empty");
  if (right_count < 1) throw InvalidArgument("right side of the split is empty");
  if (left_count + right_count > n) {
    throw InvalidArgument("side counts exceed the instance count");
  }
}

// floor(ratio * n), tolerant of representation error in ratio (0.29 * 100).
std::size_t FloorCount(double ratio, std::size_t n) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
}

}  // namespace

SideCounts CountSides(const GradientSet& data, double v) {
  SideCounts c;
  for (const auto& inst : data.instances()) {
    if (inst.value < v) {
      ++c.left;
    } else if (inst.value > v) {
      ++c.right;
    }
  }
  return c;
}

GainEstimate VarianceGainExact(const GradientSet& data, double v) {
  const auto counts = CountSides(data, v);
  const auto n = static_cast<std::int64_t>(data.count());
  CheckCounts(counts.left, counts.right, n);
  CompensatedSum left, right;
  for (const auto& inst : data.instances()) {
    if (inst.value < v) {
      left.Add(inst.gradient);
    } else if (inst.value > v) {
      right.Add(inst.gradient);
    }
  }
  return {v, GainFromSums(left.Value(), right.Value(), counts.left, counts.right, n),
          counts.left, counts.right};
}

double InclusionProbability(double abs_gradient, double s, double total_abs_gradient) {
  if (!(s > 0.0)) throw InvalidArgument("sample budget s must be positive");
  if (!(total_abs_gradient > 0.0)) {
    throw InvalidArgument("total gradient magnitude W is zero; sampling undefined");
  }
  if (s * abs_gradient >= total_abs_gradient) return 1.0;
  return s * abs_gradient / total_abs_gradient;
}

std::vector<SampledInstance> WeightedSample(const GradientSet& data, double s,
                                            RandomSource& rng) {
  const double total = data.total_abs_gradient();
  InclusionProbability(0.0, s, total);  // validates s and W
  std::vector<SampledInstance> sample;
  for (std::size_t i = 0; i < data.count(); ++i) {
    const auto& inst = data[i];
    const double p = InclusionProbability(std::abs(inst.gradient), s, total);
    // Draw even for p in {0, 1} so instance i always consumes draw i.
    const double u = rng.Uniform();
    if (u < p) sample.push_back({i, inst.value, inst.gradient, p});
  }
  return sample;
}

GainEstimate VarianceGainWs(std::span<const SampledInstance> sample, std::int64_t left_count,
                            std::int64_t right_count, std::int64_t n, double v) {
  CheckCounts(left_count, right_count, n);
  CompensatedSum left, right;
  for (const auto& inst : sample) {
    if (!(inst.inclusion_probability > 0.0 && inst.inclusion_probability <= 1.0)) {
      throw InvalidArgument("inclusion probability outside (0, 1]");
    }
    const double weighted = inst.gradient / inst.inclusion_probability;
    if (inst.value < v) {
      left.Add(weighted);
    } else if (inst.value > v) {
      right.Add(weighted);
    }
  }
  return {v, GainFromSums(left.Value(), right.Value(), left_count, right_count, n),
          left_count, right_count};
}

double WsErrorBound(double total_abs_gradient, std::int64_t n, double s, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("delta must lie in (0, 1)");
  if (!(s > 0.0)) throw InvalidArgument("s must be positive");
  if (n < 1) throw InvalidArgument("n must be at least 1");
  if (!(total_abs_gradient >= 0.0)) throw InvalidArgument("W must be non-negative");
  const double w2 = total_abs_gradient * total_abs_gradient;
  const double nd = static_cast<double>(n);
  const double log_term = std::log(4.0 / delta);
  return 4.0 * w2 / (nd * s) * std::sqrt(log_term) + 2.0 * w2 / (nd * s * s) * log_term;
}

namespace {

void CheckGossRatios(double a, double b, std::size_t n) {
  if (!(a > 0.0 && a < 1.0)) throw InvalidArgument("a must lie in (0, 1)");
  if (!(b > 0.0 && b < 1.0)) throw InvalidArgument("b must lie in (0, 1)");
  if (a + b > 1.0 + 1e-12) throw InvalidArgument("a + b must not exceed 1");
  if (FloorCount(a, n) < 1) throw InvalidArgument("floor(a * n) must be at least 1");
}

// Indices ordered by descending |g|, ascending index on ties.
std::vector<std::size_t> MagnitudeOrder(const GradientSet& data) {
  std::vector<std::size_t> order(data.count());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return std::abs(data[x].gradient) > std::abs(data[y].gradient);
  });
  return order;
}

}  // namespace

GossSample DrawGossSample(const GradientSet& data, double a, double b, RandomSource& rng) {
  const std::size_t n = data.count();
  CheckGossRatios(a, b, n);
  const std::size_t top_n = FloorCount(a, n);
  const std::size_t rest_n = std::min(FloorCount(b, n), n - top_n);

  const auto order = MagnitudeOrder(data);
  GossSample out;
  out.a_ratio = a;
  out.b_ratio = b;
  std::vector<std::size_t> top(order.begin(), order.begin() + top_n);
  std::vector<std::size_t> rest(order.begin() + top_n, order.end());
  std::sort(top.begin(), top.end());
  std::sort(rest.begin(), rest.end());

  // Partial Fisher-Yates over the complement, in index order for determinism.
  for (std::size_t i = 0; i < rest_n; ++i) {
    const std::size_t j = i + rng.UniformInt(rest.size() - i);
    std::swap(rest[i], rest[j]);
  }
  rest.resize(rest_n);
  std::sort(rest.begin(), rest.end());

  const double p_rest = b / (1.0 - a);
  for (std::size_t i : top) out.top_set.push_back({i, data[i].value, data[i].gradient, 1.0});
  for (std::size_t i : rest) {
    out.sampled_set.push_back({i, data[i].value, data[i].gradient, std::min(1.0, p_rest)});
  }
  return out;
}

GainEstimate VarianceGainGoss(const GossSample& sample, std::int64_t n, double v,
                              std::int64_t left_count, std::int64_t right_count) {
  // Merge back into index order so the a + b = 1 case sums exactly like
  // VarianceGainExact.
  std::vector<SampledInstance> merged;
  merged.reserve(sample.top_set.size() + sample.sampled_set.size());
  std::merge(sample.top_set.begin(), sample.top_set.end(), sample.sampled_set.begin(),
             sample.sampled_set.end(), std::back_inserter(merged),
             [](const SampledInstance& x, const SampledInstance& y) { return x.index < y.index; });
  return VarianceGainWs(merged, left_count, right_count, n, v);
}

double GossErrorBound(const GradientSet& data, double a, double b, double v, double delta) {
  const std::size_t n = data.count();
  CheckGossRatios(a, b, n);
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("delta must lie in (0, 1)");
  const auto counts = CountSides(data, v);
  CheckCounts(counts.left, counts.right, static_cast<std::int64_t>(n));

  const auto order = MagnitudeOrder(data);
  double max_rest = 0.0;
  for (std::size_t i = FloorCount(a, n); i < n; ++i) {
    max_rest = std::max(max_rest, std::abs(data[order[i]].gradient));
  }
  const double c = (1.0 - a) / std::sqrt(b) * max_rest;

  CompensatedSum left_abs, right_abs;
  for (const auto& inst : data.instances()) {
    if (inst.value < v) {
      left_abs.Add(std::abs(inst.gradient));
    } else if (inst.value > v) {
      right_abs.Add(std::abs(inst.gradient));
    }
  }
  const double d = std::max(left_abs.Value() / static_cast<double>(counts.left),
                            right_abs.Value() / static_cast<double>(counts.right));
  const double log_term = std::log(1.0 / delta);
  return c * c * log_term + 2.0 * d * c * std::sqrt(log_term / static_cast<double>(n));
}

}  // namespace commgbdt
