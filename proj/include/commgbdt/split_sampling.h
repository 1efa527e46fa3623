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

// Split-gain estimation for a single feature.
//
// The variance gain of a threshold v over instances O is
//
//   V(v) = (1/n) * [ (sum_{x<v} g)^2 / |O_L| + (sum_{x>v} g)^2 / |O_R| ]
//
// Instances whose value equals v sit on neither side. Two estimators are
// provided over a small subset of O:
//
//  * Gradient-weighted sampling: each instance enters independently with
//    probability p_i = min(1, s|g_i|/W), W = sum |g_i|, and its gradient is
//    reweighted by 1/p_i (Horvitz-Thompson). Only W must be known globally.
//  * GOSS: the floor(a*n) largest-|g| instances are kept, floor(b*n) more are
//    drawn uniformly from the rest and amplified by (1-a)/b.
//
// Both estimators take the exact side counts |O_L|, |O_R| as inputs.

#ifndef COMMGBDT_SPLIT_SAMPLING_H_
#define COMMGBDT_SPLIT_SAMPLING_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "commgbdt/core_model.h"

namespace commgbdt {

struct SampledInstance {
  std::size_t index = 0;  // position in the source GradientSet
  double value = 0.0;
  double gradient = 0.0;
  double inclusion_probability = 1.0;
};

struct GainEstimate {
  double split_value = 0.0;
  double gain = 0.0;
  std::int64_t left_count = 0;
  std::int64_t right_count = 0;
};

struct SideCounts {
  std::int64_t left = 0;   // value < v
  std::int64_t right = 0;  // value > v
};

SideCounts CountSides(const GradientSet& data, double v);

// Throws InvalidArgument naming the empty side when either side has no
// instances.
GainEstimate VarianceGainExact(const GradientSet& data, double v);

// p_i = min(1, s|g_i|/W). Instances with g_i = 0 have p_i = 0 and never
// appear. Throws when W = 0 or s <= 0.
double InclusionProbability(double abs_gradient, double s, double total_abs_gradient);

// One uniform draw per instance, in index order; output is in index order.
std::vector<SampledInstance> WeightedSample(const GradientSet& data, double s,
                                            RandomSource& rng);

GainEstimate VarianceGainWs(std::span<const SampledInstance> sample, std::int64_t left_count,
                            std::int64_t right_count, std::int64_t n, double v);

// High-probability bound on |V_ws(v) - V(v)| (natural logarithms):
//   4W^2/(ns) * sqrt(log(4/delta)) + 2W^2/(ns^2) * log(4/delta)
double WsErrorBound(double total_abs_gradient, std::int64_t n, double s, double delta);

struct GossSample {
  std::vector<SampledInstance> top_set;      // A, inclusion_probability = 1
  std::vector<SampledInstance> sampled_set;  // B, inclusion_probability = b/(1-a)
  double a_ratio = 0.0;
  double b_ratio = 0.0;
};

// Sizes floor(a*n) and floor(b*n). Equal magnitudes rank by ascending index.
GossSample DrawGossSample(const GradientSet& data, double a, double b, RandomSource& rng);

// Gradients of B are amplified by (1-a)/b; counts are the exact side sizes.
GainEstimate VarianceGainGoss(const GossSample& sample, std::int64_t n, double v,
                              std::int64_t left_count, std::int64_t right_count);

// C^2 log(1/delta) + 2 D(v) C sqrt(log(1/delta)/n), with
// C = (1-a)/sqrt(b) * max_{i not in A} |g_i| and D(v) the larger of the
// two sides' mean |g|.
double GossErrorBound(const GradientSet& data, double a, double b, double v, double delta);

}  // namespace commgbdt

#endif  // COMMGBDT_SPLIT_SAMPLING_H_
