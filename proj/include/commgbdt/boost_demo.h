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

// Single-feature gradient boosting with stumps under squared loss. Split
// candidates come from a distributed quantile protocol; candidates are
// scored with the gradient-weighted sampling estimator.

#ifndef COMMGBDT_BOOST_DEMO_H_
#define COMMGBDT_BOOST_DEMO_H_

#include <span>
#include <string>
#include <vector>

#include "commgbdt/comm_protocols.h"
#include "commgbdt/core_model.h"

namespace commgbdt {

struct RegressionSample {
  double feature = 0.0;
  double label = 0.0;
};

// Instances with feature < split_value go left.
struct Stump {
  double split_value = 0.0;
  double left_prediction = 0.0;
  double right_prediction = 0.0;
};

struct StumpEnsemble {
  std::vector<Stump> stumps;
  double learning_rate = 1.0;

  double Predict(double feature) const;
};

enum class QuantileProtocol { kFlat, kBalanced, kTree };
enum class CandidateWeighting { kUniform, kGradientMagnitude };

QuantileProtocol ParseProtocol(const std::string& name);
std::string ProtocolName(QuantileProtocol p);

struct BoostConfig {
  double learning_rate = 1.0;
  double sample_budget = 0.0;  // s; <= 0 means n
  int candidates = 16;         // m
  double eps = 0.05;
  double delta = 0.1;
  QuantileProtocol protocol = QuantileProtocol::kFlat;
  int shards = 4;
  CandidateWeighting weighting = CandidateWeighting::kUniform;
};

// Leaf-data-only binary tree over the shards: shards are leaves, internal
// nodes hold nothing. Shard j becomes node j+1.
TreeTopology LeafTopology(const Partitioning& parts);

// m values at the (i - 0.5)/m quantiles of the protocol's final summary.
std::vector<double> ProposeCandidates(const Partitioning& parts, int m, double eps,
                                      double delta, QuantileProtocol protocol,
                                      const RandomSource& rng);

// One boosting round. The stump's leaf values are learning_rate times the
// exact mean residual on each side.
Stump FitRound(std::span<const RegressionSample> data, std::span<const double> predictions,
               const BoostConfig& config, const RandomSource& rng);

struct BoostRun {
  StumpEnsemble ensemble;
  std::vector<double> mse;  // mse[0] before any round, mse[r] after round r
};

BoostRun Fit(std::span<const RegressionSample> data, const BoostConfig& config, int rounds,
             const RandomSource& rng);

double MeanSquaredError(std::span<const RegressionSample> data, const StumpEnsemble& model);

// Features uniform on [0, 1); labels 0, 2, -1, 1 on [0, .25), [.25, .55),
// [.55, .8), [.8, 1) plus N(0, noise^2).
std::vector<RegressionSample> PiecewiseConstantData(std::size_t n, double noise,
                                                    RandomSource& rng);

std::vector<RegressionSample> ReadRegressionCsv(const std::string& path);
void WriteRegressionCsv(const std::string& path, std::span<const RegressionSample> data);

}  // namespace commgbdt

#endif  // COMMGBDT_BOOST_DEMO_H_
