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

#include "commgbdt/boost_demo.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "commgbdt/split_sampling.h"

namespace commgbdt {

double StumpEnsemble::Predict(double feature) const {
  double y = 0.0;
  for (const auto& s : stumps) y += feature < s.split_value ? s.left_prediction : s.right_prediction;
  return y;
}

QuantileProtocol ParseProtocol(const std::string& name) {
  if (name == "flat") return QuantileProtocol::kFlat;
  if (name == "balanced") return QuantileProtocol::kBalanced;
  if (name == "tree") return QuantileProtocol::kTree;
  throw InvalidArgument("unknown protocol '" + name + "' (flat, balanced, tree)");
}

std::string ProtocolName(QuantileProtocol p) {
  switch (p) {
    case QuantileProtocol::kFlat:
      return "flat";
    case QuantileProtocol::kBalanced:
      return "balanced";
    case QuantileProtocol::kTree:
      return "tree";
  }
  return "flat";
}

TreeTopology LeafTopology(const Partitioning& parts) {
  const int k = parts.k();
  std::vector<TopologyNodeSpec> specs;
  for (int j = 0; j < k; ++j) {
    TopologyNodeSpec s;
    s.id = j + 1;
    s.data = parts.shards()[j];
    specs.push_back(std::move(s));
  }
  // Pair up the current frontier until one node remains. Internal ids
  // continue after the shards.
  std::vector<std::size_t> frontier(specs.size());
  std::iota(frontier.begin(), frontier.end(), std::size_t{0});
  int next_id = k + 1;
  while (frontier.size() > 1) {
    std::vector<std::size_t> next;
    for (std::size_t i = 0; i + 1 < frontier.size(); i += 2) {
      TopologyNodeSpec parent;
      parent.id = next_id++;
      specs[frontier[i]].parent_id = parent.id;
      specs[frontier[i + 1]].parent_id = parent.id;
      specs.push_back(std::move(parent));
      next.push_back(specs.size() - 1);
    }
    if (frontier.size() % 2 == 1) next.push_back(frontier.back());
    frontier = std::move(next);
  }
  return TreeTopology(std::move(specs));
}

std::vector<double> ProposeCandidates(const Partitioning& parts, int m, double eps,
                                      double delta, QuantileProtocol protocol,
                                      const RandomSource& rng) {
  if (m < 1) throw InvalidArgument("need at least one candidate");
  ProtocolResult result;
  switch (protocol) {
    case QuantileProtocol::kFlat:
      result = FlatProtocol(parts, eps, delta, rng);
      break;
    case QuantileProtocol::kBalanced:
      result = FlatProtocolBalanced(parts, eps, delta, rng);
      break;
    case QuantileProtocol::kTree:
      result = TreeProtocol(LeafTopology(parts), eps, delta, rng);
      break;
  }
  if (result.summary.empty()) throw InvalidArgument("protocol produced an empty summary");
  std::vector<double> out;
  out.reserve(m);
  for (int i = 1; i <= m; ++i) {
    out.push_back(WeightedQuantile(result.summary, (i - 0.5) / m));
  }
  return out;
}

namespace {

// Thresholds strictly between distinct feature values, so no instance sits
// on a threshold. A candidate maps to the midpoint with the next larger
// feature value, or the next smaller one when it is the maximum.
std::vector<double> CandidateThresholds(const std::vector<double>& candidates,
                                        const std::vector<double>& distinct) {
  std::vector<double> out;
  for (double c : candidates) {
    auto it = std::upper_bound(distinct.begin(), distinct.end(), c);
    if (it != distinct.end()) {
      const double lo = it == distinct.begin() ? c : *(it - 1);
      out.push_back(lo + (*it - lo) / 2.0);
    } else {
      out.push_back(distinct[distinct.size() - 2] +
                    (distinct.back() - distinct[distinct.size() - 2]) / 2.0);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

Stump FitRound(std::span<const RegressionSample> data, std::span<const double> predictions,
               const BoostConfig& config, const RandomSource& rng) {
  const std::size_t n = data.size();
  if (n < 2) throw InvalidArgument("need at least two samples");
  if (predictions.size() != n) throw InvalidArgument("one prediction per sample required");
  if (!(config.learning_rate > 0.0 && config.learning_rate <= 1.0)) {
    throw InvalidArgument("learning rate must lie in (0, 1]");
  }

  // Canonical order makes the round independent of input order.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (data[a].feature != data[b].feature) return data[a].feature < data[b].feature;
    if (data[a].label != data[b].label) return data[a].label < data[b].label;
    return predictions[a] < predictions[b];
  });
  std::vector<GradientInstance> instances;
  instances.reserve(n);
  for (std::size_t i : order) {
    instances.push_back({data[i].feature, data[i].label - predictions[i]});
  }
  const GradientSet gradients(std::move(instances));

  std::vector<double> distinct;
  for (const auto& inst : gradients.instances()) {
    if (distinct.empty() || distinct.back() != inst.value) distinct.push_back(inst.value);
  }
  if (distinct.size() < 2) throw InvalidArgument("all features are equal; no valid split");

  // Candidate proposal over round-robin shards.
  const int k = static_cast<int>(std::min<std::size_t>(std::max(config.shards, 1), n));
  std::vector<std::vector<WeightedItem>> raw(k);
  const bool by_gradient = config.weighting == CandidateWeighting::kGradientMagnitude &&
                           gradients.total_abs_gradient() > 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = by_gradient ? std::abs(gradients[i].gradient) : 1.0;
    if (w > 0.0) raw[i % k].push_back({gradients[i].value, w});
  }
  std::vector<WeightedDataset> shards;
  for (const auto& r : raw) {
    if (!r.empty()) shards.push_back(Coalesce(r));
  }
  const auto candidates = ProposeCandidates(Partitioning(std::move(shards)), config.candidates,
                                            config.eps, config.delta, config.protocol,
                                            DeriveStream(rng, 1));
  const auto thresholds = CandidateThresholds(candidates, distinct);

  const double s = config.sample_budget > 0.0 ? config.sample_budget : static_cast<double>(n);
  std::vector<SampledInstance> sample;
  if (gradients.total_abs_gradient() > 0.0) {
    auto stream = DeriveStream(rng, 2);
    sample = WeightedSample(gradients, s, stream);
  }

  double best_gain = -1.0;
  double best_threshold = thresholds.front();
  for (double v : thresholds) {
    const auto counts = CountSides(gradients, v);
    const double gain =
        VarianceGainWs(sample, counts.left, counts.right, static_cast<std::int64_t>(n), v).gain;
    if (gain > best_gain) {
      best_gain = gain;
      best_threshold = v;
    }
  }

  CompensatedSum left, right;
  std::size_t left_n = 0;
  for (const auto& inst : gradients.instances()) {
    if (inst.value < best_threshold) {
      left.Add(inst.gradient);
      ++left_n;
    } else {
      right.Add(inst.gradient);
    }
  }
  Stump stump;
  stump.split_value = best_threshold;
  stump.left_prediction = config.learning_rate * left.Value() / static_cast<double>(left_n);
  stump.right_prediction =
      config.learning_rate * right.Value() / static_cast<double>(n - left_n);
  return stump;
}

double MeanSquaredError(std::span<const RegressionSample> data, const StumpEnsemble& model) {
  if (data.empty()) return 0.0;
  CompensatedSum sum;
  for (const auto& d : data) {
    const double r = d.label - model.Predict(d.feature);
    sum.Add(r * r);
  }
  return sum.Value() / static_cast<double>(data.size());
}

BoostRun Fit(std::span<const RegressionSample> data, const BoostConfig& config, int rounds,
             const RandomSource& rng) {
  if (rounds < 0) throw InvalidArgument("rounds must be non-negative");
  BoostRun run;
  run.ensemble.learning_rate = config.learning_rate;
  std::vector<double> predictions(data.size(), 0.0);
  run.mse.push_back(MeanSquaredError(data, run.ensemble));
  for (int r = 0; r < rounds; ++r) {
    const Stump stump =
        FitRound(data, predictions, config, DeriveStream(rng, static_cast<std::uint64_t>(r)));
    run.ensemble.stumps.push_back(stump);
    for (std::size_t i = 0; i < data.size(); ++i) {
      predictions[i] +=
          data[i].feature < stump.split_value ? stump.left_prediction : stump.right_prediction;
    }
    run.mse.push_back(MeanSquaredError(data, run.ensemble));
  }
  return run;
}

std::vector<RegressionSample> PiecewiseConstantData(std::size_t n, double noise,
                                                    RandomSource& rng) {
  std::vector<RegressionSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.Uniform();
    double y = 0.0;
    if (x < 0.25) {
      y = 0.0;
    } else if (x < 0.55) {
      y = 2.0;
    } else if (x < 0.8) {
      y = -1.0;
    } else {
      y = 1.0;
    }
    out.push_back({x, y + noise * rng.Normal()});
  }
  return out;
}

std::vector<RegressionSample> ReadRegressionCsv(const std::string& path) {
  std::vector<RegressionSample> out;
  for (const auto& [x, y] : ReadTwoColumnCsv(path, "feature,label")) out.push_back({x, y});
  return out;
}

void WriteRegressionCsv(const std::string& path, std::span<const RegressionSample> data) {
  std::vector<std::pair<double, double>> rows;
  for (const auto& d : data) rows.emplace_back(d.feature, d.label);
  WriteTwoColumnCsv(path, "feature,label", rows);
}

}  // namespace commgbdt
