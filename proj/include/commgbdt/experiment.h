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

// Data generators, Monte Carlo trial drivers and report I/O shared by the
// command line tool, the acceptance suite and the Python module.

#ifndef COMMGBDT_EXPERIMENT_H_
#define COMMGBDT_EXPERIMENT_H_

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "commgbdt/boost_demo.h"
#include "commgbdt/comm_protocols.h"
#include "commgbdt/core_model.h"
#include "json.hpp"

namespace commgbdt {

enum class Distribution { kUniform, kLognormal, kPareto, kTwoCluster };
enum class Balance { kEqual, kDirichletSkewed, kSingleHeavy };

Distribution ParseDistribution(const std::string& name);
std::string DistributionName(Distribution d);
Balance ParseBalance(const std::string& name);
std::string BalanceName(Balance b);

struct GeneratorSpec {
  Distribution distribution = Distribution::kUniform;
  std::int64_t n = 1000;
  double sigma = 1.0;  // lognormal shape
  double alpha = 1.5;  // Pareto tail index, scale 1
  double weight_min = 0.1;
  double weight_max = 10.0;
};

// One draw from the configured distribution.
double DrawFromDistribution(const GeneratorSpec& spec, RandomSource& rng);

// Values from the distribution, weights uniform on [weight_min, weight_max].
std::vector<WeightedItem> GenerateWeighted(const GeneratorSpec& spec, RandomSource& rng);

// Values uniform on [0, 1); |g| from the distribution with a random sign.
GradientSet GenerateGradients(const GeneratorSpec& spec, RandomSource& rng);

// Splits items into k non-empty shards.
//   equal         random permutation cut into near-equal row counts
//   dirichlet     shard shares ~ Dirichlet(0.5), rows assigned by share
//   single-heavy  rows split as for equal, then weights rescaled so shard 0
//                 holds exactly 95% of the total and the rest share 5%
std::vector<std::vector<WeightedItem>> PartitionItems(std::span<const WeightedItem> items, int k,
                                                      Balance balance, RandomSource& rng);

constexpr double kSingleHeavyShare = 0.95;

// Values at the exact i/(G+1) quantiles, i = 1..G, plus both extremes;
// sorted, duplicates removed.
std::vector<double> QueryGrid(const WeightedDataset& data, int grid_size);

template <typename Estimator>
double MaxRankError(const WeightedDataset& truth, const std::vector<double>& grid,
                    Estimator&& estimate) {
  double worst = 0.0;
  for (double v : grid) {
    const double err = std::abs(estimate(v) - RankExact(truth, v).below);
    if (err > worst) worst = err;
  }
  return worst;
}

struct TrialRow {
  std::int64_t trial = 0;
  std::int64_t split_index = -1;  // gain trials only
  double split_value = std::numeric_limits<double>::quiet_NaN();
  double error = 0.0;  // max rank error, or |V_ws - V|
  double baseline_error = std::numeric_limits<double>::quiet_NaN();  // |V_goss - V|
  double bound = 0.0;
  bool exceeded = false;
  std::int64_t total_records = 0;  // summary records, or |S| for gain trials
  std::int64_t max_node_records = 0;
};

struct ReportAggregate {
  double failure_fraction = 0.0;
  double mean_comm = 0.0;
  double p99_comm = 0.0;
};

struct ExperimentReport {
  std::string kind;
  std::vector<TrialRow> rows;  // sorted by (trial, split_index)
  ReportAggregate aggregate;
  nlohmann::json details;  // command specific extras
};

// Recomputes the aggregate from the rows (nearest-rank p99).
ReportAggregate Aggregate(const std::vector<TrialRow>& rows);

void WriteReport(const ExperimentReport& report, const std::string& csv_path,
                 const std::string& json_path);
// Loads and checks that the aggregate matches the rows; throws otherwise.
ExperimentReport ReadReport(const std::string& csv_path, const std::string& json_path);

struct QuantileTrialConfig {
  QuantileProtocol protocol = QuantileProtocol::kFlat;
  double eps = 0.05;
  double delta = 0.1;
  std::int64_t trials = 100;
  std::uint64_t seed = 0;
  int grid_size = 64;
  GeneratorSpec generator;
  int k = 16;
  Balance balance = Balance::kEqual;
};

// Per-run protocol report: {protocol, eps, delta, k, total_records,
// preround_records, per_node_sent, max_rank_error, query_grid_size, seed}.
// total_records counts summary records only; preround records are separate.
nlohmann::json ProtocolReportJson(const ProtocolResult& result, QuantileProtocol protocol,
                                  double eps, double delta, int k, double max_rank_error,
                                  int grid_size, std::uint64_t seed);

// Runs the protocol `trials` times on one fixed dataset (generated from the
// seed, or given as a partitioning / topology) with per-trial streams.
ExperimentReport RunQuantileTrials(const QuantileTrialConfig& config);
ExperimentReport RunQuantileTrials(const QuantileTrialConfig& config, const Partitioning& parts);
ExperimentReport RunQuantileTrials(const QuantileTrialConfig& config,
                                   const TreeTopology& topology);

// Topology used for tree runs over k generated shards: the complete tree
// with every node holding a shard when k = 2^L - 1, LeafTopology otherwise.
TreeTopology TopologyForShards(const Partitioning& parts);

struct GainTrialConfig {
  GeneratorSpec generator;
  double a = 0.1;
  double b = 0.1;
  double delta = 0.05;
  std::int64_t trials = 1000;
  std::uint64_t seed = 0;
  int split_grid = 16;
  // s defaults to (a + b) n; an explicit budget overrides it for the
  // weighted sampler only.
  std::optional<double> sample_budget;
};

// Split thresholds midway between the sorted values at ranks
// floor(i n/(G+1)), i = 1..G.
std::vector<double> SplitGrid(const GradientSet& data, int grid_size);

ExperimentReport RunGainTrials(const GainTrialConfig& config);
ExperimentReport RunGainTrials(const GainTrialConfig& config, const GradientSet& data);

}  // namespace commgbdt

#endif  // COMMGBDT_EXPERIMENT_H_
