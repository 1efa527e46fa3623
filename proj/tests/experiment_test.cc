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

#include <cmath>
#include <filesystem>
#include <fstream>

#include "commgbdt/experiment.h"
#include "doctest.h"

using namespace commgbdt;

namespace {

double TotalWeight(const std::vector<WeightedItem>& items) {
  double w = 0.0;
  for (const auto& it : items) w += it.weight;
  return w;
}

}  // namespace

TEST_CASE("equal split of 1000 items into 4 shards") {
  GeneratorSpec spec;
  RandomSource rng(1, 0);
  const auto items = GenerateWeighted(spec, rng);
  REQUIRE(items.size() == 1000);
  const auto shards = PartitionItems(items, 4, Balance::kEqual, rng);
  for (const auto& s : shards) CHECK(s.size() == 250);
}

TEST_CASE("single-heavy puts 95% of the weight on shard 0") {
  GeneratorSpec spec;
  spec.distribution = Distribution::kLognormal;
  RandomSource rng(2, 0);
  const auto items = GenerateWeighted(spec, rng);
  const auto shards = PartitionItems(items, 10, Balance::kSingleHeavy, rng);
  double total = 0.0;
  for (const auto& s : shards) total += TotalWeight(s);
  CHECK(total == doctest::Approx(TotalWeight(items)).epsilon(1e-12));
  CHECK(TotalWeight(shards[0]) / total >= 0.95 - 1e-12);
}

TEST_CASE("dirichlet-skewed partitions are reproducible and cover every item") {
  GeneratorSpec spec;
  spec.n = 500;
  RandomSource a(3, 0), b(3, 0);
  const auto items_a = GenerateWeighted(spec, a);
  const auto items_b = GenerateWeighted(spec, b);
  const auto pa = PartitionItems(items_a, 8, Balance::kDirichletSkewed, a);
  const auto pb = PartitionItems(items_b, 8, Balance::kDirichletSkewed, b);
  CHECK(pa == pb);
  std::size_t rows = 0;
  for (const auto& s : pa) {
    CHECK(!s.empty());
    rows += s.size();
  }
  CHECK(rows == 500);
  CHECK_THROWS_AS(PartitionItems(std::vector<WeightedItem>{{1, 1}}, 2, Balance::kEqual, a),
                  InvalidArgument);
}

TEST_CASE("generators") {
  for (auto d : {Distribution::kUniform, Distribution::kLognormal, Distribution::kPareto,
                 Distribution::kTwoCluster}) {
    CHECK(ParseDistribution(DistributionName(d)) == d);
    GeneratorSpec spec;
    spec.distribution = d;
    spec.n = 200;
    RandomSource rng(4, 0);
    const auto g = GenerateGradients(spec, rng);
    CHECK(g.count() == 200);
    for (const auto& i : g.instances()) {
      CHECK(i.value >= 0.0);
      CHECK(i.value < 1.0);
      CHECK(std::isfinite(i.gradient));
    }
  }
  GeneratorSpec pareto;
  pareto.distribution = Distribution::kPareto;
  RandomSource rng(5, 0);
  for (int i = 0; i < 1000; ++i) CHECK(DrawFromDistribution(pareto, rng) >= 1.0);
  for (auto b : {Balance::kEqual, Balance::kDirichletSkewed, Balance::kSingleHeavy}) {
    CHECK(ParseBalance(BalanceName(b)) == b);
  }
  CHECK_THROWS_AS(ParseDistribution("cauchy"), InvalidArgument);
  CHECK_THROWS_AS(ParseBalance("skewed"), InvalidArgument);
}

TEST_CASE("query grid") {
  const auto d = Coalesce(std::vector<WeightedItem>{{1, 1}, {2, 1}, {3, 1}, {4, 1}});
  CHECK(QueryGrid(d, 3) == std::vector<double>{1, 2, 3, 4});
  CHECK(QueryGrid(d, 1) == std::vector<double>{1, 2, 4});
  const auto grid = QueryGrid(d, 64);
  CHECK(grid.front() == 1);
  CHECK(grid.back() == 4);
}

TEST_CASE("split grid") {
  std::vector<GradientInstance> inst;
  for (int i = 0; i < 10; ++i) inst.push_back({static_cast<double>(i), 1.0});
  const auto grid = SplitGrid(GradientSet(inst), 4);
  CHECK(grid == std::vector<double>{1.5, 3.5, 5.5, 7.5});
}

TEST_CASE("aggregate uses nearest-rank p99") {
  std::vector<TrialRow> rows(200);
  for (int i = 0; i < 200; ++i) {
    rows[i].trial = i;
    rows[i].total_records = i + 1;
    rows[i].exceeded = i % 10 == 0;
  }
  const auto a = Aggregate(rows);
  CHECK(a.failure_fraction == 0.1);
  CHECK(a.mean_comm == 100.5);
  CHECK(a.p99_comm == 198.0);
}

TEST_CASE("quantile trial reports are reproducible and self-consistent") {
  QuantileTrialConfig config;
  config.trials = 20;
  config.seed = 9;
  config.k = 4;
  config.generator.n = 300;
  const auto a = RunQuantileTrials(config);
  const auto b = RunQuantileTrials(config);
  REQUIRE(a.rows.size() == 20);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].error == b.rows[i].error);
    CHECK(a.rows[i].total_records == b.rows[i].total_records);
    CHECK(a.rows[i].trial == static_cast<std::int64_t>(i));
  }
  CHECK(a.details == b.details);
  const auto& run = a.details["runs"][0];
  for (const char* key : {"protocol", "eps", "delta", "k", "total_records", "preround_records",
                          "per_node_sent", "max_rank_error", "query_grid_size", "seed"}) {
    CHECK(run.contains(key));
  }

  const auto dir = std::filesystem::temp_directory_path() / "commgbdt_report_test";
  std::filesystem::create_directories(dir);
  const auto csv = (dir / "r.csv").string();
  const auto json = (dir / "r.json").string();
  WriteReport(a, csv, json);
  const auto back = ReadReport(csv, json);
  CHECK(back.rows.size() == a.rows.size());
  CHECK(back.aggregate.mean_comm == a.aggregate.mean_comm);
  CHECK(back.rows[3].error == a.rows[3].error);

  // A tampered aggregate is caught on load.
  auto doc = nlohmann::json::parse(std::ifstream(json));
  doc["aggregate"]["mean_comm"] = 1e9;
  std::ofstream(json) << doc.dump();
  CHECK_THROWS_AS(ReadReport(csv, json), InvalidArgument);
  std::filesystem::remove_all(dir);
}

TEST_CASE("k=1 flat trials at a generous eps never fail") {
  QuantileTrialConfig config;
  config.k = 1;
  config.eps = 0.5;
  config.trials = 50;
  config.seed = 10;
  config.generator.n = 200;
  CHECK(RunQuantileTrials(config).aggregate.failure_fraction == 0.0);
}

TEST_CASE("gain trials at s >= n with equal magnitudes have zero weighted-sampling error") {
  std::vector<GradientInstance> inst;
  for (int i = 0; i < 50; ++i) inst.push_back({i / 50.0, i % 3 ? 1.0 : -1.0});
  GainTrialConfig config;
  config.trials = 20;
  config.seed = 11;
  config.sample_budget = 50;
  config.split_grid = 8;
  const auto r = RunGainTrials(config, GradientSet(inst));
  for (const auto& row : r.rows) CHECK(row.error == 0.0);
  CHECK(r.details["splits"].size() == 8);
}
