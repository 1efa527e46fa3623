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

#include "commgbdt/comm_protocols.h"
#include "commgbdt/experiment.h"
#include "doctest.h"

using namespace commgbdt;

namespace {

WeightedDataset UnitRange(int lo, int hi, double w = 1.0) {
  std::vector<WeightedItem> items;
  for (int v = lo; v < hi; ++v) items.push_back({static_cast<double>(v), w});
  return Coalesce(items);
}

Partitioning EqualShards(int k, int per_shard, double w) {
  std::vector<WeightedDataset> shards;
  for (int j = 0; j < k; ++j) shards.push_back(UnitRange(j * per_shard, (j + 1) * per_shard, w));
  return Partitioning(shards);
}

WeightedDataset UnionOf(const Partitioning& p) { return Union(p.shards()); }

// Shard 0 carries `heavy` of the total 100 over k shards.
Partitioning Adversarial(int k, double heavy) {
  std::vector<WeightedDataset> shards;
  shards.push_back(UnitRange(0, 1000, heavy / 1000.0));
  const double light = (100.0 - heavy) / (k - 1);
  for (int j = 1; j < k; ++j) shards.push_back(UnitRange(1000 * j, 1000 * j + 10, light / 10.0));
  return Partitioning(shards);
}

}  // namespace

TEST_CASE("allreduce on the fifteen-node example tree") {
  const std::vector<double> heap{3, 1, 5, 7, 2, 4, 3, 5, 6, 7, 8, 2, 1, 9, 4};
  const auto tree = TreeTopology::Complete(4);
  std::map<int, double> values;
  for (int i = 0; i < 15; ++i) values[i] = heap[i];
  CommLedger ledger;
  const auto r = AllreduceSum(tree, values, &ledger);
  CHECK(r.total == 67.0);
  for (const auto& [id, v] : r.node_values) CHECK(v == 67.0);
  CHECK(r.node_values.size() == 15);
  CHECK(r.partial_to_parent.at(3) == 18.0);
  CHECK(r.partial_to_parent.at(4) == 17.0);
  CHECK(r.partial_to_parent.at(1) == 36.0);
  CHECK(r.partial_to_parent.at(5) == 7.0);
  CHECK(r.partial_to_parent.at(6) == 16.0);
  CHECK(r.partial_to_parent.at(2) == 28.0);
  CHECK(ledger.total_records(Phase::kPreround) == 28);
  CHECK(ledger.total_records(Phase::kSummary) == 0);
}

TEST_CASE("allreduce trivial trees") {
  CommLedger ledger;
  const auto one = TreeTopology::Complete(1);
  CHECK(AllreduceSum(one, {{0, 42.0}}, &ledger).total == 42.0);
  CHECK(ledger.total_records() == 0);

  const auto seven = TreeTopology::Complete(3);
  std::map<int, double> ones;
  for (int i = 0; i < 7; ++i) ones[i] = 1.0;
  CHECK(AllreduceSum(seven, ones).total == 7.0);
  CHECK_THROWS_AS(AllreduceSum(seven, {{0, 1.0}}), InvalidArgument);
}

TEST_CASE("flat step sizes") {
  CHECK(FlatStep(0.1, 0.2, 4, 100) == doctest::Approx(3.295051144911304).epsilon(1e-12));
  CHECK(FlatStep(0.1, 0.2, 4, 100) == doctest::Approx(10.0 / std::sqrt(4 * std::log(10.0))));
  CHECK(FlatStep(0.05, 0.1, 1, 100) == doctest::Approx(5.0 / std::sqrt(std::log(20.0))));
  CHECK_THROWS_AS(FlatStep(0, 0.1, 4, 100), InvalidArgument);
  CHECK_THROWS_AS(FlatStep(0.1, 1.0, 4, 100), InvalidArgument);
  CHECK_THROWS_AS(FlatStep(0.1, 0.1, 0, 100), InvalidArgument);
}

TEST_CASE("balanced step branches") {
  CHECK(BalancedStep(0.1, 0.2, 4, 100, 10) == FlatStep(0.1, 0.2, 4, 100));
  CHECK(BalancedStep(0.1, 0.2, 4, 100, 60) ==
        doctest::Approx(0.1 * 60 / std::sqrt(std::log(10.0))).epsilon(1e-12));
  CHECK(BalancedStep(0.1, 0.2, 4, 100, 50) ==
        doctest::Approx(0.1 * 50 / std::sqrt(std::log(10.0))).epsilon(1e-12));
}

TEST_CASE("tree base step") {
  const double l = std::log(20.0);
  CHECK(TreeBaseStep(0.05, 0.1, 8, 100) == doctest::Approx(5.0 / std::sqrt(2 * 8 * 3 * l)));
  CHECK(TreeBaseStep(0.05, 0.1, 1, 100) == doctest::Approx(5.0 / std::sqrt(l)));
}

TEST_CASE("flat protocol with one shard is a lone bucketizer") {
  const Partitioning p({UnitRange(0, 50, 2.0)});
  const RandomSource rng(5, 0);
  const auto r = FlatProtocol(p, 0.05, 0.1, rng);
  const double t = 0.05 * 100 / std::sqrt(std::log(20.0));
  CHECK(r.base_step == doctest::Approx(t));
  auto node_rng = DeriveStream(rng, 1);
  const auto lone = Build(p.shards()[0], r.base_step, node_rng);
  CHECK(r.nodes.at(1).summary == lone);
  CHECK(r.ledger.total_records(Phase::kSummary) == static_cast<std::int64_t>(lone.size()));
  CHECK(r.ledger.total_records(Phase::kPreround) == 1);
}

TEST_CASE("flat protocol accounting and error") {
  const auto p = EqualShards(16, 20, 0.5);  // w_D = 160
  const auto all = UnionOf(p);
  const auto grid = QueryGrid(all, 64);
  for (int trial = 0; trial < 50; ++trial) {
    const auto r = FlatProtocol(p, 0.05, 0.1, RandomSource(6, trial));
    const double t = r.base_step;
    std::int64_t sent = 0;
    for (const auto& [id, n] : r.nodes) {
      CHECK(static_cast<double>(n.summary.size()) <= std::ceil(n.input.total_weight() / t));
      CHECK(r.ledger.per_node_sent(Phase::kSummary).at(id) ==
            static_cast<std::int64_t>(n.summary.size()));
      sent += static_cast<std::int64_t>(n.summary.size());
    }
    CHECK(r.ledger.total_records(Phase::kSummary) == sent);
    CHECK(r.ledger.total_records(Phase::kPreround) == 16);
    CHECK(sent <= static_cast<std::int64_t>(std::ceil(160.0 / t)) + 16);
    // Deterministic worst case: every node off by at most t.
    CHECK(MaxRankError(all, grid, [&](double v) { return EstimateRank(r, v); }) <= 16 * t);
  }
  const Partitioning with_empty({UnitRange(0, 3), WeightedDataset()});
  CHECK_THROWS_AS(FlatProtocol(with_empty, 0.05, 0.1, RandomSource(6, 0)), InvalidArgument);
  CHECK_THROWS_AS(FlatProtocolBalanced(with_empty, 0.05, 0.1, RandomSource(6, 0)),
                  InvalidArgument);
}

TEST_CASE("balanced protocol sum of squared steps") {
  for (const double heavy : {10.0, 50.0, 90.0, 99.0}) {
    const auto p = Adversarial(10, heavy);
    const auto r = FlatProtocolBalanced(p, 0.05, 0.1, RandomSource(7, 0));
    double sum_sq = 0.0;
    for (const auto& [id, n] : r.nodes) {
      CHECK(n.step == BalancedStep(0.05, 0.1, 10, p.global_weight(), n.input.total_weight()));
      sum_sq += n.step * n.step;
    }
    CHECK(sum_sq * std::log(20.0) <= 2 * std::pow(0.05 * p.global_weight(), 2) * (1 + 1e-12));
  }
}

TEST_CASE("balanced protocol on a 99 of 100 split") {
  const auto p = Adversarial(10, 99.0);
  const double cap = std::ceil(std::sqrt(std::log(20.0)) / 0.05) + 1;
  for (int trial = 0; trial < 50; ++trial) {
    const auto bal = FlatProtocolBalanced(p, 0.05, 0.1, RandomSource(8, trial));
    const auto flat = FlatProtocol(p, 0.05, 0.1, RandomSource(8, trial));
    const auto bal_max = bal.ledger.max_node_sent(Phase::kSummary);
    const auto flat_max = flat.ledger.max_node_sent(Phase::kSummary);
    CHECK(static_cast<double>(bal_max) <= cap);
    CHECK(flat_max >= 3 * bal_max);
    // The uniform step puts nearly every record on the heavy node.
    CHECK(flat.ledger.per_node_sent(Phase::kSummary).at(1) >=
          0.9 * flat.ledger.total_records(Phase::kSummary));
  }
}

TEST_CASE("tree protocol steps by level") {
  std::vector<TopologyNodeSpec> specs(3);
  specs[0].id = 0;
  specs[0].data = UnitRange(0, 10);
  specs[1].id = 1;
  specs[1].parent_id = 0;
  specs[1].data = UnitRange(10, 20);
  specs[2].id = 2;
  specs[2].parent_id = 0;
  specs[2].data = UnitRange(20, 30);
  const TreeTopology tree(specs);
  const auto r = TreeProtocol(tree, 0.1, 0.1, RandomSource(9, 0));
  const double t = TreeBaseStep(0.1, 0.1, 3, 30);
  CHECK(r.base_step == doctest::Approx(t));
  CHECK(r.nodes.at(1).step == doctest::Approx(t));
  CHECK(r.nodes.at(2).step == doctest::Approx(t));
  CHECK(r.nodes.at(0).step == doctest::Approx(std::sqrt(2.0) * t));
  CHECK(r.ledger.total_records(Phase::kPreround) == 4);
  CHECK(r.ledger.total_records(Phase::kSummary) ==
        static_cast<std::int64_t>(r.nodes.at(1).summary.size() + r.nodes.at(2).summary.size()));
  REQUIRE(r.root_summary.has_value());
  CHECK(r.summary == AsWeightedDataset(*r.root_summary));
}

TEST_CASE("tree protocol with a single node is a lone bucketizer") {
  std::vector<TopologyNodeSpec> specs(1);
  specs[0].data = UnitRange(0, 40, 0.5);
  const TreeTopology tree(specs);
  const RandomSource rng(10, 0);
  const auto r = TreeProtocol(tree, 0.05, 0.1, rng);
  CHECK(r.base_step == doctest::Approx(0.05 * 20 / std::sqrt(std::log(20.0))));
  CHECK(r.ledger.total_records(Phase::kSummary) == 0);
  CHECK(r.ledger.total_records(Phase::kPreround) == 0);
}

TEST_CASE("tree protocol per-node error stays within the node step") {
  std::vector<WeightedDataset> data;
  for (int i = 0; i < 15; ++i) data.push_back(UnitRange(30 * i, 30 * i + 30, 0.2 + 0.1 * (i % 3)));
  const auto tree = TreeTopology::Complete(4, data);
  for (int trial = 0; trial < 30; ++trial) {
    const auto r = TreeProtocol(tree, 0.05, 0.1, RandomSource(11, trial));
    for (const auto& [id, n] : r.nodes) {
      if (n.input.empty()) continue;
      const auto grid = QueryGrid(n.input, 64);
      const double err =
          MaxRankError(n.input, grid, [&](double v) { return EstimateRank(n.summary, v); });
      CHECK(err <= n.step * (1 + 1e-12));
      CHECK(n.step == doctest::Approx(std::pow(std::sqrt(2.0), n.level) * r.base_step));
    }
  }
}

TEST_CASE("leaf-data-only trees and empty internal nodes") {
  const auto p = EqualShards(5, 10, 1.0);
  const auto tree = LeafTopology(p);
  CHECK(tree.data_node_count() == 5);
  CHECK(tree.global_weight() == 50.0);
  const auto r = TreeProtocol(tree, 0.05, 0.1, RandomSource(12, 0));
  CHECK(r.base_step == doctest::Approx(TreeBaseStep(0.05, 0.1, 5, 50)));
  const auto grid = QueryGrid(UnionOf(p), 32);
  CHECK(MaxRankError(UnionOf(p), grid, [&](double v) { return EstimateRank(r, v); }) <= 50.0);
}

TEST_CASE("topology validation") {
  auto node = [](int id, std::optional<int> parent) {
    TopologyNodeSpec s;
    s.id = id;
    s.parent_id = parent;
    return s;
  };
  CHECK_THROWS_AS(TreeTopology({node(0, {}), node(0, 0)}), InvalidArgument);
  CHECK_THROWS_AS(TreeTopology({node(0, {}), node(1, 0)}), InvalidArgument);
  CHECK_THROWS_AS(TreeTopology({node(0, {}), node(1, 7), node(2, 0)}), InvalidArgument);
  CHECK_THROWS_AS(TreeTopology({node(0, {}), node(1, {})}), InvalidArgument);
  CHECK_THROWS_AS(TreeTopology({node(0, 1), node(1, 0)}), InvalidArgument);
  CHECK_THROWS_AS(TreeTopology({}), InvalidArgument);

  // Non-complete: heights follow the longest downward path.
  const TreeTopology t({node(0, {}), node(1, 0), node(2, 0), node(3, 1), node(4, 1)});
  CHECK(t.node(0).level == 2);
  CHECK(t.node(1).level == 1);
  CHECK(t.node(2).level == 0);
  CHECK(t.height() == 2);
  CHECK(t.bottom_up().back() == 0);
}

TEST_CASE("topology files") {
  const auto dir = std::filesystem::temp_directory_path() / "commgbdt_topology_test";
  std::filesystem::create_directories(dir / "shards");
  const std::vector<WeightedItem> a{{1, 1}, {2, 1}};
  const std::vector<WeightedItem> b{{3, 2}};
  WriteWeightedCsv((dir / "shards" / "a.csv").string(), a);
  WriteWeightedCsv((dir / "shards" / "b.csv").string(), b);
  {
    std::ofstream out(dir / "topology.json");
    out << R"({"nodes": [
      {"id": 5, "parent_id": null, "shard_file": null},
      {"id": 6, "parent_id": 5, "shard_file": "shards/a.csv"},
      {"id": 7, "parent_id": 5, "shard_file": "shards/b.csv"}]})";
  }
  const auto t = LoadTopology((dir / "topology.json").string());
  CHECK(t.root() == 5);
  CHECK(t.data_node_count() == 2);
  CHECK(t.global_weight() == 4.0);
  CHECK(t.node(6).data.size() == 2);
  {
    std::ofstream out(dir / "bad.json");
    out << R"([{"id": 1, "parent_id": null}, {"id": 2, "parent_id": 1}])";
  }
  CHECK_THROWS_AS(LoadTopology((dir / "bad.json").string()), InvalidArgument);
  std::filesystem::remove_all(dir);
}

TEST_CASE("protocols agree on the same data within their error bounds") {
  const auto p = EqualShards(7, 30, 1.0);
  const auto all = UnionOf(p);
  const auto tree = TopologyForShards(p);
  const auto grid = QueryGrid(all, 64);
  int within = 0;
  constexpr int kTrials = 40;
  for (int trial = 0; trial < kTrials; ++trial) {
    const RandomSource rng(13, trial);
    const double bound = 0.05 * p.global_weight();
    for (const auto& r : {FlatProtocol(p, 0.05, 0.1, rng), FlatProtocolBalanced(p, 0.05, 0.1, rng),
                          TreeProtocol(tree, 0.05, 0.1, rng)}) {
      within += MaxRankError(all, grid, [&](double v) { return EstimateRank(r, v); }) <= bound;
    }
  }
  CHECK(within >= static_cast<int>(0.9 * 3 * kTrials));
}
