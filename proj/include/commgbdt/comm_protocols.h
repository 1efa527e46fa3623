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

// Simulated distributed quantile protocols with record-level accounting.
//
// Every run starts by summing the local weights (the "preround"), since each
// node's step size depends on the global weight w_D. Its scalar messages are
// logged under Phase::kPreround; summary items under Phase::kSummary.
//
// Logarithm conventions: log(2/delta) is natural, log k in the tree step is
// base 2.

#ifndef COMMGBDT_COMM_PROTOCOLS_H_
#define COMMGBDT_COMM_PROTOCOLS_H_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "commgbdt/bucketizer.h"
#include "commgbdt/core_model.h"

namespace commgbdt {

// k shards held by nodes 1..k; node 0 is the coordinator.
class Partitioning {
 public:
  explicit Partitioning(std::vector<WeightedDataset> shards);

  const std::vector<WeightedDataset>& shards() const { return shards_; }
  int k() const { return static_cast<int>(shards_.size()); }
  double global_weight() const { return global_weight_; }

 private:
  std::vector<WeightedDataset> shards_;
  double global_weight_ = 0.0;
};

struct TopologyNodeSpec {
  int id = 0;
  std::optional<int> parent_id;
  WeightedDataset data;  // may be empty
};

// Binary tree: every node has 0 or 2 children. Level is node height (0 for
// leaves, 1 + max child level otherwise), so non-complete trees are allowed.
class TreeTopology {
 public:
  struct Node {
    int id = 0;
    std::optional<int> parent;
    std::vector<int> children;
    WeightedDataset data;
    int level = 0;
  };

  // Throws InvalidArgument for duplicate ids, unknown parents, several or no
  // roots, cycles, or nodes with exactly one child.
  explicit TreeTopology(std::vector<TopologyNodeSpec> specs);

  // Complete tree with 2^levels - 1 nodes in heap order: node i has
  // children 2i+1 and 2i+2. data, when non-empty, is given in heap order.
  static TreeTopology Complete(int levels, std::vector<WeightedDataset> data = {});

  int root() const { return root_; }
  const Node& node(int id) const;
  const std::map<int, Node>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  // Nodes sorted by (level, id); children always precede parents.
  const std::vector<int>& bottom_up() const { return bottom_up_; }
  int height() const { return node(root_).level; }
  // Nodes holding non-empty local data.
  int data_node_count() const;
  double global_weight() const;

 private:
  std::map<int, Node> nodes_;
  std::vector<int> bottom_up_;
  int root_ = 0;
};

// Reads {"nodes": [{"id", "parent_id" | null, "shard_file" | null}]} (a bare
// array is also accepted). Shard paths resolve relative to the topology file.
TreeTopology LoadTopology(const std::string& path);

struct AllreduceResult {
  double total = 0.0;
  std::map<int, double> node_values;     // value held by each node after broadcast
  std::map<int, double> partial_to_parent;  // what each non-root node sent upward
};

// Reduce up the tree, broadcast down. One scalar record per edge per phase
// goes to the ledger under the given label.
AllreduceResult AllreduceSum(const TreeTopology& topology, const std::map<int, double>& values,
                             CommLedger* ledger = nullptr, Phase phase = Phase::kPreround);

struct NodeOutcome {
  int node_id = 0;
  int level = 0;
  double step = 0.0;
  WeightedDataset input;    // what the node summarized
  QuantileSummary summary;  // what it sent
};

struct ProtocolResult {
  // The final summary as weighted data: the coalesced union of node
  // summaries for the flat protocols, the root summary for the tree.
  WeightedDataset summary;
  std::optional<QuantileSummary> root_summary;  // tree protocol only
  double global_weight = 0.0;
  double base_step = 0.0;
  CommLedger ledger;
  std::map<int, NodeOutcome> nodes;

  std::map<int, std::size_t> per_node_summary_size() const;
};

// Rank estimate from a protocol's final summary.
double EstimateRank(const ProtocolResult& result, double v);

// eps * w / sqrt(k log(2/delta)).
double FlatStep(double eps, double delta, int k, double global_weight);
// FlatStep for light shards (w_j < w/sqrt(k)); eps * w_j / sqrt(log(2/delta))
// otherwise.
double BalancedStep(double eps, double delta, int k, double global_weight, double shard_weight);
// eps * w / sqrt(2 k log2(k) log(2/delta)); for k = 1, where log2 k = 0, the
// single-node flat step eps * w / sqrt(log(2/delta)).
double TreeBaseStep(double eps, double delta, int k, double global_weight);

ProtocolResult FlatProtocol(const Partitioning& parts, double eps, double delta,
                            const RandomSource& rng);
ProtocolResult FlatProtocolBalanced(const Partitioning& parts, double eps, double delta,
                                    const RandomSource& rng);
// Node j at level h uses step (sqrt 2)^h * t over its local data plus its
// children's summaries. k counts nodes holding data.
ProtocolResult TreeProtocol(const TreeTopology& topology, double eps, double delta,
                            const RandomSource& rng);

}  // namespace commgbdt

#endif  // COMMGBDT_COMM_PROTOCOLS_H_
