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

#include "commgbdt/comm_protocols.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "json.hpp"

namespace commgbdt {

Partitioning::Partitioning(std::vector<WeightedDataset> shards) : shards_(std::move(shards)) {
  if (shards_.empty()) throw InvalidArgument("a partitioning needs at least one shard");
  CompensatedSum w;
  for (const auto& s : shards_) w.Add(s.total_weight());
  global_weight_ = w.Value();
}

TreeTopology::TreeTopology(std::vector<TopologyNodeSpec> specs) {
  if (specs.empty()) throw InvalidArgument("topology has no nodes");
  for (auto& s : specs) {
    Node n;
    n.id = s.id;
    n.parent = s.parent_id;
    n.data = std::move(s.data);
    if (!nodes_.emplace(s.id, std::move(n)).second) {
      throw InvalidArgument("duplicate node id " + std::to_string(s.id));
    }
  }
  std::vector<int> roots;
  for (auto& [id, n] : nodes_) {
    if (!n.parent) {
      roots.push_back(id);
      continue;
    }
    auto it = nodes_.find(*n.parent);
    if (it == nodes_.end() || *n.parent == id) {
      throw InvalidArgument("node " + std::to_string(id) + " has invalid parent " +
                            std::to_string(*n.parent));
    }
    it->second.children.push_back(id);
  }
  if (roots.size() != 1) {
    throw InvalidArgument("topology must have exactly one root, found " +
                          std::to_string(roots.size()));
  }
  root_ = roots.front();
  for (const auto& [id, n] : nodes_) {
    if (n.children.size() != 0 && n.children.size() != 2) {
      throw InvalidArgument("node " + std::to_string(id) + " has " +
                            std::to_string(n.children.size()) + " children; need 0 or 2");
    }
  }

  // Post-order from the root computes heights and detects unreachable
  // nodes (which can only be cycles, given a single root).
  std::vector<int> post;
  std::vector<std::pair<int, bool>> stack{{root_, false}};
  while (!stack.empty()) {
    auto [id, expanded] = stack.back();
    stack.pop_back();
    if (expanded) {
      post.push_back(id);
      continue;
    }
    stack.push_back({id, true});
    for (int c : nodes_.at(id).children) stack.push_back({c, false});
  }
  if (post.size() != nodes_.size()) throw InvalidArgument("topology contains a cycle");
  for (int id : post) {
    auto& n = nodes_.at(id);
    n.level = 0;
    for (int c : n.children) n.level = std::max(n.level, nodes_.at(c).level + 1);
  }
  bottom_up_.reserve(nodes_.size());
  for (const auto& [id, n] : nodes_) bottom_up_.push_back(id);
  std::stable_sort(bottom_up_.begin(), bottom_up_.end(),
                   [&](int a, int b) { return nodes_.at(a).level < nodes_.at(b).level; });
}

TreeTopology TreeTopology::Complete(int levels, std::vector<WeightedDataset> data) {
  if (levels < 1 || levels > 30) throw InvalidArgument("levels must lie in [1, 30]");
  const int count = (1 << levels) - 1;
  if (!data.empty() && static_cast<int>(data.size()) != count) {
    throw InvalidArgument("expected " + std::to_string(count) + " local datasets");
  }
  std::vector<TopologyNodeSpec> specs;
  for (int i = 0; i < count; ++i) {
    TopologyNodeSpec s;
    s.id = i;
    if (i > 0) s.parent_id = (i - 1) / 2;
    if (!data.empty()) s.data = std::move(data[i]);
    specs.push_back(std::move(s));
  }
  return TreeTopology(std::move(specs));
}

const TreeTopology::Node& TreeTopology::node(int id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw InvalidArgument("unknown node " + std::to_string(id));
  return it->second;
}

int TreeTopology::data_node_count() const {
  int k = 0;
  for (const auto& [id, n] : nodes_) k += n.data.empty() ? 0 : 1;
  return k;
}

double TreeTopology::global_weight() const {
  CompensatedSum w;
  for (const auto& [id, n] : nodes_) w.Add(n.data.total_weight());
  return w.Value();
}

TreeTopology LoadTopology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(path + ": " + e.what());
  }
  const nlohmann::json& nodes = doc.is_object() ? doc.value("nodes", nlohmann::json()) : doc;
  if (!nodes.is_array()) throw InvalidArgument(path + ": expected a 'nodes' array");
  const auto base = std::filesystem::path(path).parent_path();
  std::vector<TopologyNodeSpec> specs;
  for (const auto& n : nodes) {
    if (!n.is_object() || !n.contains("id") || !n["id"].is_number_integer()) {
      throw InvalidArgument(path + ": every node needs an integer 'id'");
    }
    TopologyNodeSpec s;
    s.id = n["id"].get<int>();
    if (n.contains("parent_id") && !n["parent_id"].is_null()) {
      if (!n["parent_id"].is_number_integer()) {
        throw InvalidArgument(path + ": parent_id must be an integer or null");
      }
      s.parent_id = n["parent_id"].get<int>();
    }
    if (n.contains("shard_file") && !n["shard_file"].is_null()) {
      auto shard = std::filesystem::path(n["shard_file"].get<std::string>());
      if (shard.is_relative()) shard = base / shard;
      s.data = Coalesce(ReadWeightedCsv(shard.string()));
    }
    specs.push_back(std::move(s));
  }
  return TreeTopology(std::move(specs));
}

AllreduceResult AllreduceSum(const TreeTopology& topology, const std::map<int, double>& values,
                             CommLedger* ledger, Phase phase) {
  std::map<int, double> partial;
  AllreduceResult out;
  for (int id : topology.bottom_up()) {
    const auto& n = topology.node(id);
    auto it = values.find(id);
    if (it == values.end()) throw InvalidArgument("no value for node " + std::to_string(id));
    double sum = it->second;
    for (int c : n.children) sum += partial.at(c);
    partial[id] = sum;
    if (n.parent) {
      out.partial_to_parent[id] = sum;
      if (ledger) ledger->Record(id, *n.parent, 1, phase);
    }
  }
  out.total = partial.at(topology.root());
  for (const auto& [id, n] : topology.nodes()) {
    out.node_values[id] = out.total;
    if (n.parent && ledger) ledger->Record(*n.parent, id, 1, phase);
  }
  return out;
}

std::map<int, std::size_t> ProtocolResult::per_node_summary_size() const {
  std::map<int, std::size_t> sizes;
  for (const auto& [id, n] : nodes) sizes[id] = n.summary.size();
  return sizes;
}

double EstimateRank(const ProtocolResult& result, double v) {
  return RankExact(result.summary, v).below;
}

namespace {

void CheckAccuracy(double eps, double delta) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw InvalidArgument("eps must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("delta must lie in (0, 1)");
}

template <typename StepFn>
ProtocolResult RunFlat(const Partitioning& parts, double eps, double delta,
                       const RandomSource& rng, StepFn step_for_shard) {
  CheckAccuracy(eps, delta);
  for (int j = 0; j < parts.k(); ++j) {
    if (parts.shards()[j].empty()) throw InvalidArgument("shard " + std::to_string(j) + " is empty");
  }
  ProtocolResult result;
  constexpr int kCoordinator = 0;
  // Preround: every node reports its local weight to the coordinator.
  for (int j = 1; j <= parts.k(); ++j) result.ledger.Record(j, kCoordinator, 1, Phase::kPreround);
  result.global_weight = parts.global_weight();
  result.base_step = FlatStep(eps, delta, parts.k(), result.global_weight);

  std::vector<WeightedDataset> received;
  for (int j = 1; j <= parts.k(); ++j) {
    const auto& shard = parts.shards()[j - 1];
    const double step = step_for_shard(shard.total_weight());
    auto stream = DeriveStream(rng, static_cast<std::uint64_t>(j));
    NodeOutcome node{j, 0, step, shard, Build(shard, step, stream)};
    // Counted before the coordinator coalesces equal values.
    result.ledger.Record(j, kCoordinator, static_cast<std::int64_t>(node.summary.size()),
                         Phase::kSummary);
    received.push_back(AsWeightedDataset(node.summary));
    result.nodes.emplace(j, std::move(node));
  }
  result.summary = Union(received);
  return result;
}

}  // namespace

double FlatStep(double eps, double delta, int k, double global_weight) {
  CheckAccuracy(eps, delta);
  if (k < 1) throw InvalidArgument("k must be at least 1");
  return eps * global_weight / std::sqrt(static_cast<double>(k) * std::log(2.0 / delta));
}

double BalancedStep(double eps, double delta, int k, double global_weight, double shard_weight) {
  if (shard_weight < global_weight / std::sqrt(static_cast<double>(k))) {
    return FlatStep(eps, delta, k, global_weight);
  }
  CheckAccuracy(eps, delta);
  return eps * shard_weight / std::sqrt(std::log(2.0 / delta));
}

double TreeBaseStep(double eps, double delta, int k, double global_weight) {
  CheckAccuracy(eps, delta);
  if (k < 1) throw InvalidArgument("k must be at least 1");
  if (k == 1) return FlatStep(eps, delta, 1, global_weight);
  const double kd = static_cast<double>(k);
  return eps * global_weight / std::sqrt(2.0 * kd * std::log2(kd) * std::log(2.0 / delta));
}

ProtocolResult FlatProtocol(const Partitioning& parts, double eps, double delta,
                            const RandomSource& rng) {
  const double step = FlatStep(eps, delta, parts.k(), parts.global_weight());
  return RunFlat(parts, eps, delta, rng, [&](double) { return step; });
}

ProtocolResult FlatProtocolBalanced(const Partitioning& parts, double eps, double delta,
                                    const RandomSource& rng) {
  const double w = parts.global_weight();
  return RunFlat(parts, eps, delta, rng, [&](double shard_weight) {
    return BalancedStep(eps, delta, parts.k(), w, shard_weight);
  });
}

ProtocolResult TreeProtocol(const TreeTopology& topology, double eps, double delta,
                            const RandomSource& rng) {
  CheckAccuracy(eps, delta);
  ProtocolResult result;

  std::map<int, double> local_weights;
  for (const auto& [id, n] : topology.nodes()) local_weights[id] = n.data.total_weight();
  const auto reduced = AllreduceSum(topology, local_weights, &result.ledger, Phase::kPreround);
  result.global_weight = reduced.total;
  if (!(result.global_weight > 0.0)) throw InvalidArgument("topology holds no data");

  const int k = topology.data_node_count();
  result.base_step = TreeBaseStep(eps, delta, k, result.global_weight);

  for (int id : topology.bottom_up()) {
    const auto& n = topology.node(id);
    std::vector<WeightedDataset> inputs;
    inputs.push_back(n.data);
    for (int c : n.children) inputs.push_back(AsWeightedDataset(result.nodes.at(c).summary));
    NodeOutcome node;
    node.node_id = id;
    node.level = n.level;
    node.step = std::pow(std::sqrt(2.0), n.level) * result.base_step;
    node.input = Union(inputs);
    if (node.input.empty()) {
      // Nothing reached this node; it sends an empty summary.
      node.summary = QuantileSummary({}, node.step, 0.5 * node.step, 0.0);
    } else {
      auto stream = DeriveStream(rng, static_cast<std::uint64_t>(id));
      node.summary = Build(node.input, node.step, stream);
    }
    if (n.parent) {
      result.ledger.Record(id, *n.parent, static_cast<std::int64_t>(node.summary.size()),
                           Phase::kSummary);
    }
    result.nodes.emplace(id, std::move(node));
  }
  const auto& root = result.nodes.at(topology.root());
  result.root_summary = root.summary;
  result.summary = AsWeightedDataset(root.summary);
  return result;
}

}  // namespace commgbdt
