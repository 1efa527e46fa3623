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

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "commgbdt/boost_demo.h"
#include "commgbdt/bucketizer.h"
#include "commgbdt/comm_protocols.h"
#include "commgbdt/experiment.h"
#include "commgbdt/split_sampling.h"

namespace py = pybind11;
using namespace commgbdt;

namespace {

using Pairs = std::vector<std::pair<double, double>>;

WeightedDataset ToDataset(const Pairs& pairs) {
  std::vector<WeightedItem> items;
  items.reserve(pairs.size());
  for (const auto& [v, w] : pairs) items.push_back({v, w});
  return Coalesce(items);
}

Pairs ToPairs(const WeightedDataset& d) {
  Pairs out;
  for (const auto& it : d.items()) out.emplace_back(it.value, it.weight);
  return out;
}

GradientSet ToGradients(const Pairs& pairs) {
  std::vector<GradientInstance> inst;
  inst.reserve(pairs.size());
  for (const auto& [x, g] : pairs) inst.push_back({x, g});
  return GradientSet(std::move(inst));
}

Partitioning ToPartitioning(const std::vector<Pairs>& shards) {
  std::vector<WeightedDataset> parts;
  for (const auto& s : shards) parts.push_back(ToDataset(s));
  return Partitioning(std::move(parts));
}

// JSON crosses the boundary as text; the Python side parses it.
std::string ReportJson(const ExperimentReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"trial", row.trial},
                    {"split_index", row.split_index},
                    {"split_value", std::isnan(row.split_value) ? nlohmann::json(nullptr)
                                                                : nlohmann::json(row.split_value)},
                    {"error", row.error},
                    {"baseline_error", std::isnan(row.baseline_error)
                                           ? nlohmann::json(nullptr)
                                           : nlohmann::json(row.baseline_error)},
                    {"bound", row.bound},
                    {"exceeded", row.exceeded},
                    {"total_records", row.total_records},
                    {"max_node_records", row.max_node_records}});
  }
  return nlohmann::json{{"kind", r.kind},
                        {"rows", rows},
                        {"aggregate",
                         {{"failure_fraction", r.aggregate.failure_fraction},
                          {"mean_comm", r.aggregate.mean_comm},
                          {"p99_comm", r.aggregate.p99_comm}}},
                        {"details", r.details}}
      .dump();
}

GeneratorSpec MakeSpec(const std::string& distribution, std::int64_t n) {
  GeneratorSpec spec;
  spec.distribution = ParseDistribution(distribution);
  spec.n = n;
  return spec;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Quantile summaries, distributed protocols and split-gain sampling";
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);

  py::class_<RandomSource>(m, "RandomSource")
      .def(py::init<std::uint64_t, std::uint64_t>(), py::arg("seed"), py::arg("stream") = 0)
      .def_property_readonly("seed", &RandomSource::master_seed)
      .def_property_readonly("stream", &RandomSource::stream_id)
      .def("uniform", &RandomSource::Uniform)
      .def("normal", &RandomSource::Normal)
      .def("next_u64", &RandomSource::NextU64)
      .def("derive", [](const RandomSource& r, std::uint64_t child) { return DeriveStream(r, child); });

  m.def("coalesce", [](const Pairs& items) { return ToPairs(ToDataset(items)); },
        "Sort by value and merge equal values; returns [(value, weight)].");
  m.def(
      "rank_exact",
      [](const Pairs& items, double v) {
        const auto r = RankExact(ToDataset(items), v);
        return std::make_pair(r.below, r.through);
      },
      "(weight below v, weight at or below v)");

  py::class_<QuantileSummary>(m, "QuantileSummary")
      .def_property_readonly("items",
                             [](const QuantileSummary& s) {
                               Pairs out;
                               for (const auto& it : s.items()) out.emplace_back(it.value, it.adjusted_weight);
                               return out;
                             })
      .def_property_readonly("step", &QuantileSummary::step)
      .def_property_readonly("offset", &QuantileSummary::offset)
      .def_property_readonly("source_weight", &QuantileSummary::source_weight)
      .def("__len__", &QuantileSummary::size)
      .def("estimate_rank", [](const QuantileSummary& s, double v) { return EstimateRank(s, v); })
      .def("query_quantile", [](const QuantileSummary& s, double phi) { return QueryQuantile(s, phi); })
      .def("save", &WriteSummary, py::arg("csv_path"), py::arg("json_path"))
      .def_static("load", &ReadSummary, py::arg("csv_path"), py::arg("json_path"))
      .def("__eq__", [](const QuantileSummary& a, const QuantileSummary& b) { return a == b; });

  m.def(
      "build_summary",
      [](const Pairs& items, double step, RandomSource& rng) { return Build(ToDataset(items), step, rng); },
      py::arg("items"), py::arg("step"), py::arg("rng"));
  m.def(
      "build_summary_with_offset",
      [](const Pairs& items, double step, double offset) {
        return BuildWithOffset(ToDataset(items), step, offset);
      },
      py::arg("items"), py::arg("step"), py::arg("offset"));

  m.def(
      "variance_gain_exact",
      [](const Pairs& data, double v) { return VarianceGainExact(ToGradients(data), v).gain; },
      py::arg("data"), py::arg("v"));
  m.def(
      "variance_gain_ws",
      [](const Pairs& data, double v, double s, RandomSource& rng) {
        const auto g = ToGradients(data);
        const auto sample = WeightedSample(g, s, rng);
        const auto c = CountSides(g, v);
        return VarianceGainWs(sample, c.left, c.right, static_cast<std::int64_t>(g.count()), v).gain;
      },
      py::arg("data"), py::arg("v"), py::arg("s"), py::arg("rng"),
      "Draws one weighted sample and returns the estimated gain at v.");
  m.def(
      "variance_gain_goss",
      [](const Pairs& data, double v, double a, double b, RandomSource& rng) {
        const auto g = ToGradients(data);
        const auto sample = DrawGossSample(g, a, b, rng);
        const auto c = CountSides(g, v);
        return VarianceGainGoss(sample, static_cast<std::int64_t>(g.count()), v, c.left, c.right).gain;
      },
      py::arg("data"), py::arg("v"), py::arg("a"), py::arg("b"), py::arg("rng"));
  m.def(
      "weighted_sample",
      [](const Pairs& data, double s, RandomSource& rng) {
        std::vector<std::tuple<std::size_t, double>> out;
        for (const auto& x : WeightedSample(ToGradients(data), s, rng)) {
          out.emplace_back(x.index, x.inclusion_probability);
        }
        return out;
      },
      py::arg("data"), py::arg("s"), py::arg("rng"), "[(index, inclusion probability)]");
  m.def("ws_error_bound", &WsErrorBound, py::arg("total_abs_gradient"), py::arg("n"), py::arg("s"),
        py::arg("delta"));
  m.def(
      "goss_error_bound",
      [](const Pairs& data, double a, double b, double v, double delta) {
        return GossErrorBound(ToGradients(data), a, b, v, delta);
      },
      py::arg("data"), py::arg("a"), py::arg("b"), py::arg("v"), py::arg("delta"));

  m.def("flat_step", &FlatStep, py::arg("eps"), py::arg("delta"), py::arg("k"), py::arg("global_weight"));
  m.def("tree_base_step", &TreeBaseStep, py::arg("eps"), py::arg("delta"), py::arg("k"),
        py::arg("global_weight"));

  py::class_<ProtocolResult>(m, "ProtocolResult")
      .def_property_readonly("summary", [](const ProtocolResult& r) { return ToPairs(r.summary); })
      .def_property_readonly("base_step", [](const ProtocolResult& r) { return r.base_step; })
      .def_property_readonly("global_weight", [](const ProtocolResult& r) { return r.global_weight; })
      .def_property_readonly("total_records",
                             [](const ProtocolResult& r) { return r.ledger.total_records(Phase::kSummary); })
      .def_property_readonly("preround_records",
                             [](const ProtocolResult& r) { return r.ledger.total_records(Phase::kPreround); })
      .def_property_readonly("per_node_sent",
                             [](const ProtocolResult& r) { return r.ledger.per_node_sent(Phase::kSummary); })
      .def_property_readonly("node_steps",
                             [](const ProtocolResult& r) {
                               std::map<int, double> out;
                               for (const auto& [id, n] : r.nodes) out[id] = n.step;
                               return out;
                             })
      .def("estimate_rank", [](const ProtocolResult& r, double v) { return EstimateRank(r, v); });

  m.def(
      "flat_protocol",
      [](const std::vector<Pairs>& shards, double eps, double delta, const RandomSource& rng, bool balanced) {
        const auto parts = ToPartitioning(shards);
        return balanced ? FlatProtocolBalanced(parts, eps, delta, rng) : FlatProtocol(parts, eps, delta, rng);
      },
      py::arg("shards"), py::arg("eps"), py::arg("delta"), py::arg("rng"), py::arg("balanced") = false);
  m.def(
      "tree_protocol",
      [](const std::vector<Pairs>& heap_data, double eps, double delta, const RandomSource& rng) {
        int levels = 0;
        while ((std::size_t{1} << levels) - 1 < heap_data.size()) ++levels;
        std::vector<WeightedDataset> data;
        for (const auto& d : heap_data) data.push_back(d.empty() ? WeightedDataset() : ToDataset(d));
        return TreeProtocol(TreeTopology::Complete(levels, std::move(data)), eps, delta, rng);
      },
      py::arg("heap_data"), py::arg("eps"), py::arg("delta"), py::arg("rng"),
      "Complete tree in heap order; heap_data has 2^L - 1 entries, empty lists allowed.");
  m.def(
      "tree_protocol_file",
      [](const std::string& path, double eps, double delta, const RandomSource& rng) {
        return TreeProtocol(LoadTopology(path), eps, delta, rng);
      },
      py::arg("topology_path"), py::arg("eps"), py::arg("delta"), py::arg("rng"));
  m.def(
      "allreduce_sum",
      [](const std::vector<double>& heap_values) {
        int levels = 0;
        while ((std::size_t{1} << levels) - 1 < heap_values.size()) ++levels;
        std::map<int, double> values;
        for (std::size_t i = 0; i < heap_values.size(); ++i) values[static_cast<int>(i)] = heap_values[i];
        const auto r = AllreduceSum(TreeTopology::Complete(levels), values);
        return std::make_pair(r.total, r.partial_to_parent);
      },
      py::arg("heap_values"), "Complete tree in heap order; returns (total, {node: partial sent up}).");

  m.def(
      "fit_boost",
      [](const Pairs& data, int rounds, const RandomSource& rng, double learning_rate,
         double sample_budget, int candidates, const std::string& protocol) {
        std::vector<RegressionSample> samples;
        for (const auto& [x, y] : data) samples.push_back({x, y});
        BoostConfig c;
        c.learning_rate = learning_rate;
        c.sample_budget = sample_budget;
        c.candidates = candidates;
        c.protocol = ParseProtocol(protocol);
        const auto run = Fit(samples, c, rounds, rng);
        std::vector<std::tuple<double, double, double>> stumps;
        for (const auto& s : run.ensemble.stumps) {
          stumps.emplace_back(s.split_value, s.left_prediction, s.right_prediction);
        }
        return std::make_pair(stumps, run.mse);
      },
      py::arg("data"), py::arg("rounds"), py::arg("rng"), py::arg("learning_rate") = 1.0,
      py::arg("sample_budget") = 0.0, py::arg("candidates") = 16, py::arg("protocol") = "flat",
      "Returns ([(split, left, right)], per-round MSE).");

  m.def(
      "run_quantile_trials",
      [](const std::string& protocol, double eps, double delta, std::int64_t trials, std::uint64_t seed,
         int k, const std::string& balance, const std::string& distribution, std::int64_t n, int grid) {
        QuantileTrialConfig c;
        c.protocol = ParseProtocol(protocol);
        c.eps = eps;
        c.delta = delta;
        c.trials = trials;
        c.seed = seed;
        c.k = k;
        c.balance = ParseBalance(balance);
        c.generator = MakeSpec(distribution, n);
        c.grid_size = grid;
        return ReportJson(RunQuantileTrials(c));
      },
      py::arg("protocol"), py::arg("eps"), py::arg("delta"), py::arg("trials"), py::arg("seed"),
      py::arg("k") = 16, py::arg("balance") = "equal", py::arg("distribution") = "uniform",
      py::arg("n") = 1000, py::arg("grid") = 64);
  m.def(
      "run_gain_trials",
      [](double a, double b, double delta, std::int64_t trials, std::uint64_t seed,
         const std::string& distribution, std::int64_t n, int splits, std::optional<double> sample_budget) {
        GainTrialConfig c;
        c.a = a;
        c.b = b;
        c.delta = delta;
        c.trials = trials;
        c.seed = seed;
        c.generator = MakeSpec(distribution, n);
        c.split_grid = splits;
        c.sample_budget = sample_budget;
        return ReportJson(RunGainTrials(c));
      },
      py::arg("a"), py::arg("b"), py::arg("delta"), py::arg("trials"), py::arg("seed"),
      py::arg("distribution") = "pareto", py::arg("n") = 200, py::arg("splits") = 16,
      py::arg("sample_budget") = py::none());
}
