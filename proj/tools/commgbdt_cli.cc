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

// commgbdt: data generation, protocol and estimator trials, boosting runs.
//
// Exit codes: 0 success, 2 configuration error, 3 --assert violation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "commgbdt/boost_demo.h"
#include "commgbdt/experiment.h"
#include "commgbdt/split_sampling.h"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace commgbdt;

namespace {

constexpr int kConfigError = 2;
constexpr int kAssertFailed = 3;

struct GeneratorFlags {
  std::string distribution = "uniform";
  std::int64_t n = 1000;
  double sigma = 1.0;
  double alpha = 1.5;
  double weight_min = 0.1;
  double weight_max = 10.0;

  GeneratorSpec Spec() const {
    GeneratorSpec s;
    s.distribution = ParseDistribution(distribution);
    s.n = n;
    s.sigma = sigma;
    s.alpha = alpha;
    s.weight_min = weight_min;
    s.weight_max = weight_max;
    return s;
  }
};

void AddGeneratorFlags(CLI::App* cmd, GeneratorFlags& g) {
  cmd->add_option("--distribution", g.distribution,
                  "uniform, lognormal, pareto or two-cluster")
      ->capture_default_str();
  cmd->add_option("--n", g.n, "number of items")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--sigma", g.sigma, "lognormal shape")->capture_default_str();
  cmd->add_option("--alpha", g.alpha, "Pareto tail index")->capture_default_str();
  cmd->add_option("--weight-min", g.weight_min)->capture_default_str();
  cmd->add_option("--weight-max", g.weight_max)->capture_default_str();
}

void WriteJson(const std::string& path, const nlohmann::json& doc) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  out << doc.dump(2) << '\n';
}

std::string ShardName(int j) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "shard_%03d.csv", j);
  return buf;
}

// --- gen -------------------------------------------------------------------

struct GenArgs {
  GeneratorFlags generator;
  std::string kind = "weighted";
  int k = 4;
  std::string balance = "equal";
  double noise = 0.3;
  std::uint64_t seed = 0;
  std::string out = "data";
};

int RunGen(const GenArgs& a) {
  RandomSource rng(a.seed, 0);
  fs::create_directories(a.out);
  const fs::path dir(a.out);
  if (a.kind == "gradients") {
    WriteGradientCsv((dir / "gradients.csv").string(), GenerateGradients(a.generator.Spec(), rng));
    return 0;
  }
  if (a.kind == "regression") {
    WriteRegressionCsv((dir / "train.csv").string(),
                       PiecewiseConstantData(static_cast<std::size_t>(a.generator.n), a.noise, rng));
    return 0;
  }
  if (a.kind != "weighted") throw InvalidArgument("unknown kind '" + a.kind + "'");

  const auto items = GenerateWeighted(a.generator.Spec(), rng);
  WriteWeightedCsv((dir / "full.csv").string(), items);
  const auto raw = PartitionItems(items, a.k, ParseBalance(a.balance), rng);
  std::vector<WeightedDataset> shards;
  for (int j = 0; j < a.k; ++j) {
    WriteWeightedCsv((dir / ShardName(j)).string(), raw[j]);
    shards.push_back(Coalesce(raw[j]));
  }

  // Topology over the shards; nodes holding shard j point at its file.
  const Partitioning parts(shards);
  const auto tree = TopologyForShards(parts);
  nlohmann::json nodes = nlohmann::json::array();
  const bool complete = static_cast<int>(tree.size()) == a.k;
  for (const auto& [id, node] : tree.nodes()) {
    nlohmann::json n = {{"id", id}};
    n["parent_id"] = node.parent ? nlohmann::json(*node.parent) : nlohmann::json(nullptr);
    const int shard = complete ? id : id - 1;
    n["shard_file"] = (complete || id <= a.k) ? nlohmann::json(ShardName(shard)) : nlohmann::json(nullptr);
    nodes.push_back(n);
  }
  WriteJson((dir / "topology.json").string(), {{"nodes", nodes}});

  nlohmann::json weights = nlohmann::json::array();
  nlohmann::json shares = nlohmann::json::array();
  for (const auto& s : shards) {
    weights.push_back(s.total_weight());
    shares.push_back(s.total_weight() / parts.global_weight());
  }
  WriteJson((dir / "manifest.json").string(),
            {{"distribution", a.generator.distribution},
             {"n", a.generator.n},
             {"k", a.k},
             {"balance", a.balance},
             {"seed", a.seed},
             {"shard_weights", weights},
             {"weight_shares", shares}});
  return 0;
}

// --- quantile-trial --------------------------------------------------------

struct QuantileArgs {
  GeneratorFlags generator;
  std::string protocol = "flat";
  double eps = 0.05;
  double delta = 0.1;
  std::int64_t trials = 100;
  std::uint64_t seed = 0;
  int grid = 64;
  int k = 16;
  std::string balance = "equal";
  std::string topology;
  std::string out = "quantile";
  bool assert_bound = false;
};

int RunQuantile(const QuantileArgs& a) {
  QuantileTrialConfig c;
  c.protocol = ParseProtocol(a.protocol);
  c.eps = a.eps;
  c.delta = a.delta;
  c.trials = a.trials;
  c.seed = a.seed;
  c.grid_size = a.grid;
  c.generator = a.generator.Spec();
  c.k = a.k;
  c.balance = ParseBalance(a.balance);

  ExperimentReport report;
  if (!a.topology.empty()) {
    const auto tree = LoadTopology(a.topology);
    if (c.protocol == QuantileProtocol::kTree) {
      report = RunQuantileTrials(c, tree);
    } else {
      std::vector<WeightedDataset> shards;
      for (const auto& [id, node] : tree.nodes()) {
        if (!node.data.empty()) shards.push_back(node.data);
      }
      report = RunQuantileTrials(c, Partitioning(std::move(shards)));
    }
  } else {
    report = RunQuantileTrials(c);
  }
  WriteReport(report, a.out + ".csv", a.out + ".json");
  std::cout << nlohmann::json{{"kind", report.kind},
                              {"failure_fraction", report.aggregate.failure_fraction},
                              {"mean_comm", report.aggregate.mean_comm},
                              {"p99_comm", report.aggregate.p99_comm}}
                   .dump()
            << '\n';
  if (a.assert_bound && report.aggregate.failure_fraction > a.delta) {
    std::cerr << "failure fraction " << report.aggregate.failure_fraction << " exceeds delta "
              << a.delta << '\n';
    return kAssertFailed;
  }
  return 0;
}

// --- gain-trial ------------------------------------------------------------

struct GainArgs {
  GeneratorFlags generator;
  std::string data;
  double a = 0.1;
  double b = 0.1;
  double delta = 0.05;
  std::int64_t trials = 1000;
  std::uint64_t seed = 0;
  int splits = 16;
  double sample_budget = 0.0;
  std::string out = "gain";
  bool assert_bound = false;
};

int RunGain(const GainArgs& a) {
  GainTrialConfig c;
  c.generator = a.generator.Spec();
  c.a = a.a;
  c.b = a.b;
  c.delta = a.delta;
  c.trials = a.trials;
  c.seed = a.seed;
  c.split_grid = a.splits;
  if (a.sample_budget > 0.0) c.sample_budget = a.sample_budget;
  const auto report =
      a.data.empty() ? RunGainTrials(c) : RunGainTrials(c, ReadGradientCsv(a.data));
  WriteReport(report, a.out + ".csv", a.out + ".json");
  const double worst = report.details["max_ws_exceed_fraction"].get<double>();
  std::cout << nlohmann::json{{"kind", report.kind},
                              {"ws_wins", report.details["ws_wins"]},
                              {"splits", report.details["splits"].size()},
                              {"max_ws_exceed_fraction", worst},
                              {"ws_bound", report.details["ws_bound"]}}
                   .dump()
            << '\n';
  if (a.assert_bound && worst > a.delta) {
    std::cerr << "bound exceeded in a fraction " << worst << " of trials at some split\n";
    return kAssertFailed;
  }
  return 0;
}

// --- boost -----------------------------------------------------------------

struct BoostArgs {
  std::string data;
  std::int64_t n = 200;
  double noise = 0.3;
  int rounds = 10;
  double learning_rate = 1.0;
  double sample_budget = 0.0;
  int candidates = 16;
  double eps = 0.05;
  double delta = 0.1;
  std::string protocol = "flat";
  int shards = 4;
  std::string weighting = "uniform";
  std::uint64_t seed = 0;
  std::string out = "boost";
  bool assert_monotone = false;
};

int RunBoost(const BoostArgs& a) {
  std::vector<RegressionSample> data;
  if (!a.data.empty()) {
    data = ReadRegressionCsv(a.data);
  } else {
    RandomSource rng(a.seed, 0);
    data = PiecewiseConstantData(static_cast<std::size_t>(a.n), a.noise, rng);
  }
  BoostConfig c;
  c.learning_rate = a.learning_rate;
  c.sample_budget = a.sample_budget;
  c.candidates = a.candidates;
  c.eps = a.eps;
  c.delta = a.delta;
  c.protocol = ParseProtocol(a.protocol);
  c.shards = a.shards;
  if (a.weighting == "uniform") {
    c.weighting = CandidateWeighting::kUniform;
  } else if (a.weighting == "gradient") {
    c.weighting = CandidateWeighting::kGradientMagnitude;
  } else {
    throw InvalidArgument("unknown weighting '" + a.weighting + "' (uniform, gradient)");
  }
  const auto run = Fit(data, c, a.rounds, RandomSource(a.seed, 1));

  nlohmann::json stumps = nlohmann::json::array();
  for (const auto& s : run.ensemble.stumps) {
    stumps.push_back({{"split_value", s.split_value},
                      {"left_prediction", s.left_prediction},
                      {"right_prediction", s.right_prediction}});
  }
  WriteJson(a.out + "_model.json", stumps);
  {
    std::ofstream csv(a.out + "_mse.csv");
    if (!csv) throw InvalidArgument("cannot write " + a.out + "_mse.csv");
    csv << "round,mse\n";
    for (std::size_t r = 0; r < run.mse.size(); ++r) {
      csv << r << ',' << FormatDouble(run.mse[r]) << '\n';
    }
  }
  std::cout << nlohmann::json{{"rounds", a.rounds}, {"final_mse", run.mse.back()}}.dump() << '\n';
  if (a.assert_monotone) {
    for (std::size_t r = 1; r < run.mse.size(); ++r) {
      if (run.mse[r] > run.mse[r - 1]) {
        std::cerr << "training MSE increased at round " << r << '\n';
        return kAssertFailed;
      }
    }
  }
  return 0;
}

// --- bounds ----------------------------------------------------------------

struct BoundsArgs {
  double total_abs_gradient = 0.0;
  std::int64_t n = 0;
  double s = 0.0;
  double delta = 0.05;
  std::string data;
  double a = 0.1;
  double b = 0.1;
  std::optional<double> split;
};

int RunBounds(const BoundsArgs& a) {
  nlohmann::json out;
  if (!a.data.empty()) {
    const auto g = ReadGradientCsv(a.data);
    const double s = a.s > 0.0 ? a.s : (a.a + a.b) * static_cast<double>(g.count());
    out["total_abs_gradient"] = g.total_abs_gradient();
    out["n"] = g.count();
    out["s"] = s;
    out["ws_error_bound"] =
        WsErrorBound(g.total_abs_gradient(), static_cast<std::int64_t>(g.count()), s, a.delta);
    if (a.split) out["goss_error_bound"] = GossErrorBound(g, a.a, a.b, *a.split, a.delta);
  } else {
    if (a.n <= 0 || a.s <= 0.0) throw InvalidArgument("bounds needs --data, or --W, --n and --s");
    out["ws_error_bound"] = WsErrorBound(a.total_abs_gradient, a.n, a.s, a.delta);
  }
  out["delta"] = a.delta;
  std::cout << out.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Communication-efficient quantile summaries and split-gain sampling"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "generate datasets and shard files");
  AddGeneratorFlags(gen_cmd, gen.generator);
  gen_cmd->add_option("--kind", gen.kind, "weighted, gradients or regression")->capture_default_str();
  gen_cmd->add_option("--k", gen.k, "number of shards")->capture_default_str()->check(CLI::PositiveNumber);
  gen_cmd->add_option("--balance", gen.balance, "equal, dirichlet-skewed or single-heavy")
      ->capture_default_str();
  gen_cmd->add_option("--noise", gen.noise, "label noise for --kind regression")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed)->required();
  gen_cmd->add_option("--out", gen.out, "output directory")->capture_default_str();

  QuantileArgs qt;
  auto* qt_cmd = app.add_subcommand("quantile-trial", "repeated distributed quantile runs");
  AddGeneratorFlags(qt_cmd, qt.generator);
  qt_cmd->add_option("--protocol", qt.protocol, "flat, balanced or tree")->capture_default_str();
  qt_cmd->add_option("--eps", qt.eps)->capture_default_str();
  qt_cmd->add_option("--delta", qt.delta)->capture_default_str();
  qt_cmd->add_option("--trials", qt.trials)->capture_default_str()->check(CLI::PositiveNumber);
  qt_cmd->add_option("--seed", qt.seed)->required();
  qt_cmd->add_option("--grid", qt.grid, "query grid size")->capture_default_str();
  qt_cmd->add_option("--k", qt.k, "number of shards")->capture_default_str()->check(CLI::PositiveNumber);
  qt_cmd->add_option("--balance", qt.balance)->capture_default_str();
  qt_cmd->add_option("--topology", qt.topology, "topology JSON; replaces generated data")
      ->check(CLI::ExistingFile);
  qt_cmd->add_option("--out", qt.out, "report prefix (.csv and .json)")->capture_default_str();
  qt_cmd->add_flag("--assert", qt.assert_bound, "exit 3 if the failure fraction exceeds delta");

  GainArgs gt;
  gt.generator.distribution = "pareto";
  gt.generator.n = 200;
  auto* gt_cmd = app.add_subcommand("gain-trial", "weighted sampling vs GOSS gain errors");
  AddGeneratorFlags(gt_cmd, gt.generator);
  gt_cmd->add_option("--data", gt.data, "gradient CSV (value,gradient)")->check(CLI::ExistingFile);
  gt_cmd->add_option("--a", gt.a, "GOSS top fraction")->capture_default_str();
  gt_cmd->add_option("--b", gt.b, "GOSS sampled fraction")->capture_default_str();
  gt_cmd->add_option("--delta", gt.delta)->capture_default_str();
  gt_cmd->add_option("--trials", gt.trials)->capture_default_str()->check(CLI::PositiveNumber);
  gt_cmd->add_option("--seed", gt.seed)->required();
  gt_cmd->add_option("--splits", gt.splits, "split grid size")->capture_default_str();
  gt_cmd->add_option("--sample-budget", gt.sample_budget, "s for weighted sampling; default (a+b)n");
  gt_cmd->add_option("--out", gt.out, "report prefix (.csv and .json)")->capture_default_str();
  gt_cmd->add_flag("--assert", gt.assert_bound,
                   "exit 3 if the bound is exceeded in more than a delta fraction of trials");

  BoostArgs bt;
  auto* bt_cmd = app.add_subcommand("boost", "fit a stump ensemble");
  bt_cmd->add_option("--data", bt.data, "training CSV (feature,label)")->check(CLI::ExistingFile);
  bt_cmd->add_option("--n", bt.n, "generated sample count")->capture_default_str();
  bt_cmd->add_option("--noise", bt.noise)->capture_default_str();
  bt_cmd->add_option("--rounds", bt.rounds)->capture_default_str()->check(CLI::NonNegativeNumber);
  bt_cmd->add_option("--learning-rate", bt.learning_rate)->capture_default_str();
  bt_cmd->add_option("--sample-budget", bt.sample_budget, "s; 0 means n")->capture_default_str();
  bt_cmd->add_option("--candidates", bt.candidates)->capture_default_str();
  bt_cmd->add_option("--eps", bt.eps)->capture_default_str();
  bt_cmd->add_option("--delta", bt.delta)->capture_default_str();
  bt_cmd->add_option("--protocol", bt.protocol)->capture_default_str();
  bt_cmd->add_option("--shards", bt.shards)->capture_default_str();
  bt_cmd->add_option("--weighting", bt.weighting, "uniform or gradient")->capture_default_str();
  bt_cmd->add_option("--seed", bt.seed)->required();
  bt_cmd->add_option("--out", bt.out, "output prefix")->capture_default_str();
  bt_cmd->add_flag("--assert", bt.assert_monotone, "exit 3 if the training MSE ever increases");

  BoundsArgs bd;
  auto* bd_cmd = app.add_subcommand("bounds", "print the gain error bounds");
  bd_cmd->add_option("--W", bd.total_abs_gradient, "sum of |g|");
  bd_cmd->add_option("--n", bd.n);
  bd_cmd->add_option("--s", bd.s);
  bd_cmd->add_option("--delta", bd.delta)->capture_default_str();
  bd_cmd->add_option("--data", bd.data, "gradient CSV; enables the GOSS bound")
      ->check(CLI::ExistingFile);
  bd_cmd->add_option("--a", bd.a)->capture_default_str();
  bd_cmd->add_option("--b", bd.b)->capture_default_str();
  bd_cmd->add_option("--split", bd.split, "split value for the GOSS bound");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (*gen_cmd) return RunGen(gen);
    if (*qt_cmd) return RunQuantile(qt);
    if (*gt_cmd) return RunGain(gt);
    if (*bt_cmd) return RunBoost(bt);
    if (*bd_cmd) return RunBounds(bd);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
  return 0;
}
