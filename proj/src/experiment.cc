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

#include "commgbdt/experiment.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "commgbdt/split_sampling.h"

namespace commgbdt {

Distribution ParseDistribution(const std::string& name) {
  if (name == "uniform") return Distribution::kUniform;
  if (name == "lognormal") return Distribution::kLognormal;
  if (name == "pareto") return Distribution::kPareto;
  if (name == "two-cluster") return Distribution::kTwoCluster;
  throw InvalidArgument("unknown distribution '" + name +
                        "' (uniform, lognormal, pareto, two-cluster)");
}

std::string DistributionName(Distribution d) {
  switch (d) {
    case Distribution::kUniform:
      return "uniform";
    case Distribution::kLognormal:
      return "lognormal";
    case Distribution::kPareto:
      return "pareto";
    case Distribution::kTwoCluster:
      return "two-cluster";
  }
  return "uniform";
}

Balance ParseBalance(const std::string& name) {
  if (name == "equal") return Balance::kEqual;
  if (name == "dirichlet-skewed") return Balance::kDirichletSkewed;
  if (name == "single-heavy") return Balance::kSingleHeavy;
  throw InvalidArgument("unknown balance '" + name +
                        "' (equal, dirichlet-skewed, single-heavy)");
}

std::string BalanceName(Balance b) {
  switch (b) {
    case Balance::kEqual:
      return "equal";
    case Balance::kDirichletSkewed:
      return "dirichlet-skewed";
    case Balance::kSingleHeavy:
      return "single-heavy";
  }
  return "equal";
}

double DrawFromDistribution(const GeneratorSpec& spec, RandomSource& rng) {
  switch (spec.distribution) {
    case Distribution::kUniform:
      return rng.Uniform();
    case Distribution::kLognormal:
      return std::exp(spec.sigma * rng.Normal());
    case Distribution::kPareto:
      return std::pow(rng.UniformOpen(), -1.0 / spec.alpha);
    case Distribution::kTwoCluster:
      // 90% around 1, 10% around 10.
      return rng.Uniform() < 0.9 ? 1.0 + 0.1 * rng.Normal() : 10.0 + rng.Normal();
  }
  return 0.0;
}

namespace {

void CheckSpec(const GeneratorSpec& spec) {
  if (spec.n < 1) throw InvalidArgument("n must be at least 1");
  if (!(spec.sigma > 0.0)) throw InvalidArgument("sigma must be positive");
  if (!(spec.alpha > 0.0)) throw InvalidArgument("alpha must be positive");
  if (!(spec.weight_min > 0.0 && spec.weight_max >= spec.weight_min)) {
    throw InvalidArgument("need 0 < weight_min <= weight_max");
  }
}

// Marsaglia-Tsang, with the U^(1/shape) boost for shape < 1.
double DrawGamma(double shape, RandomSource& rng) {
  if (shape < 1.0) return DrawGamma(shape + 1.0, rng) * std::pow(rng.UniformOpen(), 1.0 / shape);
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = rng.Normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.UniformOpen();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

std::vector<std::size_t> Permutation(std::size_t n, RandomSource& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.UniformInt(i)]);
  return p;
}

}  // namespace

std::vector<WeightedItem> GenerateWeighted(const GeneratorSpec& spec, RandomSource& rng) {
  CheckSpec(spec);
  std::vector<WeightedItem> items;
  items.reserve(static_cast<std::size_t>(spec.n));
  for (std::int64_t i = 0; i < spec.n; ++i) {
    const double v = DrawFromDistribution(spec, rng);
    const double w = spec.weight_min + (spec.weight_max - spec.weight_min) * rng.Uniform();
    items.push_back({v, w});
  }
  return items;
}

GradientSet GenerateGradients(const GeneratorSpec& spec, RandomSource& rng) {
  CheckSpec(spec);
  std::vector<GradientInstance> out;
  out.reserve(static_cast<std::size_t>(spec.n));
  for (std::int64_t i = 0; i < spec.n; ++i) {
    const double x = rng.Uniform();
    const double magnitude = std::abs(DrawFromDistribution(spec, rng));
    const double sign = rng.Uniform() < 0.5 ? -1.0 : 1.0;
    out.push_back({x, sign * magnitude});
  }
  return GradientSet(std::move(out));
}

std::vector<std::vector<WeightedItem>> PartitionItems(std::span<const WeightedItem> items, int k,
                                                      Balance balance, RandomSource& rng) {
  if (k < 1) throw InvalidArgument("k must be at least 1");
  if (items.size() < static_cast<std::size_t>(k)) {
    throw InvalidArgument("fewer items than shards");
  }
  const auto perm = Permutation(items.size(), rng);
  std::vector<std::vector<WeightedItem>> shards(k);
  const std::size_t n = items.size();

  if (balance == Balance::kDirichletSkewed) {
    std::vector<double> share(k);
    double total = 0.0;
    for (auto& s : share) total += (s = DrawGamma(0.5, rng));
    std::vector<double> cdf(k);
    double acc = 0.0;
    for (int j = 0; j < k; ++j) cdf[j] = (acc += share[j] / total);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t j = i < static_cast<std::size_t>(k) ? i : 0;
      if (i >= static_cast<std::size_t>(k)) {
        const double u = rng.Uniform();
        j = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        j = std::min<std::size_t>(j, k - 1);
      }
      shards[j].push_back(items[perm[i]]);
    }
    return shards;
  }

  const std::size_t base = n / k;
  const std::size_t extra = n % k;
  std::size_t pos = 0;
  for (int j = 0; j < k; ++j) {
    const std::size_t rows = base + (static_cast<std::size_t>(j) < extra ? 1 : 0);
    for (std::size_t r = 0; r < rows; ++r) shards[j].push_back(items[perm[pos++]]);
  }
  if (balance == Balance::kSingleHeavy && k > 1) {
    double total = 0.0;
    for (const auto& it : items) total += it.weight;
    for (int j = 0; j < k; ++j) {
      double shard_total = 0.0;
      for (const auto& it : shards[j]) shard_total += it.weight;
      const double target =
          j == 0 ? kSingleHeavyShare * total : (1.0 - kSingleHeavyShare) * total / (k - 1);
      for (auto& it : shards[j]) it.weight *= target / shard_total;
    }
  }
  return shards;
}

std::vector<double> QueryGrid(const WeightedDataset& data, int grid_size) {
  if (data.empty()) throw InvalidArgument("query grid of an empty dataset");
  if (grid_size < 1) throw InvalidArgument("grid size must be at least 1");
  std::vector<double> grid;
  grid.push_back(data.items().front().value);
  for (int i = 1; i <= grid_size; ++i) {
    grid.push_back(WeightedQuantile(data, static_cast<double>(i) / (grid_size + 1)));
  }
  grid.push_back(data.items().back().value);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

ReportAggregate Aggregate(const std::vector<TrialRow>& rows) {
  ReportAggregate agg;
  if (rows.empty()) return agg;
  std::int64_t failures = 0;
  CompensatedSum comm;
  std::vector<std::int64_t> records;
  records.reserve(rows.size());
  for (const auto& r : rows) {
    failures += r.exceeded ? 1 : 0;
    comm.Add(static_cast<double>(r.total_records));
    records.push_back(r.total_records);
  }
  const double count = static_cast<double>(rows.size());
  agg.failure_fraction = static_cast<double>(failures) / count;
  agg.mean_comm = comm.Value() / count;
  std::sort(records.begin(), records.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.99 * count));
  agg.p99_comm = static_cast<double>(records[std::max<std::size_t>(rank, 1) - 1]);
  return agg;
}

namespace {

constexpr const char* kReportHeader =
    "trial,split_index,split_value,error,baseline_error,bound,exceeded,total_records,"
    "max_node_records";

nlohmann::json AggregateJson(const ReportAggregate& a) {
  return {{"failure_fraction", a.failure_fraction},
          {"mean_comm", a.mean_comm},
          {"p99_comm", a.p99_comm}};
}

template <typename T>
T ParseField(std::string_view field, const std::string& path) {
  T x{};
  const auto res = std::from_chars(field.data(), field.data() + field.size(), x);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw InvalidArgument(path + ": cannot parse '" + std::string(field) + "'");
  }
  return x;
}

}  // namespace

void WriteReport(const ExperimentReport& report, const std::string& csv_path,
                 const std::string& json_path) {
  {
    std::ofstream csv(csv_path);
    if (!csv) throw InvalidArgument("cannot write " + csv_path);
    csv << kReportHeader << '\n';
    for (const auto& r : report.rows) {
      csv << r.trial << ',' << r.split_index << ',' << FormatDouble(r.split_value) << ','
          << FormatDouble(r.error) << ',' << FormatDouble(r.baseline_error) << ','
          << FormatDouble(r.bound) << ',' << (r.exceeded ? 1 : 0) << ',' << r.total_records
          << ',' << r.max_node_records << '\n';
    }
  }
  nlohmann::json doc = {{"kind", report.kind},
                        {"trial_rows", report.rows.size()},
                        {"aggregate", AggregateJson(report.aggregate)},
                        {"details", report.details}};
  std::ofstream js(json_path);
  if (!js) throw InvalidArgument("cannot write " + json_path);
  js << doc.dump(2) << '\n';
}

ExperimentReport ReadReport(const std::string& csv_path, const std::string& json_path) {
  ExperimentReport report;
  std::ifstream csv(csv_path);
  if (!csv) throw InvalidArgument("cannot open " + csv_path);
  std::string line;
  std::getline(csv, line);
  if (line != kReportHeader) throw InvalidArgument(csv_path + ": unexpected header");
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view sv(line);
    while (true) {
      const auto c = sv.find(',');
      f.push_back(sv.substr(0, c));
      if (c == std::string_view::npos) break;
      sv.remove_prefix(c + 1);
    }
    if (f.size() != 9) throw InvalidArgument(csv_path + ": expected 9 fields");
    TrialRow r;
    r.trial = ParseField<std::int64_t>(f[0], csv_path);
    r.split_index = ParseField<std::int64_t>(f[1], csv_path);
    r.split_value = ParseField<double>(f[2], csv_path);
    r.error = ParseField<double>(f[3], csv_path);
    r.baseline_error = ParseField<double>(f[4], csv_path);
    r.bound = ParseField<double>(f[5], csv_path);
    r.exceeded = ParseField<int>(f[6], csv_path) != 0;
    r.total_records = ParseField<std::int64_t>(f[7], csv_path);
    r.max_node_records = ParseField<std::int64_t>(f[8], csv_path);
    report.rows.push_back(r);
  }

  std::ifstream js(json_path);
  if (!js) throw InvalidArgument("cannot open " + json_path);
  nlohmann::json doc;
  try {
    js >> doc;
    report.kind = doc.at("kind").get<std::string>();
    report.details = doc.value("details", nlohmann::json::object());
    const auto& agg = doc.at("aggregate");
    report.aggregate.failure_fraction = agg.at("failure_fraction").get<double>();
    report.aggregate.mean_comm = agg.at("mean_comm").get<double>();
    report.aggregate.p99_comm = agg.at("p99_comm").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(json_path + ": " + e.what());
  }
  const auto recomputed = Aggregate(report.rows);
  if (recomputed.failure_fraction != report.aggregate.failure_fraction ||
      recomputed.mean_comm != report.aggregate.mean_comm ||
      recomputed.p99_comm != report.aggregate.p99_comm) {
    throw InvalidArgument(json_path + ": aggregate does not match the per-trial rows");
  }
  return report;
}

nlohmann::json ProtocolReportJson(const ProtocolResult& result, QuantileProtocol protocol,
                                  double eps, double delta, int k, double max_rank_error,
                                  int grid_size, std::uint64_t seed) {
  nlohmann::json per_node = nlohmann::json::object();
  for (const auto& [id, n] : result.ledger.per_node_sent(Phase::kSummary)) {
    per_node[std::to_string(id)] = n;
  }
  return {{"protocol", ProtocolName(protocol)},
          {"eps", eps},
          {"delta", delta},
          {"k", k},
          {"total_records", result.ledger.total_records(Phase::kSummary)},
          {"preround_records", result.ledger.total_records(Phase::kPreround)},
          {"per_node_sent", per_node},
          {"max_rank_error", max_rank_error},
          {"query_grid_size", grid_size},
          {"seed", seed}};
}

TreeTopology TopologyForShards(const Partitioning& parts) {
  const int k = parts.k();
  int levels = 0;
  while ((1 << levels) - 1 < k) ++levels;
  if ((1 << levels) - 1 == k) return TreeTopology::Complete(levels, parts.shards());
  return LeafTopology(parts);
}

namespace {

Partitioning GeneratePartitioning(const QuantileTrialConfig& config) {
  RandomSource data_rng = DeriveStream(RandomSource(config.seed, 0), 0);
  const auto items = GenerateWeighted(config.generator, data_rng);
  auto raw = PartitionItems(items, config.k, config.balance, data_rng);
  std::vector<WeightedDataset> shards;
  for (const auto& r : raw) shards.push_back(Coalesce(r));
  return Partitioning(std::move(shards));
}

template <typename RunFn>
ExperimentReport QuantileTrialLoop(const QuantileTrialConfig& config, const WeightedDataset& truth,
                                   int k, RunFn&& run) {
  if (config.trials < 1) throw InvalidArgument("trial count must be at least 1");
  const auto grid = QueryGrid(truth, config.grid_size);
  const double bound = config.eps * truth.total_weight();
  const RandomSource trial_root = DeriveStream(RandomSource(config.seed, 0), 1);

  ExperimentReport report;
  report.kind = "quantile-trial";
  nlohmann::json runs = nlohmann::json::array();
  double step = 0.0;
  for (std::int64_t t = 0; t < config.trials; ++t) {
    const ProtocolResult result = run(DeriveStream(trial_root, static_cast<std::uint64_t>(t)));
    step = result.base_step;
    TrialRow row;
    row.trial = t;
    row.error = MaxRankError(truth, grid, [&](double v) { return EstimateRank(result, v); });
    row.bound = bound;
    row.exceeded = row.error > bound;
    row.total_records = result.ledger.total_records(Phase::kSummary);
    row.max_node_records = result.ledger.max_node_sent(Phase::kSummary);
    report.rows.push_back(row);
    runs.push_back(ProtocolReportJson(result, config.protocol, config.eps, config.delta, k,
                                      row.error, config.grid_size, config.seed));
  }
  report.aggregate = Aggregate(report.rows);
  report.details = {{"protocol", ProtocolName(config.protocol)},
                    {"eps", config.eps},
                    {"delta", config.delta},
                    {"k", k},
                    {"seed", config.seed},
                    {"trials", config.trials},
                    {"global_weight", truth.total_weight()},
                    {"base_step", step},
                    {"rank_error_bound", bound},
                    {"query_grid_points", grid.size()},
                    {"runs", runs}};
  return report;
}

}  // namespace

ExperimentReport RunQuantileTrials(const QuantileTrialConfig& config) {
  const Partitioning parts = GeneratePartitioning(config);
  if (config.protocol == QuantileProtocol::kTree) {
    return RunQuantileTrials(config, TopologyForShards(parts));
  }
  return RunQuantileTrials(config, parts);
}

ExperimentReport RunQuantileTrials(const QuantileTrialConfig& config, const Partitioning& parts) {
  if (config.protocol == QuantileProtocol::kTree) {
    return RunQuantileTrials(config, TopologyForShards(parts));
  }
  const auto truth = Union(parts.shards());
  auto report = QuantileTrialLoop(config, truth, parts.k(), [&](const RandomSource& rng) {
    return config.protocol == QuantileProtocol::kFlat
               ? FlatProtocol(parts, config.eps, config.delta, rng)
               : FlatProtocolBalanced(parts, config.eps, config.delta, rng);
  });
  nlohmann::json weights = nlohmann::json::array();
  for (const auto& s : parts.shards()) weights.push_back(s.total_weight());
  report.details["shard_weights"] = weights;
  return report;
}

ExperimentReport RunQuantileTrials(const QuantileTrialConfig& config,
                                   const TreeTopology& topology) {
  std::vector<WeightedDataset> all;
  for (const auto& [id, n] : topology.nodes()) all.push_back(n.data);
  const auto truth = Union(all);
  auto report = QuantileTrialLoop(config, truth, topology.data_node_count(),
                                  [&](const RandomSource& rng) {
                                    return TreeProtocol(topology, config.eps, config.delta, rng);
                                  });
  report.details["protocol"] = "tree";
  report.details["tree_nodes"] = topology.size();
  report.details["tree_height"] = topology.height();
  return report;
}

std::vector<double> SplitGrid(const GradientSet& data, int grid_size) {
  if (grid_size < 1) throw InvalidArgument("grid size must be at least 1");
  std::vector<double> values;
  for (const auto& inst : data.instances()) values.push_back(inst.value);
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  if (values.size() < 2) throw InvalidArgument("need at least two distinct values");
  std::vector<double> grid;
  const std::size_t m = values.size();
  for (int i = 1; i <= grid_size; ++i) {
    auto r = static_cast<std::size_t>(static_cast<double>(i) * m / (grid_size + 1));
    r = std::clamp<std::size_t>(r, 1, m - 1);
    grid.push_back(values[r - 1] + (values[r] - values[r - 1]) / 2.0);
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

ExperimentReport RunGainTrials(const GainTrialConfig& config) {
  RandomSource data_rng = DeriveStream(RandomSource(config.seed, 0), 0);
  return RunGainTrials(config, GenerateGradients(config.generator, data_rng));
}

ExperimentReport RunGainTrials(const GainTrialConfig& config, const GradientSet& data) {
  if (config.trials < 1) throw InvalidArgument("trial count must be at least 1");
  const auto n = static_cast<std::int64_t>(data.count());
  const double s = config.sample_budget.value_or((config.a + config.b) * static_cast<double>(n));
  const double W = data.total_abs_gradient();
  const double ws_bound = WsErrorBound(W, n, s, config.delta);
  const auto grid = SplitGrid(data, config.split_grid);

  std::vector<GainEstimate> exact;
  std::vector<SideCounts> counts;
  std::vector<double> goss_bounds;
  for (double v : grid) {
    exact.push_back(VarianceGainExact(data, v));
    counts.push_back(CountSides(data, v));
    goss_bounds.push_back(GossErrorBound(data, config.a, config.b, v, config.delta));
  }

  const RandomSource trial_root = DeriveStream(RandomSource(config.seed, 0), 1);
  const std::size_t g = grid.size();
  std::vector<CompensatedSum> ws_sum(g), goss_sum(g);
  std::vector<std::int64_t> exceed(g, 0);
  ExperimentReport report;
  report.kind = "gain-trial";
  for (std::int64_t t = 0; t < config.trials; ++t) {
    const RandomSource trial = DeriveStream(trial_root, static_cast<std::uint64_t>(t));
    RandomSource ws_rng = DeriveStream(trial, 0);
    RandomSource goss_rng = DeriveStream(trial, 1);
    const auto sample = WeightedSample(data, s, ws_rng);
    const auto goss = DrawGossSample(data, config.a, config.b, goss_rng);
    for (std::size_t i = 0; i < g; ++i) {
      const double v = grid[i];
      const double ws = VarianceGainWs(sample, counts[i].left, counts[i].right, n, v).gain;
      const double gs = VarianceGainGoss(goss, n, v, counts[i].left, counts[i].right).gain;
      TrialRow row;
      row.trial = t;
      row.split_index = static_cast<std::int64_t>(i);
      row.split_value = v;
      row.error = std::abs(ws - exact[i].gain);
      row.baseline_error = std::abs(gs - exact[i].gain);
      row.bound = ws_bound;
      row.exceeded = row.error > ws_bound;
      row.total_records = static_cast<std::int64_t>(sample.size());
      row.max_node_records = static_cast<std::int64_t>(goss.top_set.size() + goss.sampled_set.size());
      ws_sum[i].Add(row.error);
      goss_sum[i].Add(row.baseline_error);
      exceed[i] += row.exceeded ? 1 : 0;
      report.rows.push_back(row);
    }
  }
  report.aggregate = Aggregate(report.rows);

  nlohmann::json splits = nlohmann::json::array();
  std::int64_t ws_wins = 0;
  double worst_exceed = 0.0;
  const double trials = static_cast<double>(config.trials);
  for (std::size_t i = 0; i < g; ++i) {
    const double mean_ws = ws_sum[i].Value() / trials;
    const double mean_goss = goss_sum[i].Value() / trials;
    const double frac = static_cast<double>(exceed[i]) / trials;
    ws_wins += mean_ws <= mean_goss ? 1 : 0;
    worst_exceed = std::max(worst_exceed, frac);
    splits.push_back({{"split_value", grid[i]},
                      {"exact_gain", exact[i].gain},
                      {"left_count", counts[i].left},
                      {"right_count", counts[i].right},
                      {"mean_ws_error", mean_ws},
                      {"mean_goss_error", mean_goss},
                      {"ws_exceed_fraction", frac},
                      {"goss_bound", goss_bounds[i]}});
  }
  report.details = {{"n", n},
                    {"sample_budget", s},
                    {"a", config.a},
                    {"b", config.b},
                    {"delta", config.delta},
                    {"total_abs_gradient", W},
                    {"ws_bound", ws_bound},
                    {"seed", config.seed},
                    {"trials", config.trials},
                    {"splits", splits},
                    {"ws_wins", ws_wins},
                    {"max_ws_exceed_fraction", worst_exceed}};
  return report;
}

}  // namespace commgbdt
