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

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "commgbdt/boost_demo.h"
#include "commgbdt/split_sampling.h"
#include "doctest.h"

using namespace commgbdt;

TEST_CASE("separable pair") {
  const std::vector<RegressionSample> data{{1, 0}, {2, 1}};
  const std::vector<double> zero(2, 0.0);
  const auto stump = FitRound(data, zero, BoostConfig{}, RandomSource(1, 0));
  CHECK(stump.split_value == 1.5);
  CHECK(stump.left_prediction == 0.0);
  CHECK(stump.right_prediction == 1.0);

  const auto run = Fit(data, BoostConfig{}, 3, RandomSource(1, 0));
  CHECK(run.mse.front() == 0.5);
  CHECK(run.mse.back() == 0.0);
  CHECK(run.ensemble.Predict(1) == 0.0);
  CHECK(run.ensemble.Predict(2) == 1.0);
}

TEST_CASE("zero residuals tie everywhere and pick the smallest threshold") {
  const std::vector<RegressionSample> data{{1, 3}, {2, 3}, {3, 3}, {4, 3}};
  const std::vector<double> fitted(4, 3.0);
  BoostConfig config;
  config.candidates = 4;
  config.eps = 0.01;
  const auto stump = FitRound(data, fitted, config, RandomSource(2, 0));
  CHECK(stump.split_value == 1.5);
  CHECK(stump.left_prediction == 0.0);
  CHECK(stump.right_prediction == 0.0);
}

TEST_CASE("degenerate inputs") {
  const std::vector<RegressionSample> same{{1, 0}, {1, 1}};
  const std::vector<double> zero(2, 0.0);
  CHECK_THROWS_AS(FitRound(same, zero, BoostConfig{}, RandomSource(3, 0)), InvalidArgument);
  CHECK_THROWS_AS(FitRound(std::vector<RegressionSample>{{1, 0}}, std::vector<double>{0.0},
                           BoostConfig{}, RandomSource(3, 0)),
                  InvalidArgument);
  BoostConfig bad;
  bad.learning_rate = 1.5;
  CHECK_THROWS_AS(FitRound(std::vector<RegressionSample>{{1, 0}, {2, 1}}, zero, bad,
                           RandomSource(3, 0)),
                  InvalidArgument);
}

TEST_CASE("candidate proposal") {
  std::vector<WeightedItem> items;
  for (int v = 1; v <= 100; ++v) items.push_back({static_cast<double>(v), 1.0});
  std::vector<WeightedDataset> shards;
  for (int j = 0; j < 4; ++j) {
    shards.push_back(Coalesce(std::vector<WeightedItem>(items.begin() + 25 * j,
                                                        items.begin() + 25 * (j + 1))));
  }
  const Partitioning parts(shards);
  const auto all = Coalesce(items);
  for (auto protocol : {QuantileProtocol::kFlat, QuantileProtocol::kBalanced,
                        QuantileProtocol::kTree}) {
    const auto c = ProposeCandidates(parts, 4, 0.01, 0.1, protocol, RandomSource(4, 0));
    REQUIRE(c.size() == 4);
    for (int i = 0; i < 4; ++i) {
      const double phi = (i + 0.5) / 4;
      const auto exact = WeightedQuantile(all, phi);
      CHECK(std::abs(RankExact(all, c[i]).below - RankExact(all, exact).below) <= 0.02 * 100 + 1);
    }
    CHECK(std::is_sorted(c.begin(), c.end()));
    const auto median = ProposeCandidates(parts, 1, 0.01, 0.1, protocol, RandomSource(4, 0));
    CHECK(std::abs(median[0] - 50.5) <= 3.0);
  }
  const Partitioning tiny({Coalesce(std::vector<WeightedItem>{{1, 1}, {2, 1}})});
  CHECK(ProposeCandidates(tiny, 10, 0.5, 0.1, QuantileProtocol::kFlat, RandomSource(4, 1)).size() ==
        10);
  CHECK_THROWS_AS(ProposeCandidates(tiny, 0, 0.5, 0.1, QuantileProtocol::kFlat, RandomSource(4, 1)),
                  InvalidArgument);
}

TEST_CASE("training error never increases with the full sample") {
  RandomSource gen(5, 0);
  const auto data = PiecewiseConstantData(200, 0.3, gen);
  for (auto protocol : {QuantileProtocol::kFlat, QuantileProtocol::kBalanced,
                        QuantileProtocol::kTree}) {
    BoostConfig config;
    config.protocol = protocol;
    config.learning_rate = 0.5;
    const auto run = Fit(data, config, 10, RandomSource(5, 1));
    REQUIRE(run.mse.size() == 11);
    for (std::size_t r = 1; r < run.mse.size(); ++r) CHECK(run.mse[r] <= run.mse[r - 1]);
    CHECK(run.mse.back() == doctest::Approx(MeanSquaredError(data, run.ensemble)));
  }
}

TEST_CASE("ensembles do not depend on sample order") {
  RandomSource gen(6, 0);
  auto data = PiecewiseConstantData(120, 0.2, gen);
  BoostConfig config;
  config.sample_budget = 30;
  const auto a = Fit(data, config, 5, RandomSource(6, 1));
  std::reverse(data.begin(), data.end());
  const auto b = Fit(data, config, 5, RandomSource(6, 1));
  REQUIRE(a.ensemble.stumps.size() == b.ensemble.stumps.size());
  for (std::size_t i = 0; i < a.ensemble.stumps.size(); ++i) {
    CHECK(a.ensemble.stumps[i].split_value == b.ensemble.stumps[i].split_value);
    CHECK(a.ensemble.stumps[i].left_prediction == b.ensemble.stumps[i].left_prediction);
    CHECK(a.ensemble.stumps[i].right_prediction == b.ensemble.stumps[i].right_prediction);
  }
  CHECK(a.mse == b.mse);
}

TEST_CASE("a sample that keeps everything picks the exact-gain argmax") {
  RandomSource gen(7, 0);
  const auto data = PiecewiseConstantData(150, 0.5, gen);
  std::vector<double> zero(data.size(), 0.0);
  BoostConfig config;
  config.candidates = 12;
  double min_abs = 1e300;
  double w = 0.0;
  for (const auto& d : data) {
    min_abs = std::min(min_abs, std::abs(d.label));
    w += std::abs(d.label);
  }
  config.sample_budget = 2.0 * w / min_abs;
  const RandomSource rng(7, 1);
  const auto stump = FitRound(data, zero, config, rng);

  // Rebuild the candidate thresholds the round scores and take the exact
  // argmax over them.
  std::vector<RegressionSample> sorted(data.begin(), data.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return a.feature != b.feature ? a.feature < b.feature : a.label < b.label;
  });
  std::vector<std::vector<WeightedItem>> raw(4);
  std::vector<GradientInstance> inst;
  std::vector<double> distinct;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    raw[i % 4].push_back({sorted[i].feature, 1.0});
    inst.push_back({sorted[i].feature, sorted[i].label});
    if (distinct.empty() || distinct.back() != sorted[i].feature) distinct.push_back(sorted[i].feature);
  }
  std::vector<WeightedDataset> shards;
  for (const auto& r : raw) shards.push_back(Coalesce(r));
  const auto cands = ProposeCandidates(Partitioning(shards), 12, config.eps, config.delta,
                                       QuantileProtocol::kFlat, DeriveStream(rng, 1));
  const GradientSet g(inst);
  double best = -1.0;
  double best_v = 0.0;
  std::vector<double> thresholds;
  for (double c : cands) {
    auto it = std::upper_bound(distinct.begin(), distinct.end(), c);
    thresholds.push_back(it == distinct.end() ? (distinct[distinct.size() - 2] + distinct.back()) / 2
                                              : (*(it - 1) + *it) / 2);
  }
  std::sort(thresholds.begin(), thresholds.end());
  for (double v : thresholds) {
    const double gain = VarianceGainExact(g, v).gain;
    if (gain > best) {
      best = gain;
      best_v = v;
    }
  }
  CHECK(stump.split_value == doctest::Approx(best_v).epsilon(1e-15));
}

TEST_CASE("regression csv round-trip") {
  RandomSource gen(8, 0);
  const auto data = PiecewiseConstantData(40, 0.1, gen);
  const auto path = (std::filesystem::temp_directory_path() / "commgbdt_regression.csv").string();
  WriteRegressionCsv(path, data);
  const auto back = ReadRegressionCsv(path);
  REQUIRE(back.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(back[i].feature == data[i].feature);
    CHECK(back[i].label == data[i].label);
  }
  std::filesystem::remove(path);
}

TEST_CASE("protocol names") {
  for (auto p : {QuantileProtocol::kFlat, QuantileProtocol::kBalanced, QuantileProtocol::kTree}) {
    CHECK(ParseProtocol(ProtocolName(p)) == p);
  }
  CHECK_THROWS_AS(ParseProtocol("star"), InvalidArgument);
}
