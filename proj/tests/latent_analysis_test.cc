/*
 * Copyright 2026 The DHRL Authors.
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

#include "dhrl/latent_analysis.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "dhrl/common.h"

namespace dhrl {
namespace {

namespace fs = std::filesystem;

VlaeConfig SmallConfig() {
  VlaeConfig c;
  c.image_size = 32;
  c.channels = {4, 8, 8, 16};
  return c;
}

Vlae EvalModel(uint64_t seed) {
  torch::manual_seed(seed);
  Vlae model(SmallConfig());
  model->eval();
  return model;
}

std::vector<double> RandomLatent(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  std::vector<double> z(kGenomeSize);
  for (auto& v : z) v = n(rng);
  return z;
}

std::vector<LatentHierarchy> RandomPopulation(size_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<LatentHierarchy> out;
  for (size_t i = 0; i < n; ++i) {
    out.push_back(LatentHierarchy::FromFlat(RandomLatent(rng), LatentProvenance::kManual));
  }
  return out;
}

// --- integrated gradients --------------------------------------------------

TEST(IntegratedGradients, LinearDecoderMatchesClosedForm) {
  torch::manual_seed(3);
  auto w = torch::randn({2 * 4 * 5, kGenomeSize}, torch::kDouble);
  LatentDecoder decoder = [&](const torch::Tensor& z) {
    return torch::matmul(z, w.t()).view({-1, 2, 4, 5});
  };
  std::mt19937_64 rng(1);
  const auto z = RandomLatent(rng);
  const LatentIndex index{3, 7};
  for (int steps : {1, 7, 300}) {
    auto map = LatentIntegratedGradients(decoder, z, index, -1.7, 2.3, steps, 64);
    ASSERT_EQ(map.values.sizes(), (std::vector<int64_t>{4, 5}));
    auto expected =
        w.select(1, index.Flat()).view({2, 4, 5}).sum(0) * (2.3 - (-1.7));
    EXPECT_LT((map.values - expected).abs().max().item<double>(), 1e-6) << steps;
    EXPECT_EQ(map.steps, steps);
  }
}

TEST(IntegratedGradients, ZeroLengthPathGivesZeroMap) {
  auto model = EvalModel(1);
  auto z = RandomPopulation(1, 2)[0];
  auto map = LatentIntegratedGradients(*model, z, {2, 4}, 0.8, 0.8, 10);
  EXPECT_EQ(map.values.sizes(), (std::vector<int64_t>{32, 32}));
  EXPECT_EQ(map.values.abs().max().item<double>(), 0.0);
}

TEST(IntegratedGradients, CompletenessOnConvolutionalDecoder) {
  auto model = EvalModel(4);
  auto z = RandomPopulation(1, 5)[0];
  for (LatentIndex index : {LatentIndex{1, 0}, LatentIndex{4, 9}}) {
    const double lo = -2.5, hi = 2.5;
    auto map = LatentIntegratedGradients(*model, z, index, lo, hi, 300);
    auto at = [&](double v) {
      auto zz = z;
      zz.codes[index.code - 1].sample[index.dim] = v;
      return Decode(*model, zz).pixels.to(torch::kDouble).sum().item<double>();
    };
    const double delta = at(hi) - at(lo);
    const double total = map.values.sum().item<double>();
    EXPECT_NEAR(total, delta, 0.01 * std::abs(delta))
        << "code " << index.code << " dim " << index.dim;
  }
}

TEST(IntegratedGradients, RejectsBadArguments) {
  auto model = EvalModel(1);
  auto z = RandomPopulation(1, 2)[0];
  EXPECT_THROW(LatentIntegratedGradients(*model, z, {0, 0}, -1, 1, 5), Error);
  EXPECT_THROW(LatentIntegratedGradients(*model, z, {5, 0}, -1, 1, 5), Error);
  EXPECT_THROW(LatentIntegratedGradients(*model, z, {1, 10}, -1, 1, 5), Error);
  EXPECT_THROW(LatentIntegratedGradients(*model, z, {1, 0}, -1, 1, 0), Error);
  model->train();
  EXPECT_THROW(LatentIntegratedGradients(*model, z, {1, 0}, -1, 1, 5), Error);
}

TEST(IntegratedGradients, RangeModes) {
  std::vector<LatentHierarchy> pop(2);
  pop[0].codes[1].mu[3] = -4.0;
  pop[1].codes[1].mu[5] = 2.5;
  pop[1].codes[2].mu[0] = 9.0;
  EXPECT_EQ(IgRange(pop, {2, 5}, IgRangeMode::kGlobalPerCode), 4.0);
  EXPECT_EQ(IgRange(pop, {2, 5}, IgRangeMode::kPerDimension), 2.5);
  EXPECT_EQ(ParseIgRangeMode("per_dimension"), IgRangeMode::kPerDimension);
  EXPECT_THROW(ParseIgRangeMode("global"), Error);
}

TEST(IntegratedGradients, StandardScoreDisplay) {
  auto v = torch::tensor({1.0, 2.0, 3.0, 6.0}).view({2, 2});
  auto s = StandardScoreMap(v);
  EXPECT_NEAR(s.mean().item<double>(), 0, 1e-12);
  EXPECT_NEAR(s.std(false).item<double>(), 1, 1e-12);
  EXPECT_EQ(StandardScoreMap(torch::ones({2, 2})).abs().sum().item<double>(), 0);
}

// --- importance and D/C ----------------------------------------------------

TEST(Importance, SingleInformativeLatentCarriesTheMass) {
  std::mt19937_64 rng(10);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (int i = 0; i < 300; ++i) {
    auto z = RandomLatent(rng);
    y.push_back(z[17] < -0.43 ? 0 : (z[17] < 0.43 ? 1 : 2));
    x.push_back(z);
  }
  GbtOptions options;
  options.seed = 1;
  auto m = ComputeImportanceMatrix(x, y, options);
  double total = 0, row = 0;
  for (size_t i = 0; i < m.num_latents(); ++i) {
    for (double v : m.r[i]) {
      total += v;
      if (i == 17) row += v;
    }
  }
  EXPECT_GE(row / total, 0.9);
}

TEST(Importance, ShuffledLabelsSpreadImportanceEvenly) {
  // Row totals pooled over five independent null fixtures (data and seed).
  std::vector<double> rows(kGenomeSize, 0.0);
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(100 + seed);
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    for (int i = 0; i < 300; ++i) {
      x.push_back(RandomLatent(rng));
      y.push_back(static_cast<int>(rng() % 3));
    }
    GbtOptions options;
    options.seed = seed;
    auto m = ComputeImportanceMatrix(x, y, options);
    for (int i = 0; i < kGenomeSize; ++i) {
      rows[i] += std::accumulate(m.r[i].begin(), m.r[i].end(), 0.0);
    }
  }
  const auto [lo, hi] = std::minmax_element(rows.begin(), rows.end());
  EXPECT_GT(*lo, 0);
  EXPECT_LT(*hi / *lo, 3.0);
}

TEST(Importance, DeterministicAndNonNegative) {
  std::mt19937_64 rng(3);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (int i = 0; i < 60; ++i) {
    x.push_back(RandomLatent(rng));
    y.push_back(i % 2 == 0 ? 4 : 9);
  }
  GbtOptions options;
  options.seed = 7;
  auto a = ComputeImportanceMatrix(x, y, options);
  auto b = ComputeImportanceMatrix(x, y, options);
  EXPECT_EQ(a.r, b.r);
  EXPECT_EQ(a.classes, (std::vector<int>{4, 9}));
  for (const auto& r : a.r) {
    for (double v : r) EXPECT_TRUE(std::isfinite(v) && v >= 0);
  }
}

TEST(Importance, DegenerateLabelsAreRejected) {
  std::mt19937_64 rng(3);
  std::vector<std::vector<double>> x;
  for (int i = 0; i < 30; ++i) x.push_back(RandomLatent(rng));
  EXPECT_THROW(ComputeImportanceMatrix(x, std::vector<int>(30, 1), {}), Error);
  std::vector<int> y(30, 0);
  for (int i = 0; i < 9; ++i) y[i] = 1;
  EXPECT_THROW(ComputeImportanceMatrix(x, y, {}), Error);
}

TEST(Disentanglement, OneHotScoresOne) {
  ImportanceMatrix m;
  m.classes = {0, 1, 2, 3};
  m.r.assign(4, std::vector<double>(4, 0.0));
  for (int i = 0; i < 4; ++i) m.r[i][i] = 0.5 + i;
  auto rep = DisentanglementCompleteness(m, {4});
  for (const auto& d : rep.latent_d) EXPECT_DOUBLE_EQ(*d, 1.0);
  for (const auto& c : rep.class_c) EXPECT_DOUBLE_EQ(*c, 1.0);
  EXPECT_DOUBLE_EQ(*rep.codes[0].disentanglement, 1.0);
  EXPECT_DOUBLE_EQ(*rep.codes[0].completeness, 1.0);
}

TEST(Disentanglement, UniformScoresZero) {
  ImportanceMatrix m;
  m.classes = {0, 1, 2};
  m.r.assign(kGenomeSize, std::vector<double>(3, 0.2));
  auto rep = DisentanglementCompleteness(m);
  ASSERT_EQ(rep.codes.size(), 4u);
  for (const auto& c : rep.codes) {
    EXPECT_NEAR(*c.disentanglement, 0.0, 1e-12);
    EXPECT_NEAR(*c.completeness, 0.0, 1e-12);
  }
}

TEST(Disentanglement, ZeroRowsAndColumnsAreUndefined) {
  ImportanceMatrix m;
  m.classes = {0, 1};
  m.r.assign(kGenomeSize, std::vector<double>(2, 0.0));
  m.r[0] = {1.0, 0.0};
  m.r[1] = {0.0, 2.0};
  auto rep = DisentanglementCompleteness(m);
  EXPECT_FALSE(rep.latent_d[5].has_value());
  EXPECT_DOUBLE_EQ(*rep.codes[0].disentanglement, 1.0);
  EXPECT_DOUBLE_EQ(*rep.codes[0].completeness, 1.0);
  for (int c = 1; c < 4; ++c) {
    EXPECT_FALSE(rep.codes[c].disentanglement.has_value());
    EXPECT_FALSE(rep.codes[c].completeness.has_value());
  }
  EXPECT_TRUE(rep.ToJson()["codes"][1]["disentanglement"].is_null());
}

TEST(Disentanglement, ScoresStayInUnitInterval) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    ImportanceMatrix m;
    const int k = 2 + trial % 5;
    for (int c = 0; c < k; ++c) m.classes.push_back(c);
    m.r.assign(kGenomeSize, std::vector<double>(k));
    for (auto& row : m.r) {
      for (auto& v : row) v = u(rng) < 0.3 ? 0.0 : std::pow(u(rng), 4);
    }
    auto rep = DisentanglementCompleteness(m);
    for (const auto& d : rep.latent_d) {
      if (d) EXPECT_TRUE(*d >= 0 && *d <= 1);
    }
    for (const auto& c : rep.class_c) {
      if (c) EXPECT_TRUE(*c >= 0 && *c <= 1);
    }
    for (const auto& s : rep.codes) {
      if (s.disentanglement) EXPECT_TRUE(*s.disentanglement >= 0 && *s.disentanglement <= 1);
      if (s.completeness) EXPECT_TRUE(*s.completeness >= 0 && *s.completeness <= 1);
    }
  }
}

TEST(Disentanglement, GroupsMustCoverRows) {
  ImportanceMatrix m;
  m.classes = {0, 1};
  m.r.assign(4, std::vector<double>(2, 1.0));
  EXPECT_THROW(DisentanglementCompleteness(m, {3}), Error);
  m.r[0][0] = -1;
  EXPECT_THROW(DisentanglementCompleteness(m, {4}), Error);
}

// --- neighbors and likelihood -----------------------------------------------

std::vector<LatentHierarchy> OnALine(const std::vector<double>& xs, int code) {
  std::vector<LatentHierarchy> out(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) out[i].codes[code - 1].mu[0] = xs[i];
  return out;
}

TEST(Neighbors, ThreePointsOnALine) {
  auto pts = OnALine({0, 1, 3}, 2);
  auto nn = NearestNeighbors(pts, 1, 2, 2);
  ASSERT_EQ(nn.size(), 2u);
  EXPECT_EQ(nn[0].index, 0u);
  EXPECT_EQ(nn[1].index, 2u);
  EXPECT_DOUBLE_EQ(nn[0].distance, 1.0);
  EXPECT_DOUBLE_EQ(nn[1].distance, 2.0);
}

TEST(Neighbors, DuplicateIsFirstAndTiesBreakByIndex) {
  auto pts = OnALine({5, 2, 8, 2, 2}, 1);
  auto nn = NearestNeighbors(pts, 3, 1, 3);
  EXPECT_EQ(nn[0].index, 1u);
  EXPECT_EQ(nn[0].distance, 0.0);
  EXPECT_EQ(nn[1].index, 4u);
  EXPECT_EQ(nn[2].index, 0u);
}

TEST(Neighbors, MatchesBruteForceAndIsSymmetric) {
  auto pop = RandomPopulation(60, 9);
  for (double p : {1.0, 2.0, 3.0}) {
    for (int code = 1; code <= 4; ++code) {
      for (size_t q : {0ul, 17ul, 59ul}) {
        std::vector<std::pair<double, size_t>> brute;
        for (size_t i = 0; i < pop.size(); ++i) {
          if (i == q) continue;
          const double d =
              MinkowskiDistance(pop[q].codes[code - 1].mu, pop[i].codes[code - 1].mu, p);
          EXPECT_EQ(d, MinkowskiDistance(pop[i].codes[code - 1].mu,
                                         pop[q].codes[code - 1].mu, p));
          brute.push_back({d, i});
        }
        std::sort(brute.begin(), brute.end());
        auto nn = NearestNeighbors(pop, q, code, 7, p);
        for (int r = 0; r < 7; ++r) EXPECT_EQ(nn[r].index, brute[r].second);
      }
    }
  }
}

TEST(Neighbors, RejectsBadArguments) {
  auto pop = RandomPopulation(5, 1);
  EXPECT_THROW(NearestNeighbors(pop, 0, 1, 5), Error);
  EXPECT_THROW(NearestNeighbors(pop, 0, 0, 2), Error);
  EXPECT_THROW(NearestNeighbors(pop, 0, 5, 2), Error);
  EXPECT_THROW(NearestNeighbors(pop, 9, 1, 2), Error);
  EXPECT_THROW(NearestNeighbors(pop, 0, 1, 2, 0.5), Error);
}

TEST(Likelihood, StandardScoresWithPlantedExtremes) {
  auto pop = RandomPopulation(50, 4);
  pop.push_back(LatentHierarchy{});  // the prior mode
  std::vector<double> far(kGenomeSize, 0.0);
  far[12] = 10.0;
  pop.push_back(LatentHierarchy::FromFlat(far, LatentProvenance::kManual));
  auto s = SampleLikelihood(pop);
  const double n = static_cast<double>(s.size());
  const double mean = std::accumulate(s.begin(), s.end(), 0.0) / n;
  double var = 0;
  for (double v : s) var += (v - mean) * (v - mean);
  EXPECT_NEAR(mean, 0.0, 1e-9);
  EXPECT_NEAR(std::sqrt(var / n), 1.0, 1e-9);
  EXPECT_EQ(std::min_element(s.begin(), s.end()) - s.begin(), 51);
  EXPECT_EQ(std::max_element(s.begin(), s.end()) - s.begin(), 50);
  // Ordering matches the raw densities.
  for (size_t i = 1; i < pop.size(); ++i) {
    EXPECT_EQ(s[i] < s[0], PriorLogDensity(pop[i]) < PriorLogDensity(pop[0]));
  }
}

TEST(Likelihood, NeedsVariance) {
  EXPECT_THROW(SampleLikelihood(RandomPopulation(1, 1)), Error);
  EXPECT_THROW(SampleLikelihood(std::vector<LatentHierarchy>(3)), Error);
}

// --- traversal --------------------------------------------------------------

TEST(Traversal, LinspaceFramesAndIdentityFrame) {
  auto model = EvalModel(2);
  auto z = RandomPopulation(1, 3)[0];
  auto t = LatentTraversal(*model, z, {2, 1}, -2, 2, 5);
  EXPECT_EQ(t.values, (std::vector<double>{-2, -1, 0, 1, 2}));
  ASSERT_EQ(t.frames.size(), 5u);
  const double own = z.codes[1].sample[1];
  auto self = LatentTraversal(*model, z, {2, 1}, own, own + 1, 2);
  EXPECT_TRUE(torch::equal(self.frames[0].pixels, Decode(*model, z).pixels));
  EXPECT_EQ(DiffSupport(self.frames[0], Decode(*model, z)), 0.0);
  EXPECT_THROW(LatentTraversal(*model, z, {2, 1}, -2, 2, 1), Error);
  EXPECT_THROW(LatentTraversal(*model, z, {2, 10}, -2, 2, 3), Error);
}

TEST(Traversal, DiffSupportCountsChangedForeground) {
  ImageSample a{torch::zeros({4, 4, 4}), std::nullopt, "a"};
  a.pixels.select(2, 3).slice(0, 0, 2).fill_(1.0);  // 8 foreground pixels
  auto b = a;
  b.pixels = a.pixels.clone();
  b.pixels[0][0][0] = 0.5;
  b.pixels[1][1][1] = 0.5;
  b.pixels[3][3][0] = 0.9;  // background in both: ignored
  EXPECT_DOUBLE_EQ(DiffSupport(a, b), 2.0 / 8.0);
}

// --- dataset helpers and exports --------------------------------------------

TEST(EncodeDataset, BatchedMatchesSingleSample) {
  auto model = EvalModel(6);
  SyntheticFactorSpec spec{7, 32, {{"hue", 3}, {"layout", 2}}, "layout", 2};
  auto samples = MakeSyntheticDataset(spec).samples;
  auto batched = EncodeDataset(*model, samples, 3);
  ASSERT_EQ(batched.size(), 7u);
  for (size_t i = 0; i < samples.size(); ++i) {
    auto single = Encode(*model, samples[i], /*deterministic=*/true);
    for (int l = 0; l < kNumCodes; ++l) {
      for (int j = 0; j < kCodeDim; ++j) {
        EXPECT_NEAR(batched[i].codes[l].mu[j], single.codes[l].mu[j], 1e-5);
      }
    }
  }
}

TEST(EvaluateDisentanglement, ReportsFourCodes) {
  auto model = EvalModel(6);
  SyntheticFactorSpec spec{40, 32, {{"hue", 2}, {"layout", 2}}, "hue", 5};
  auto samples = MakeSyntheticDataset(spec).samples;
  GbtOptions options;
  options.rounds = 5;
  auto e = EvaluateDisentanglement(*model, samples, options);
  EXPECT_EQ(e.importance.num_latents(), static_cast<size_t>(kGenomeSize));
  EXPECT_EQ(e.report.codes.size(), 4u);
  samples[3].label.reset();
  EXPECT_THROW(EvaluateDisentanglement(*model, samples, options), Error);
}

TEST(Exports, LatentTableAndAttributionFiles) {
  const auto dir = fs::temp_directory_path() / "dhrl_latent_exports";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto pop = RandomPopulation(3, 1);
  WriteLatentTable(dir / "latents.csv", {"a", "b", "c"}, pop);
  auto rows = ReadCsv(dir / "latents.csv");
  ASSERT_EQ(rows.size(), 1u + 3 * kGenomeSize);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"source_id", "code", "dim", "mu"}));
  EXPECT_EQ(rows[1 + kGenomeSize + 13][0], "b");
  EXPECT_EQ(rows[1 + kGenomeSize + 13][1], "2");
  EXPECT_EQ(rows[1 + kGenomeSize + 13][2], "3");
  EXPECT_EQ(std::stod(rows[1 + kGenomeSize + 13][3]), pop[1].codes[1].mu[3]);
  EXPECT_THROW(WriteLatentTable(dir / "x.csv", {"a"}, pop), Error);

  AttributionMap map;
  map.values = torch::randn({8, 8}, torch::kDouble);
  map.index = {4, 2};
  map.baseline_value = -3;
  map.target_value = 3;
  map.steps = 300;
  WriteAttribution(dir / "ig.png", map);
  auto png = ReadPng(dir / "ig.png");
  EXPECT_EQ(png.sizes(), (std::vector<int64_t>{8, 8, 3}));
  auto meta = nlohmann::json::parse(ReadFile(dir / "ig.json"));
  EXPECT_EQ(meta["code"], 4);
  EXPECT_EQ(meta["steps"], 300);
  EXPECT_EQ(meta["baseline"], -3.0);
}

}  // namespace
}  // namespace dhrl
