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

#include "dhrl/objectives.h"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dhrl/common.h"

namespace dhrl {
namespace {

using Matrix = std::vector<std::vector<double>>;

// Explicit double-loop MMD oracle.
double MmdOracle(const Matrix& a, const Matrix& b,
                 const std::vector<double>& bandwidths) {
  auto mean_kernel = [](const Matrix& p, const Matrix& q, double sigma2) {
    double sum = 0;
    for (const auto& x : p) {
      for (const auto& y : q) {
        double d2 = 0;
        for (size_t k = 0; k < x.size(); ++k) d2 += (x[k] - y[k]) * (x[k] - y[k]);
        sum += std::exp(-d2 / (2 * sigma2));
      }
    }
    return sum / (p.size() * q.size());
  };
  double total = 0;
  for (double s : bandwidths) {
    total += mean_kernel(a, a, s) + mean_kernel(b, b, s) - 2 * mean_kernel(a, b, s);
  }
  return total;
}

Matrix RandomSet(std::mt19937_64& rng, int n, int d, double shift = 0) {
  std::normal_distribution<double> normal;
  Matrix m(n, std::vector<double>(d));
  for (auto& row : m)
    for (auto& v : row) v = normal(rng) + shift;
  return m;
}

torch::Tensor ToTensor(const Matrix& m) {
  std::vector<double> flat;
  for (const auto& row : m) flat.insert(flat.end(), row.begin(), row.end());
  return torch::tensor(flat, torch::kDouble)
      .reshape({static_cast<int64_t>(m.size()), static_cast<int64_t>(m[0].size())});
}

// Eq. 6 oracle over an [C, H, W] map: sum over locations of F_a F_b / (H W).
Matrix GramOracle(const torch::Tensor& map) {
  auto f = map.to(torch::kDouble).contiguous();
  const int64_t c = f.size(0), h = f.size(1), w = f.size(2);
  auto acc = f.accessor<double, 3>();
  Matrix g(c, std::vector<double>(c, 0.0));
  for (int64_t a = 0; a < c; ++a)
    for (int64_t b = 0; b < c; ++b) {
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) g[a][b] += acc[a][y][x] * acc[b][y][x];
      g[a][b] /= static_cast<double>(h * w);
    }
  return g;
}

double PerceptualOracle(const std::vector<torch::Tensor>& fx,
                        const std::vector<torch::Tensor>& fy) {
  double total = 0;
  for (size_t l = 0; l < fx.size(); ++l) {
    double layer = 0;
    int64_t count = 0;
    for (int64_t n = 0; n < fx[l].size(0); ++n) {
      auto gx = GramOracle(fx[l][n]);
      auto gy = GramOracle(fy[l][n]);
      for (size_t a = 0; a < gx.size(); ++a)
        for (size_t b = 0; b < gx.size(); ++b) {
          layer += (gx[a][b] - gy[a][b]) * (gx[a][b] - gy[a][b]);
          ++count;
        }
    }
    total += layer / count;
  }
  return total / fx.size();
}

TEST(PixelLoss, Examples) {
  auto x = torch::tensor({0.0, 1.0});
  auto y = torch::tensor({1.0, 1.0});
  EXPECT_DOUBLE_EQ(PixelLoss(x, x).item<double>(), 0.0);
  EXPECT_DOUBLE_EQ(PixelLoss(x, y).item<double>(), 0.5);
  EXPECT_DOUBLE_EQ(PixelLoss(y, x).item<double>(), PixelLoss(x, y).item<double>());
  EXPECT_THROW(PixelLoss(x, torch::zeros({3})), Error);
}

TEST(GramMatrix, HandExample) {
  // Two channels over two locations: (1,2) and (3,4).
  auto f = torch::tensor({1.0, 3.0, 2.0, 4.0}, torch::kDouble).reshape({2, 1, 2});
  auto g = GramMatrix(f);
  EXPECT_EQ(g[0][0].item<double>(), 5.0);
  EXPECT_EQ(g[0][1].item<double>(), 7.0);
  EXPECT_EQ(g[1][0].item<double>(), 7.0);
  EXPECT_EQ(g[1][1].item<double>(), 10.0);
}

TEST(GramMatrix, ZeroMapAndSymmetry) {
  EXPECT_EQ(GramMatrix(torch::zeros({3, 4, 4})).abs().max().item<float>(), 0.0f);
  torch::manual_seed(0);
  auto g = GramMatrix(torch::randn({5, 6, 7, 7}));
  EXPECT_EQ((g - g.transpose(1, 2)).abs().max().item<float>(), 0.0f);
  auto eig = torch::linalg_eigvalsh(g.to(torch::kDouble));
  EXPECT_GE(eig.min().item<double>(), -1e-9);
}

TEST(GramMatrix, MatchesDirectSummation) {
  torch::manual_seed(1);
  auto f = torch::randn({4, 8, 8}, torch::kDouble);
  auto g = GramMatrix(f);
  auto oracle = GramOracle(f);
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      EXPECT_NEAR(g[a][b].item<double>(), oracle[a][b], 1e-12);
}

TEST(PerceptualLoss, MatchesLoopOracle) {
  torch::manual_seed(2);
  std::vector<torch::Tensor> fx, fy;
  for (int l = 0; l < 3; ++l) {
    fx.push_back(torch::randn({2, 4, 8 >> l, 8 >> l}, torch::kDouble));
    fy.push_back(torch::randn({2, 4, 8 >> l, 8 >> l}, torch::kDouble));
  }
  const double got = PerceptualLossFromFeatures(fx, fy).item<double>();
  const double want = PerceptualOracle(fx, fy);
  EXPECT_LE(std::fabs(got - want), 1e-5 * std::fabs(want));
  EXPECT_EQ(PerceptualLossFromFeatures(fx, fx).item<double>(), 0.0);
}

TEST(PerceptualLoss, ExtractorRouteIsZeroOnIdenticalInputs) {
  auto extractor = DefaultPerceptualExtractor();
  auto x = torch::rand({2, 3, 32, 32});
  EXPECT_EQ(PerceptualLoss(x, x, *extractor).item<float>(), 0.0f);
  auto y = torch::rand({2, 3, 32, 32});
  EXPECT_GT(PerceptualLoss(x, y, *extractor).item<float>(), 0.0f);
}

TEST(PerceptualLoss, IdentityExtractorIgnoresPosition) {
  torch::manual_seed(3);
  auto x = torch::rand({1, 3, 8, 8}, torch::kDouble);
  // Permute 2x2 blocks of locations.
  auto blocks = x.reshape({1, 3, 4, 2, 4, 2});
  auto shuffled = blocks.flip({2}).roll(1, 4).reshape({1, 3, 8, 8});
  std::vector<torch::Tensor> fx{x}, fy{shuffled};
  EXPECT_GT(PixelLoss(x, shuffled).item<double>(), 0.0);
  EXPECT_LT(PerceptualLossFromFeatures(fx, fy).item<double>(), 1e-15);
}

TEST(MkMmd, IdenticalSetsGiveZero) {
  std::mt19937_64 rng(1);
  auto a = ToTensor(RandomSet(rng, 32, 10));
  EXPECT_EQ(MkMmd(a, a, DefaultMmdBandwidths()).item<double>(), 0.0);
  auto perm = a.index_select(0, torch::randperm(32, torch::kLong));
  EXPECT_LE(std::fabs(MkMmd(a, perm, DefaultMmdBandwidths()).item<double>()), 1e-9);
}

TEST(MkMmd, SinglePointHandValue) {
  auto a = torch::zeros({1, 1}, torch::kDouble);
  auto b = torch::ones({1, 1}, torch::kDouble);
  std::vector<double> bw{0.5};
  EXPECT_NEAR(MkMmd(a, b, bw).item<double>(), 2.0 - 2.0 * std::exp(-1.0), 1e-15);
  EXPECT_NEAR(MkMmd(a, b, bw).item<double>(), 1.26424, 1e-5);
}

TEST(MkMmd, MatchesLoopOracleOnRandomSets) {
  std::mt19937_64 rng(7);
  auto a = RandomSet(rng, 64, 10);
  auto b = RandomSet(rng, 64, 10, 0.3);
  const auto bw = DefaultMmdBandwidths();
  const double got = MkMmd(ToTensor(a), ToTensor(b), bw).item<double>();
  const double want = MmdOracle(a, b, bw);
  EXPECT_LE(std::fabs(got - want), 1e-6 * std::fabs(want));
}

TEST(MkMmd, SymmetricAndPermutationInvariant) {
  std::mt19937_64 rng(8);
  auto a = ToTensor(RandomSet(rng, 20, 5));
  auto b = ToTensor(RandomSet(rng, 30, 5, 1.0));
  const auto bw = DefaultMmdBandwidths();
  const double ab = MkMmd(a, b, bw).item<double>();
  EXPECT_NEAR(MkMmd(b, a, bw).item<double>(), ab, 1e-12);
  auto pa = a.index_select(0, torch::randperm(20, torch::kLong));
  auto pb = b.index_select(0, torch::randperm(30, torch::kLong));
  EXPECT_NEAR(MkMmd(pa, pb, bw).item<double>(), ab, 1e-12);
}

TEST(MkMmd, DimensionMismatchIsAnError) {
  EXPECT_THROW(MkMmd(torch::zeros({3, 2}), torch::zeros({3, 4}), DefaultMmdBandwidths()),
               Error);
}

TEST(MkMmd, ShiftedDistributionScoresHigherPerBandwidth) {
  std::mt19937_64 rng(9);
  auto p = ToTensor(RandomSet(rng, 512, 10));
  auto q = ToTensor(RandomSet(rng, 512, 10));
  auto shifted = ToTensor(RandomSet(rng, 512, 10, 2.0));
  for (double s : DefaultMmdBandwidths()) {
    std::vector<double> bw{s};
    const double same = MkMmd(p, q, bw).item<double>();
    const double diff = MkMmd(p, shifted, bw).item<double>();
    // Tiny bandwidths see only the diagonal for both pairs, so they tie.
    EXPECT_LE(same, diff + 1e-12) << "sigma^2=" << s;
    if (s >= 0.1) EXPECT_LT(same, diff) << "sigma^2=" << s;
  }
  EXPECT_LT(MkMmd(p, q, DefaultMmdBandwidths()).item<double>(),
            MkMmd(p, shifted, DefaultMmdBandwidths()).item<double>());
}

TEST(ObjectiveWeights, DefaultsAndValidation) {
  ObjectiveWeights w;
  EXPECT_EQ(w.alpha, 1e-6);
  EXPECT_EQ(w.beta, 1e5);
  EXPECT_EQ(w.lambda_mmd, 1.0);
  EXPECT_EQ(w.bandwidths.size(), 19u);
  EXPECT_NO_THROW(w.Validate());
  w.bandwidths = {1.0, 0.5};
  EXPECT_THROW(w.Validate(), Error);
  w.bandwidths = {1.0};
  w.alpha = -1;
  EXPECT_THROW(w.Validate(), Error);
}

struct LossFixture {
  torch::Tensor x, x_hat;
  std::vector<torch::Tensor> latents, prior;
  PerceptualExtractor extractor{std::vector<int64_t>{4, 8, 8}, 5};
};

LossFixture MakeFixture() {
  torch::manual_seed(11);
  LossFixture f;
  f.extractor->to(torch::kDouble);
  f.x = torch::rand({2, 4, 8, 8}, torch::kDouble);
  f.x_hat = torch::rand({2, 4, 8, 8}, torch::kDouble);
  for (int i = 0; i < 4; ++i) {
    f.latents.push_back(torch::randn({2, 10}, torch::kDouble) + 0.5);
    f.prior.push_back(torch::randn({2, 10}, torch::kDouble));
  }
  return f;
}

TEST(TotalLoss, ZeroWeightsGiveZero) {
  auto f = MakeFixture();
  ObjectiveWeights w;
  w.alpha = w.beta = w.lambda_mmd = 0;
  auto terms = TotalLoss(f.x, f.x_hat, f.latents, f.prior, w, *f.extractor);
  EXPECT_EQ(terms.total.item<double>(), 0.0);
}

TEST(TotalLoss, EqualsRecombinationOfIndependentTerms) {
  auto f = MakeFixture();
  ObjectiveWeights w;
  auto terms = TotalLoss(f.x, f.x_hat, f.latents, f.prior, w, *f.extractor);
  ASSERT_EQ(terms.mmd.size(), 4u);

  auto to_matrix = [](const torch::Tensor& t) {
    Matrix m(t.size(0), std::vector<double>(t.size(1)));
    for (int64_t i = 0; i < t.size(0); ++i)
      for (int64_t j = 0; j < t.size(1); ++j) m[i][j] = t[i][j].item<double>();
    return m;
  };
  double mmd = 0;
  for (int i = 0; i < 4; ++i) {
    const double oracle =
        MmdOracle(to_matrix(f.latents[i]), to_matrix(f.prior[i]), w.bandwidths);
    EXPECT_NEAR(terms.mmd[i].item<double>(), oracle, 1e-9 * std::fabs(oracle));
    mmd += oracle;
  }
  const double pixel = (f.x - f.x_hat).pow(2).sum().item<double>() / f.x.numel();
  const auto blend = [](const torch::Tensor& t) {
    return t.slice(1, 3, 4) * t.slice(1, 0, 3) + (1 - t.slice(1, 3, 4));
  };
  const double perceptual = PerceptualOracle(f.extractor->Extract(blend(f.x)),
                                             f.extractor->Extract(blend(f.x_hat)));
  const double want = w.lambda_mmd * mmd + w.alpha * perceptual + w.beta * pixel;
  EXPECT_LE(std::fabs(terms.total.item<double>() - want), 1e-7 * std::fabs(want));
  EXPECT_GE(terms.pixel.item<double>(), 0.0);
  EXPECT_GE(terms.perceptual.item<double>(), 0.0);
  for (const auto& m : terms.mmd) EXPECT_GE(m.item<double>(), -1e-9);
}

// Central-difference check of d term / d x_hat on a handful of coordinates.
void CheckGradient(const std::function<torch::Tensor(const torch::Tensor&)>& term,
                   const torch::Tensor& at, const std::string& name) {
  auto x = at.detach().clone().requires_grad_(true);
  term(x).backward();
  auto grad = x.grad().flatten();
  auto base = at.detach().flatten();
  const double h = 1e-6;
  for (int64_t i = 0; i < base.numel(); i += std::max<int64_t>(1, base.numel() / 23)) {
    auto plus = base.clone(), minus = base.clone();
    plus[i] += h;
    minus[i] -= h;
    torch::NoGradGuard no_grad;
    const double numeric = (term(plus.reshape(at.sizes())).item<double>() -
                            term(minus.reshape(at.sizes())).item<double>()) /
                           (2 * h);
    const double analytic = grad[i].item<double>();
    EXPECT_LE(std::fabs(analytic - numeric),
              1e-3 * std::max(std::fabs(numeric), 1e-6))
        << name << " coordinate " << i;
  }
}

TEST(Objectives, GradientsMatchFiniteDifferences) {
  auto f = MakeFixture();
  CheckGradient([&](const torch::Tensor& xh) { return PixelLoss(f.x, xh); },
                f.x_hat, "pixel");
  auto blend = [](const torch::Tensor& t) { return AlphaBlendWhiteBatch(t); };
  CheckGradient(
      [&](const torch::Tensor& xh) {
        return PerceptualLoss(blend(f.x), blend(xh), *f.extractor);
      },
      f.x_hat, "perceptual");
  CheckGradient(
      [&](const torch::Tensor& z) {
        return MkMmd(z, f.prior[0], DefaultMmdBandwidths());
      },
      f.latents[0], "mmd");
}

}  // namespace
}  // namespace dhrl
