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

#include <algorithm>

#include "dhrl/common.h"
#include "dhrl/data_pipeline.h"

namespace dhrl {

std::vector<double> DefaultMmdBandwidths() {
  return {1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1,   5,   10,  15,
          20,   25,   30,   35,   100,  1e3,  1e4, 1e5, 1e6};
}

void ObjectiveWeights::Validate() const {
  Require(alpha >= 0 && beta >= 0 && lambda_mmd >= 0,
          "objective weights must be non-negative");
  Require(!bandwidths.empty(), "at least one MMD bandwidth is required");
  for (size_t i = 0; i < bandwidths.size(); ++i) {
    Require(bandwidths[i] > 0, "MMD bandwidths must be positive");
    if (i > 0) {
      Require(bandwidths[i] > bandwidths[i - 1],
              "MMD bandwidths must be sorted ascending");
    }
  }
}

torch::Tensor PixelLoss(const torch::Tensor& x, const torch::Tensor& x_hat) {
  Require(x.sizes() == x_hat.sizes(), "pixel_loss: shape mismatch");
  return (x - x_hat).pow(2).mean();
}

torch::Tensor GramMatrix(const torch::Tensor& feature_map) {
  if (feature_map.dim() == 3) {
    return GramMatrix(feature_map.unsqueeze(0)).squeeze(0);
  }
  Require(feature_map.dim() == 4, "gram_matrix expects [C,H,W] or [N,C,H,W]");
  const int64_t n = feature_map.size(0), c = feature_map.size(1);
  const int64_t locations = feature_map.size(2) * feature_map.size(3);
  const auto flat = feature_map.reshape({n, c, locations});
  return torch::bmm(flat, flat.transpose(1, 2)) /
         static_cast<double>(locations);
}

torch::Tensor PerceptualLossFromFeatures(
    std::span<const torch::Tensor> fx, std::span<const torch::Tensor> fx_hat) {
  Require(fx.size() == fx_hat.size() && !fx.empty(),
          "perceptual_loss: layer count mismatch");
  torch::Tensor total;
  for (size_t l = 0; l < fx.size(); ++l) {
    const auto term = (GramMatrix(fx[l]) - GramMatrix(fx_hat[l])).pow(2).mean();
    total = total.defined() ? total + term : term;
  }
  return total / static_cast<double>(fx.size());
}

torch::Tensor PerceptualLoss(const torch::Tensor& x_rgb,
                             const torch::Tensor& x_hat_rgb,
                             PerceptualExtractorImpl& extractor) {
  Require(x_rgb.sizes() == x_hat_rgb.sizes(), "perceptual_loss: shape mismatch");
  const auto fx = extractor.Extract(x_rgb);
  const auto fx_hat = extractor.Extract(x_hat_rgb);
  return PerceptualLossFromFeatures(fx, fx_hat);
}

torch::Tensor MkMmd(const torch::Tensor& a, const torch::Tensor& b,
                    std::span<const double> bandwidths) {
  Require(a.dim() == 2 && b.dim() == 2, "mk_mmd expects [n,d] sets");
  Require(a.size(0) > 0 && b.size(0) > 0, "mk_mmd needs non-empty sets");
  Require(a.size(1) == b.size(1), "mk_mmd: dimension mismatch (" +
                                      std::to_string(a.size(1)) + " vs " +
                                      std::to_string(b.size(1)) + ")");
  Require(!bandwidths.empty(), "mk_mmd needs at least one bandwidth");
  auto sq_dist = [](const torch::Tensor& p, const torch::Tensor& q) {
    return (p.unsqueeze(1) - q.unsqueeze(0)).pow(2).sum(-1);
  };
  const auto d_aa = sq_dist(a, a);
  const auto d_bb = sq_dist(b, b);
  const auto d_ab = sq_dist(a, b);
  torch::Tensor total = torch::zeros({}, a.options());
  for (double sigma2 : bandwidths) {
    const double scale = -1.0 / (2.0 * sigma2);
    total = total + torch::exp(d_aa * scale).mean() +
            torch::exp(d_bb * scale).mean() -
            2.0 * torch::exp(d_ab * scale).mean();
  }
  return total;
}

LossTerms TotalLoss(const torch::Tensor& x, const torch::Tensor& x_hat,
                    std::span<const torch::Tensor> latents,
                    std::span<const torch::Tensor> prior_draws,
                    const ObjectiveWeights& weights,
                    PerceptualExtractorImpl& extractor) {
  Require(latents.size() == prior_draws.size(),
          "one prior draw set per latent code is required");
  LossTerms terms;
  terms.pixel = PixelLoss(x, x_hat);
  terms.perceptual = PerceptualLoss(AlphaBlendWhiteBatch(x),
                                    AlphaBlendWhiteBatch(x_hat), extractor);
  auto mmd_sum = torch::zeros({}, x.options());
  for (size_t i = 0; i < latents.size(); ++i) {
    terms.mmd.push_back(MkMmd(latents[i], prior_draws[i], weights.bandwidths));
    mmd_sum = mmd_sum + terms.mmd.back();
  }
  terms.total = weights.lambda_mmd * mmd_sum +
                weights.alpha * terms.perceptual + weights.beta * terms.pixel;
  return terms;
}

}  // namespace dhrl
