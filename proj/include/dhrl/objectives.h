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

#ifndef DHRL_OBJECTIVES_H_
#define DHRL_OBJECTIVES_H_

#include <torch/torch.h>

#include <functional>
#include <span>
#include <vector>

#include "dhrl/nn_primitives.h"

namespace dhrl {

// Kernel bandwidths (sigma^2) of the multi-kernel MMD.
std::vector<double> DefaultMmdBandwidths();

struct ObjectiveWeights {
  double alpha = 1e-6;      // perceptual
  double beta = 1e5;        // pixel-wise
  double lambda_mmd = 1.0;  // per latent code
  std::vector<double> bandwidths = DefaultMmdBandwidths();

  void Validate() const;
};

// Mean over all elements of (x - x_hat)^2.
torch::Tensor PixelLoss(const torch::Tensor& x, const torch::Tensor& x_hat);

// Gram matrix normalized by the number of spatial locations. Accepts one map
// [C, H, W] (returns [C, C]) or a batch [N, C, H, W] (returns [N, C, C]).
torch::Tensor GramMatrix(const torch::Tensor& feature_map);

// Mean over layers of the mean squared Gram difference.
torch::Tensor PerceptualLossFromFeatures(std::span<const torch::Tensor> fx,
                                         std::span<const torch::Tensor> fx_hat);
// Inputs are blended RGB batches [N, 3, H, W].
torch::Tensor PerceptualLoss(const torch::Tensor& x_rgb,
                             const torch::Tensor& x_hat_rgb,
                             PerceptualExtractorImpl& extractor);

// Biased multi-kernel MMD between row sets a [n, d] and b [m, d]: the sum
// over bandwidths of mean k(a,a) + mean k(b,b) - 2 mean k(a,b) with
// k(z, z') = exp(-|z - z'|^2 / (2 sigma^2)).
torch::Tensor MkMmd(const torch::Tensor& a, const torch::Tensor& b,
                    std::span<const double> bandwidths);

struct LossTerms {
  torch::Tensor pixel;
  torch::Tensor perceptual;
  std::vector<torch::Tensor> mmd;  // one per latent code
  torch::Tensor total;
};

// lambda * sum_i MkMmd(latents[i], prior_draws[i]) + alpha * perceptual +
// beta * pixel. x and x_hat are RGBA batches [N, 4, H, W]; the perceptual
// term compares their white-blended RGB.
LossTerms TotalLoss(const torch::Tensor& x, const torch::Tensor& x_hat,
                    std::span<const torch::Tensor> latents,
                    std::span<const torch::Tensor> prior_draws,
                    const ObjectiveWeights& weights,
                    PerceptualExtractorImpl& extractor);

}  // namespace dhrl

#endif  // DHRL_OBJECTIVES_H_
