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

#ifndef DHRL_NN_PRIMITIVES_H_
#define DHRL_NN_PRIMITIVES_H_

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dhrl/data_pipeline.h"

namespace dhrl {

// Channel recalibration: x * sigmoid(W2 relu(W1 avgpool(x))). Hidden width is
// max(1, channels / reduction).
class SqueezeExciteImpl : public torch::nn::Module {
 public:
  SqueezeExciteImpl(int64_t channels, int64_t reduction = 16);

  torch::Tensor forward(const torch::Tensor& x);
  // Per-channel gates s in (0,1), shape [N, C].
  torch::Tensor Gates(const torch::Tensor& x);

  torch::nn::Linear squeeze{nullptr};
  torch::nn::Linear excite{nullptr};
};
TORCH_MODULE(SqueezeExcite);

// Left/right singular vector estimates carried between calls.
struct SpectralNormState {
  torch::Tensor u;  // [rows]
  torch::Tensor v;  // [cols]
};

// Returns w / sigma_hat(w), with sigma_hat from `power_iters` rounds of power
// iteration started from `state`. An empty state is seeded deterministically
// and warmed up with 100 extra rounds before the first estimate.
// w is treated as 2-D after flattening trailing dimensions. Differentiable in
// w; u and v are not.
torch::Tensor SpectralNormalize(const torch::Tensor& w, int power_iters,
                                SpectralNormState& state);
torch::Tensor SpectralNormalize(const torch::Tensor& w, int power_iters);

// Conv2d whose kernel is spectrally normalized on every forward pass. Power
// iteration only advances in training mode.
class SNConv2dImpl : public torch::nn::Module {
 public:
  SNConv2dImpl(int64_t in_channels, int64_t out_channels, int64_t kernel,
               int64_t stride, int64_t padding, int power_iters = 1);

  torch::Tensor forward(const torch::Tensor& x);
  // Normalized kernel as used by forward (no power-iteration step).
  torch::Tensor EffectiveWeight();

  torch::Tensor weight;
  torch::Tensor bias;
  torch::Tensor u;
  torch::Tensor v;

 private:
  int64_t stride_;
  int64_t padding_;
  int power_iters_;
};
TORCH_MODULE(SNConv2d);

// Sets the RGB of exactly floor(fraction * H * W) distinct pixels to all-0 or
// all-1 (probability 1/2 each). Alpha is untouched.
ImageSample CorruptSaltPepper(const ImageSample& x, double fraction,
                              uint64_t seed);
// Batched form over [N, 4, H, W]; item i uses DeriveSeed(seed, i).
torch::Tensor CorruptSaltPepperBatch(const torch::Tensor& nchw, double fraction,
                                     uint64_t seed);

// Frozen convolutional feature extractor tapped after each pooling stage.
// Stage k: conv3x3 -> ReLU -> conv3x3 -> ReLU -> maxpool2. Tap points index
// the pooling layers in that flattened layer list.
class PerceptualExtractorImpl : public torch::nn::Module {
 public:
  PerceptualExtractorImpl(std::vector<int64_t> stage_channels, uint64_t seed);

  // Input: blended RGB batch [N, 3, H, W]. One map per tap, shallow to deep.
  std::vector<torch::Tensor> Extract(const torch::Tensor& rgb_nchw);
  int64_t MinimumSize() const;
  // Sum over all weights, used to verify that nothing updated them.
  double Checksum();
  const std::vector<int64_t>& stage_channels() const { return stage_channels_; }
  const std::vector<int64_t>& tap_points() const { return tap_points_; }

  // Binary checkpoint plus a JSON manifest at <path>.json.
  void Save(const std::filesystem::path& path);
  static std::shared_ptr<PerceptualExtractorImpl> Load(
      const std::filesystem::path& path);

 private:
  std::vector<int64_t> stage_channels_;
  std::vector<int64_t> tap_points_;
  uint64_t seed_;
  std::vector<torch::nn::Conv2d> convs_;
};
TORCH_MODULE(PerceptualExtractor);

// Default desk-scale extractor: 4 pooling stages (8, 16, 32, 64 channels)
// with weights drawn from a fixed seed.
PerceptualExtractor DefaultPerceptualExtractor();

}  // namespace dhrl

#endif  // DHRL_NN_PRIMITIVES_H_
