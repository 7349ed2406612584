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

#ifndef DHRL_VLAE_H_
#define DHRL_VLAE_H_

#include <torch/torch.h>

#include <array>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <vector>

#include "dhrl/data_pipeline.h"
#include "dhrl/nn_primitives.h"
#include "dhrl/objectives.h"

namespace dhrl {

inline constexpr int kNumCodes = 4;
inline constexpr int kCodeDim = 10;
inline constexpr int kGenomeSize = kNumCodes * kCodeDim;

enum class LatentProvenance { kEncoded, kPriorDraw, kManual };

struct LatentCode {
  std::array<double, kCodeDim> mu{};
  std::array<double, kCodeDim> sample{};
};

// Four ten-dimensional codes, z_1 (shallowest) to z_4 (deepest).
struct LatentHierarchy {
  std::array<LatentCode, kNumCodes> codes{};
  LatentProvenance provenance = LatentProvenance::kManual;

  // Concatenated (z_1 dims, ..., z_4 dims) of the means or samples.
  std::vector<double> FlatMeans() const;
  std::vector<double> FlatSamples() const;
  // Builds a hierarchy whose mean and sample both equal `values` (size 40).
  static LatentHierarchy FromFlat(std::span<const double> values,
                                  LatentProvenance provenance);
  static LatentHierarchy FromCodes(
      const std::vector<std::vector<double>>& codes, LatentProvenance provenance);
};

struct VlaeConfig {
  int64_t image_size = 64;
  // Per-rung base widths N; encoder rung blocks use (N/2, N, N, 2N).
  std::array<int64_t, kNumCodes> channels{16, 64, 256, 1024};
  int64_t se_reduction = 16;
  // Power-iteration rounds per training forward pass.
  int sn_power_iters = 5;

  void Validate() const;
  nlohmann::json ToJson() const;
  static VlaeConfig FromJson(const nlohmann::json& j);
};

struct EncoderOutput {
  std::vector<torch::Tensor> mu;      // kNumCodes x [N, kCodeDim]
  std::vector<torch::Tensor> sample;  // kNumCodes x [N, kCodeDim]
};

class VlaeImpl : public torch::nn::Module {
 public:
  explicit VlaeImpl(const VlaeConfig& config);

  // x: RGBA batch [N, 4, S, S]. With a generator, sample = mu + eps with
  // eps ~ N(0, I) drawn from it; without, sample = mu.
  EncoderOutput Encode(const torch::Tensor& x,
                       std::optional<at::Generator> generator = std::nullopt);
  // z: kNumCodes tensors [N, kCodeDim]. Returns RGBA [N, 4, S, S] in (0,1).
  torch::Tensor Decode(std::span<const torch::Tensor> z);
  // Same, additionally returning the input of every decoder rung U_l
  // (index l-1), so callers can check which pathways a change reaches.
  torch::Tensor DecodeWithTaps(std::span<const torch::Tensor> z,
                               std::vector<torch::Tensor>& rung_inputs);
  // z_flat: [N, kGenomeSize] in (z_1, ..., z_4) order.
  torch::Tensor DecodeFlat(const torch::Tensor& z_flat);

  const VlaeConfig& config() const { return config_; }
  // Spectrally normalized encoder convolutions, rung by rung.
  std::vector<SNConv2d> EncoderConvs() const;

 private:
  struct EncoderRung {
    std::vector<SNConv2d> convs;
    std::vector<torch::nn::BatchNorm2d> norms;
    SqueezeExcite se{nullptr};
    torch::nn::Linear mu{nullptr};
  };
  struct DecoderRung {
    torch::nn::Linear inject_fc{nullptr};
    torch::nn::Conv2d inject_conv{nullptr};
    int64_t inject_channels = 0;
    int64_t grid = 0;
    torch::nn::ConvTranspose2d upsample{nullptr};
    std::vector<torch::nn::Conv2d> convs;
    std::vector<torch::nn::BatchNorm2d> norms;
  };

  VlaeConfig config_;
  std::vector<EncoderRung> encoder_;
  std::vector<DecoderRung> decoder_;
  torch::nn::Conv2d output_{nullptr};
};
TORCH_MODULE(Vlae);

// Single-sample helpers on a model in eval mode.
LatentHierarchy Encode(VlaeImpl& model, const ImageSample& x, bool deterministic,
                       std::optional<at::Generator> generator = std::nullopt);
ImageSample Decode(VlaeImpl& model, const LatentHierarchy& z);

struct VlaeLossReport {
  double pixel = 0;
  double perceptual = 0;
  std::array<double, kNumCodes> mmd{};
  double total = 0;
};

struct VlaeTrainOptions {
  double learning_rate = 1e-4;
  double noise_fraction = 0.10;
  ObjectiveWeights weights;
  uint64_t seed = 0;
};

// Denoising training loop state: corrupt -> encode -> decode -> total loss
// against the clean batch -> one Adam update.
class VlaeTrainer {
 public:
  VlaeTrainer(Vlae model, PerceptualExtractor extractor,
              const VlaeTrainOptions& options);

  VlaeLossReport Step(const torch::Tensor& clean_batch);
  int64_t steps() const { return steps_; }
  void SetLearningRate(double lr);

 private:
  Vlae model_;
  PerceptualExtractor extractor_;
  VlaeTrainOptions options_;
  torch::optim::Adam optimizer_;
  at::Generator generator_;
  int64_t steps_ = 0;
};

void SaveVlae(Vlae& model, const std::filesystem::path& directory,
              nlohmann::json manifest);
// Loads and switches the model to eval mode.
Vlae LoadVlae(const std::filesystem::path& checkpoint,
              nlohmann::json* manifest = nullptr);

}  // namespace dhrl

#endif  // DHRL_VLAE_H_
