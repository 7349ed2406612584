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

#ifndef DHRL_INFOGAN_H_
#define DHRL_INFOGAN_H_

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <vector>

#include "dhrl/data_pipeline.h"

namespace dhrl {

inline constexpr int64_t kGanNoiseDim = 100;

struct GanCode {
  std::vector<float> noise;       // kGanNoiseDim, standard normal
  int category = 0;
  std::vector<float> categorical;  // one-hot, size K
  std::vector<float> continuous;   // uniform(-1, 1)
};

// Batched codes drawn from one generator.
struct GanCodeBatch {
  torch::Tensor noise;       // [N, 100]
  torch::Tensor category;    // [N] int64
  torch::Tensor one_hot;     // [N, K]
  torch::Tensor continuous;  // [N, C]

  torch::Tensor Concatenated() const;
  int64_t size() const { return noise.size(0); }
};

GanCode SampleGanCode(int k_categories, int n_continuous, uint64_t seed);
GanCodeBatch SampleGanCodes(int64_t n, int k_categories, int n_continuous,
                            at::Generator& generator);

struct GanConfig {
  int64_t image_size = 64;
  int categories = 19;
  int continuous = 2;
  // Widest layer of both networks (the 4x4 end); halves per 2x resolution.
  int64_t base_channels = 64;

  void Validate() const;
  nlohmann::json ToJson() const;
  static GanConfig FromJson(const nlohmann::json& j);
};

struct QOutput {
  torch::Tensor category_logits;  // [N, K]
  torch::Tensor mean;             // [N, C]
  torch::Tensor log_variance;     // [N, C]
};

// Generator, discriminator and recognition head Q. Q reuses the
// discriminator's convolutional trunk.
class GanModelImpl : public torch::nn::Module {
 public:
  explicit GanModelImpl(const GanConfig& config);

  torch::Tensor Generate(const GanCodeBatch& codes);
  torch::Tensor Features(const torch::Tensor& images);
  torch::Tensor DiscriminatorLogits(const torch::Tensor& features);
  // D(x) in (0, 1).
  torch::Tensor Discriminate(const torch::Tensor& images);
  QOutput Recognize(const torch::Tensor& features);

  std::vector<torch::Tensor> GeneratorParameters() const;
  std::vector<torch::Tensor> TrunkParameters() const;
  std::vector<torch::Tensor> DiscriminatorHeadParameters() const;
  std::vector<torch::Tensor> QHeadParameters() const;

  const GanConfig& config() const { return config_; }
  int64_t trained_steps() const { return trained_steps_.item<int64_t>(); }
  void AddTrainedSteps(int64_t n) { trained_steps_.add_(n); }

 private:
  GanConfig config_;
  torch::nn::Linear g_input_{nullptr};
  torch::nn::BatchNorm2d g_input_norm_{nullptr};
  std::vector<torch::nn::ConvTranspose2d> g_ups_;
  std::vector<torch::nn::BatchNorm2d> g_norms_;
  std::vector<torch::nn::Conv2d> trunk_convs_;
  std::vector<torch::nn::BatchNorm2d> trunk_norms_;  // none on the first conv
  torch::nn::Linear d_head_{nullptr};
  torch::nn::Linear q_hidden_{nullptr};
  torch::nn::BatchNorm1d q_norm_{nullptr};
  torch::nn::Linear q_out_{nullptr};
  torch::Tensor trained_steps_;
  int64_t g_start_channels_ = 0;
};
TORCH_MODULE(GanModel);

struct InfoTerms {
  torch::Tensor categorical_ce;  // E[-log Q(c_d | x)]
  torch::Tensor continuous_nll;  // E[-log Q(c_c | x)] under factored Gaussian
  // Variational lower bound: H(c) + E[log Q(c|x)].
  torch::Tensor lower_bound;
};

InfoTerms ComputeInfoTerms(const QOutput& q, const GanCodeBatch& codes);

struct GanLossReport {
  double d_loss = 0;
  double g_loss = 0;
  double info_categorical = 0;
  double info_continuous = 0;
  double mi_lower_bound = 0;
  double value = 0;      // V(D, G) on this batch
  double objective = 0;  // V(D, G) - lambda * L_I
};

struct GanTrainOptions {
  double lambda_info = 0.1;
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  uint64_t seed = 0;
};

class GanTrainer {
 public:
  GanTrainer(GanModel model, const GanTrainOptions& options);

  // One alternating update on a real RGBA batch [N, 4, S, S].
  GanLossReport Step(const torch::Tensor& real_batch);

 private:
  GanModel model_;
  GanTrainOptions options_;
  torch::optim::Adam d_optimizer_;
  torch::optim::Adam g_optimizer_;
  at::Generator generator_;
};

// Fraction of generated samples whose Q argmax equals the sampled category.
double QCategoryAccuracy(GanModelImpl& model, int64_t n, uint64_t seed);

// n samples from the trained generator, each labelled with its sampled
// category. Deterministic under seed; the model must be in eval mode.
std::vector<ImageSample> GenerateDecontextualizedDataset(GanModelImpl& model,
                                                         int64_t n,
                                                         uint64_t seed,
                                                         int64_t batch = 256);

void SaveGan(GanModel& model, const std::filesystem::path& directory,
             nlohmann::json manifest);
GanModel LoadGan(const std::filesystem::path& checkpoint,
                 nlohmann::json* manifest = nullptr);

}  // namespace dhrl

#endif  // DHRL_INFOGAN_H_
