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

#include "dhrl/infogan.h"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <numbers>

#include "dhrl/checkpoint.h"
#include "dhrl/common.h"

namespace dhrl {

namespace F = torch::nn::functional;

namespace {

int Log2(int64_t n) {
  int k = 0;
  while ((int64_t{1} << (k + 1)) <= n) ++k;
  return k;
}

std::vector<float> ToVector(const torch::Tensor& t) {
  auto c = t.to(torch::kFloat).contiguous();
  return std::vector<float>(c.data_ptr<float>(), c.data_ptr<float>() + c.numel());
}

}  // namespace

torch::Tensor GanCodeBatch::Concatenated() const {
  return torch::cat({noise, one_hot, continuous}, 1);
}

GanCodeBatch SampleGanCodes(int64_t n, int k_categories, int n_continuous,
                            at::Generator& generator) {
  Require(k_categories >= 2, "k_categories must be >= 2");
  Require(n_continuous >= 0, "n_continuous must be >= 0");
  GanCodeBatch codes;
  codes.noise = torch::randn({n, kGanNoiseDim}, generator);
  codes.category = torch::randint(k_categories, {n}, generator, torch::kLong);
  codes.one_hot = F::one_hot(codes.category, k_categories).to(torch::kFloat);
  codes.continuous = torch::rand({n, n_continuous}, generator) * 2.0 - 1.0;
  return codes;
}

GanCode SampleGanCode(int k_categories, int n_continuous, uint64_t seed) {
  auto generator = at::make_generator<at::CPUGeneratorImpl>(seed);
  auto batch = SampleGanCodes(1, k_categories, n_continuous, generator);
  GanCode code;
  code.noise = ToVector(batch.noise[0]);
  code.category = static_cast<int>(batch.category[0].item<int64_t>());
  code.categorical = ToVector(batch.one_hot[0]);
  code.continuous = ToVector(batch.continuous[0]);
  return code;
}

void GanConfig::Validate() const {
  Require(IsSupportedImageSize(image_size),
          "unsupported GAN image size " + std::to_string(image_size));
  Require(categories >= 2, "GAN needs at least 2 categories");
  Require(continuous >= 0, "continuous code count must be >= 0");
  Require(base_channels >= 8, "GAN base_channels must be >= 8");
}

nlohmann::json GanConfig::ToJson() const {
  return {{"image_size", image_size},
          {"categories", categories},
          {"continuous", continuous},
          {"noise_dim", kGanNoiseDim},
          {"base_channels", base_channels}};
}

GanConfig GanConfig::FromJson(const nlohmann::json& j) {
  GanConfig c;
  c.image_size = j.at("image_size").get<int64_t>();
  c.categories = j.at("categories").get<int>();
  c.continuous = j.at("continuous").get<int>();
  c.base_channels = j.at("base_channels").get<int64_t>();
  c.Validate();
  return c;
}

GanModelImpl::GanModelImpl(const GanConfig& config) : config_(config) {
  config_.Validate();
  const int steps = Log2(config_.image_size / 4);
  const int64_t code_size = kGanNoiseDim + config_.categories + config_.continuous;
  // base_channels is the width next to the image; it doubles toward the 4x4
  // end, capped at 512.
  auto width = [&](int level) {  // level 0 is the 4x4 end
    return std::min<int64_t>(512, config_.base_channels << (steps - 1 - level));
  };

  g_start_channels_ = width(0);
  g_input_ = register_module("g_input",
                             torch::nn::Linear(code_size, g_start_channels_ * 16));
  g_input_norm_ =
      register_module("g_input_bn", torch::nn::BatchNorm2d(g_start_channels_));
  for (int k = 0; k < steps; ++k) {
    const bool last = k == steps - 1;
    const int64_t out = last ? 4 : width(k + 1);
    g_ups_.push_back(register_module(
        "g_up" + std::to_string(k),
        torch::nn::ConvTranspose2d(
            torch::nn::ConvTranspose2dOptions(width(k), out, 4).stride(2).padding(1))));
    if (!last) {
      g_norms_.push_back(register_module("g_bn" + std::to_string(k),
                                         torch::nn::BatchNorm2d(out)));
    }
  }

  int64_t in = 4;
  for (int k = 0; k < steps; ++k) {
    const int64_t out = width(steps - 1 - k);
    trunk_convs_.push_back(register_module(
        "trunk_conv" + std::to_string(k),
        torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 4).stride(2).padding(1))));
    if (k > 0) {
      trunk_norms_.push_back(register_module("trunk_bn" + std::to_string(k),
                                             torch::nn::BatchNorm2d(out)));
    }
    in = out;
  }
  const int64_t features = in * 16;
  d_head_ = register_module("d_head", torch::nn::Linear(features, 1));
  q_hidden_ = register_module("q_hidden", torch::nn::Linear(features, 128));
  q_norm_ = register_module("q_bn", torch::nn::BatchNorm1d(128));
  q_out_ = register_module(
      "q_out", torch::nn::Linear(128, config_.categories + 2 * config_.continuous));
  trained_steps_ = register_buffer("trained_steps", torch::zeros({}, torch::kLong));
}

torch::Tensor GanModelImpl::Generate(const GanCodeBatch& codes) {
  auto h = g_input_->forward(codes.Concatenated())
               .reshape({codes.size(), g_start_channels_, 4, 4});
  h = torch::leaky_relu(g_input_norm_->forward(h), 0.2);
  for (size_t k = 0; k < g_ups_.size(); ++k) {
    h = g_ups_[k]->forward(h);
    if (k < g_norms_.size()) h = torch::leaky_relu(g_norms_[k]->forward(h), 0.2);
  }
  return torch::sigmoid(h);
}

torch::Tensor GanModelImpl::Features(const torch::Tensor& images) {
  auto h = images;
  for (size_t k = 0; k < trunk_convs_.size(); ++k) {
    h = trunk_convs_[k]->forward(h);
    if (k > 0) h = trunk_norms_[k - 1]->forward(h);
    h = torch::leaky_relu(h, 0.2);
  }
  return h.flatten(1);
}

torch::Tensor GanModelImpl::DiscriminatorLogits(const torch::Tensor& features) {
  return d_head_->forward(features).squeeze(1);
}

torch::Tensor GanModelImpl::Discriminate(const torch::Tensor& images) {
  return torch::sigmoid(DiscriminatorLogits(Features(images)));
}

QOutput GanModelImpl::Recognize(const torch::Tensor& features) {
  auto h = torch::leaky_relu(q_norm_->forward(q_hidden_->forward(features)), 0.2);
  auto out = q_out_->forward(h);
  const int64_t k = config_.categories, c = config_.continuous;
  return {out.slice(1, 0, k), out.slice(1, k, k + c),
          out.slice(1, k + c, k + 2 * c).clamp(-8.0, 8.0)};
}

namespace {

template <typename T>
void AppendParameters(const std::vector<T>& modules, std::vector<torch::Tensor>& out) {
  for (const auto& m : modules) {
    for (auto& p : m->parameters()) out.push_back(p);
  }
}

}  // namespace

std::vector<torch::Tensor> GanModelImpl::GeneratorParameters() const {
  std::vector<torch::Tensor> out;
  for (auto& p : g_input_->parameters()) out.push_back(p);
  for (auto& p : g_input_norm_->parameters()) out.push_back(p);
  AppendParameters(g_ups_, out);
  AppendParameters(g_norms_, out);
  return out;
}

std::vector<torch::Tensor> GanModelImpl::TrunkParameters() const {
  std::vector<torch::Tensor> out;
  AppendParameters(trunk_convs_, out);
  AppendParameters(trunk_norms_, out);
  return out;
}

std::vector<torch::Tensor> GanModelImpl::DiscriminatorHeadParameters() const {
  return d_head_->parameters();
}

std::vector<torch::Tensor> GanModelImpl::QHeadParameters() const {
  std::vector<torch::Tensor> out;
  for (auto& p : q_hidden_->parameters()) out.push_back(p);
  for (auto& p : q_norm_->parameters()) out.push_back(p);
  for (auto& p : q_out_->parameters()) out.push_back(p);
  return out;
}

InfoTerms ComputeInfoTerms(const QOutput& q, const GanCodeBatch& codes) {
  InfoTerms terms;
  const int64_t k = q.category_logits.size(1);
  terms.categorical_ce = F::cross_entropy(q.category_logits, codes.category);
  const int64_t c = q.mean.size(1);
  if (c > 0) {
    const auto nll = 0.5 * (std::log(2.0 * std::numbers::pi) + q.log_variance) +
                     (codes.continuous - q.mean).pow(2) /
                         (2.0 * torch::exp(q.log_variance));
    terms.continuous_nll = nll.sum(1).mean();
  } else {
    terms.continuous_nll = torch::zeros({}, q.category_logits.options());
  }
  // H(c): uniform categorical plus c independent uniform(-1, 1).
  const double entropy = std::log(static_cast<double>(k)) + c * std::log(2.0);
  terms.lower_bound = entropy - terms.categorical_ce - terms.continuous_nll;
  return terms;
}

GanTrainer::GanTrainer(GanModel model, const GanTrainOptions& options)
    : model_(std::move(model)),
      options_(options),
      d_optimizer_(
          [&] {
            auto p = model_->TrunkParameters();
            for (auto& t : model_->DiscriminatorHeadParameters()) p.push_back(t);
            for (auto& t : model_->QHeadParameters()) p.push_back(t);
            return p;
          }(),
          torch::optim::AdamOptions(options.learning_rate)
              .betas({options.beta1, options.beta2})),
      g_optimizer_(model_->GeneratorParameters(),
                   torch::optim::AdamOptions(options.learning_rate)
                       .betas({options.beta1, options.beta2})),
      generator_(at::make_generator<at::CPUGeneratorImpl>(
          DeriveSeed(options.seed, 0x6a4))) {
  Require(options_.lambda_info >= 0, "lambda_info must be non-negative");
}

GanLossReport GanTrainer::Step(const torch::Tensor& real_batch) {
  model_->train();
  const auto& cfg = model_->config();
  const auto real = real_batch.to(torch::kFloat);
  const int64_t n = real.size(0);
  auto codes = SampleGanCodes(n, cfg.categories, cfg.continuous, generator_);
  auto fake = model_->Generate(codes);
  const auto ones = torch::ones({n});
  const auto zeros = torch::zeros({n});

  // D and Q: maximize V(D, G), maximize the information lower bound.
  auto real_logits = model_->DiscriminatorLogits(model_->Features(real));
  auto fake_features = model_->Features(fake.detach());
  auto fake_logits = model_->DiscriminatorLogits(fake_features);
  auto d_loss = F::binary_cross_entropy_with_logits(real_logits, ones) +
                F::binary_cross_entropy_with_logits(fake_logits, zeros);
  auto d_info = ComputeInfoTerms(model_->Recognize(fake_features), codes);
  auto d_total = d_loss + options_.lambda_info *
                              (d_info.categorical_ce + d_info.continuous_nll);

  GanLossReport report;
  report.d_loss = d_loss.item<double>();
  report.value = -report.d_loss;  // E[log D(x)] + E[log(1 - D(G(z)))]
  if (!std::isfinite(d_total.item<double>())) {
    Fail(ErrorCode::kNumerical, "non-finite discriminator loss");
  }
  d_optimizer_.zero_grad();
  d_total.backward();
  d_optimizer_.step();

  // G (with Q's estimate): non-saturating adversarial loss minus lambda L_I.
  auto features = model_->Features(fake);
  auto g_loss = F::binary_cross_entropy_with_logits(
      model_->DiscriminatorLogits(features), ones);
  auto info = ComputeInfoTerms(model_->Recognize(features), codes);
  auto g_total =
      g_loss + options_.lambda_info * (info.categorical_ce + info.continuous_nll);
  report.g_loss = g_loss.item<double>();
  report.info_categorical = info.categorical_ce.item<double>();
  report.info_continuous = info.continuous_nll.item<double>();
  report.mi_lower_bound = info.lower_bound.item<double>();
  report.objective = report.value - options_.lambda_info * report.mi_lower_bound;
  if (!std::isfinite(g_total.item<double>()) ||
      !std::isfinite(report.mi_lower_bound)) {
    Fail(ErrorCode::kNumerical, "non-finite generator/info loss");
  }
  g_optimizer_.zero_grad();
  g_total.backward();
  g_optimizer_.step();
  // Gradients that g_total left on D/Q parameters are discarded by the next
  // d_optimizer_.zero_grad().
  model_->AddTrainedSteps(1);
  return report;
}

double QCategoryAccuracy(GanModelImpl& model, int64_t n, uint64_t seed) {
  torch::NoGradGuard no_grad;
  auto generator = at::make_generator<at::CPUGeneratorImpl>(seed);
  const auto& cfg = model.config();
  auto codes = SampleGanCodes(n, cfg.categories, cfg.continuous, generator);
  auto q = model.Recognize(model.Features(model.Generate(codes)));
  return q.category_logits.argmax(1).eq(codes.category).to(torch::kDouble)
      .mean()
      .item<double>();
}

std::vector<ImageSample> GenerateDecontextualizedDataset(GanModelImpl& model,
                                                         int64_t n,
                                                         uint64_t seed,
                                                         int64_t batch) {
  Require(n >= 0, "sample count must be non-negative");
  Require(batch >= 1, "batch must be >= 1");
  if (model.trained_steps() == 0) {
    Fail(ErrorCode::kFailedPrecondition,
         "GAN is untrained; refusing to generate a dataset");
  }
  torch::NoGradGuard no_grad;
  auto generator = at::make_generator<at::CPUGeneratorImpl>(seed);
  const auto& cfg = model.config();
  std::vector<ImageSample> out;
  out.reserve(static_cast<size_t>(n));
  // Codes are drawn up front so the output does not depend on `batch`.
  const auto all = SampleGanCodes(n, cfg.categories, cfg.continuous, generator);
  for (int64_t start = 0; start < n; start += batch) {
    const int64_t count = std::min(batch, n - start);
    GanCodeBatch codes{all.noise.slice(0, start, start + count),
                       all.category.slice(0, start, start + count),
                       all.one_hot.slice(0, start, start + count),
                       all.continuous.slice(0, start, start + count)};
    auto images = model.Generate(codes).clamp(0.0, 1.0);
    for (int64_t i = 0; i < count; ++i) {
      ImageSample sample = FromBatchItem(images, i);
      sample.label = static_cast<int>(codes.category[i].item<int64_t>());
      char id[32];
      std::snprintf(id, sizeof(id), "gen_%06lld",
                    static_cast<long long>(start + i));
      sample.source_id = id;
      out.push_back(std::move(sample));
    }
  }
  return out;
}

void SaveGan(GanModel& model, const std::filesystem::path& directory,
             nlohmann::json manifest) {
  SaveModule(*model, directory / kModelFile);
  manifest["kind"] = "infogan";
  manifest["architecture"] = model->config().ToJson();
  manifest["architecture_hash"] =
      Sha256Hex(model->config().ToJson().dump()).substr(0, 16);
  manifest["K"] = model->config().categories;
  manifest["C_c"] = model->config().continuous;
  manifest["trained_steps"] = model->trained_steps();
  manifest["trained"] = model->trained_steps() > 0;
  WriteManifest(directory, std::move(manifest));
}

GanModel LoadGan(const std::filesystem::path& checkpoint, nlohmann::json* manifest) {
  const auto directory = CheckpointDirectory(checkpoint);
  auto m = ReadManifest(directory);
  if (m.value("kind", "") != "infogan") {
    Fail(ErrorCode::kInvalidArgument,
         directory.string() + " is not an InfoGAN checkpoint");
  }
  GanModel model(GanConfig::FromJson(m.at("architecture")));
  LoadModule(*model, directory / kModelFile);
  model->eval();
  if (manifest) *manifest = std::move(m);
  return model;
}

}  // namespace dhrl
