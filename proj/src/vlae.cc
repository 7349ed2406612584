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

#include "dhrl/vlae.h"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <random>

#include "dhrl/checkpoint.h"
#include "dhrl/common.h"

namespace dhrl {

namespace {

int64_t Half(int64_t n) { return std::max<int64_t>(1, n / 2); }

void HeInit(torch::Tensor& weight, torch::Tensor& bias, double fan_in) {
  weight.normal_(0.0, std::sqrt(2.0 / fan_in));
  bias.zero_();
}

}  // namespace

std::vector<double> LatentHierarchy::FlatMeans() const {
  std::vector<double> out;
  out.reserve(kGenomeSize);
  for (const auto& code : codes) out.insert(out.end(), code.mu.begin(), code.mu.end());
  return out;
}

std::vector<double> LatentHierarchy::FlatSamples() const {
  std::vector<double> out;
  out.reserve(kGenomeSize);
  for (const auto& code : codes) {
    out.insert(out.end(), code.sample.begin(), code.sample.end());
  }
  return out;
}

LatentHierarchy LatentHierarchy::FromFlat(std::span<const double> values,
                                          LatentProvenance provenance) {
  Require(values.size() == kGenomeSize,
          "expected " + std::to_string(kGenomeSize) + " latent values, got " +
              std::to_string(values.size()));
  LatentHierarchy z;
  z.provenance = provenance;
  for (int l = 0; l < kNumCodes; ++l) {
    for (int j = 0; j < kCodeDim; ++j) {
      z.codes[l].mu[j] = z.codes[l].sample[j] = values[l * kCodeDim + j];
    }
  }
  return z;
}

LatentHierarchy LatentHierarchy::FromCodes(
    const std::vector<std::vector<double>>& codes, LatentProvenance provenance) {
  Require(codes.size() == kNumCodes,
          "expected " + std::to_string(kNumCodes) + " latent codes, got " +
              std::to_string(codes.size()));
  std::vector<double> flat;
  for (const auto& code : codes) {
    Require(code.size() == kCodeDim,
            "each latent code needs " + std::to_string(kCodeDim) +
                " dimensions, got " + std::to_string(code.size()));
    flat.insert(flat.end(), code.begin(), code.end());
  }
  return FromFlat(flat, provenance);
}

void VlaeConfig::Validate() const {
  Require(IsSupportedImageSize(image_size),
          "unsupported VLAE image size " + std::to_string(image_size));
  for (int64_t c : channels) Require(c >= 1, "VLAE channel widths must be >= 1");
  Require(se_reduction >= 1, "se_reduction must be >= 1");
  Require(sn_power_iters >= 1, "sn_power_iters must be >= 1");
}

nlohmann::json VlaeConfig::ToJson() const {
  return {{"image_size", image_size},
          {"channels", channels},
          {"se_reduction", se_reduction},
          {"sn_power_iters", sn_power_iters},
          {"num_codes", kNumCodes},
          {"code_dim", kCodeDim}};
}

VlaeConfig VlaeConfig::FromJson(const nlohmann::json& j) {
  VlaeConfig c;
  c.image_size = j.at("image_size").get<int64_t>();
  c.channels = j.at("channels").get<std::array<int64_t, kNumCodes>>();
  c.se_reduction = j.value("se_reduction", c.se_reduction);
  c.sn_power_iters = j.value("sn_power_iters", c.sn_power_iters);
  c.Validate();
  return c;
}

VlaeImpl::VlaeImpl(const VlaeConfig& config) : config_(config) {
  config_.Validate();
  const int64_t s = config_.image_size;

  int64_t in_channels = 4;
  for (int l = 0; l < kNumCodes; ++l) {
    const int64_t n = config_.channels[l];
    const std::array<int64_t, 4> widths{Half(n), n, n, 2 * n};
    EncoderRung rung;
    const std::string prefix = "G" + std::to_string(l + 1) + "_";
    for (int b = 0; b < 4; ++b) {
      const int64_t stride = b == 3 ? 2 : 1;
      rung.convs.push_back(register_module(
          prefix + "conv" + std::to_string(b),
          SNConv2d(in_channels, widths[b], 3, stride, 1,
                   config_.sn_power_iters)));
      rung.norms.push_back(register_module(prefix + "bn" + std::to_string(b),
                                           torch::nn::BatchNorm2d(widths[b])));
      in_channels = widths[b];
    }
    rung.se = register_module(prefix + "se",
                              SqueezeExcite(in_channels, config_.se_reduction));
    rung.mu = register_module("mu" + std::to_string(l + 1),
                              torch::nn::Linear(in_channels, kCodeDim));
    encoder_.push_back(std::move(rung));
  }

  decoder_.resize(kNumCodes);
  int64_t from_above = 0;
  for (int l = kNumCodes - 1; l >= 0; --l) {
    const int64_t n = config_.channels[l];
    const std::array<int64_t, 4> widths{2 * n, n, n, Half(n)};
    DecoderRung& rung = decoder_[l];
    const std::string idx = std::to_string(l + 1);
    rung.grid = s >> (l + 1);
    rung.inject_channels = Half(n);
    rung.inject_fc = register_module(
        "V" + idx + "_fc",
        torch::nn::Linear(kCodeDim, rung.inject_channels * rung.grid * rung.grid));
    rung.inject_conv = register_module(
        "V" + idx + "_conv",
        torch::nn::Conv2d(torch::nn::Conv2dOptions(rung.inject_channels,
                                                   rung.inject_channels, 3)
                              .padding(1)));
    const int64_t rung_in = from_above + rung.inject_channels;
    rung.upsample = register_module(
        "U" + idx + "_up",
        torch::nn::ConvTranspose2d(
            torch::nn::ConvTranspose2dOptions(rung_in, widths[0], 4)
                .stride(2)
                .padding(1)));
    for (int b = 0; b < 4; ++b) {
      if (b > 0) {
        rung.convs.push_back(register_module(
            "U" + idx + "_conv" + std::to_string(b),
            torch::nn::Conv2d(
                torch::nn::Conv2dOptions(widths[b - 1], widths[b], 3).padding(1))));
      }
      rung.norms.push_back(register_module("U" + idx + "_bn" + std::to_string(b),
                                           torch::nn::BatchNorm2d(widths[b])));
    }
    from_above = widths[3];
  }
  output_ = register_module(
      "output",
      torch::nn::Conv2d(torch::nn::Conv2dOptions(from_above, 4, 3).padding(1)));

  // The default init shrinks activations by about sqrt(3) per layer, which
  // over sixteen decoder layers lets the biases dominate and can leave a
  // narrow rung dead in eval mode. He init keeps the scale.
  torch::NoGradGuard no_grad;
  for (auto& rung : decoder_) {
    HeInit(rung.inject_conv->weight, rung.inject_conv->bias, 9.0 * rung.inject_channels);
    const auto up = rung.upsample->weight;  // [in, out, 4, 4]
    // Each stride-2 output pixel sees a 2x2 subset of the 4x4 taps.
    HeInit(rung.upsample->weight, rung.upsample->bias, 4.0 * up.size(0));
    for (auto& conv : rung.convs) {
      HeInit(conv->weight, conv->bias, 9.0 * conv->weight.size(1));
    }
  }
}

EncoderOutput VlaeImpl::Encode(const torch::Tensor& x,
                               std::optional<at::Generator> generator) {
  const int64_t s = config_.image_size;
  if (x.dim() != 4 || x.size(1) != 4 || x.size(2) != s || x.size(3) != s) {
    Fail(ErrorCode::kInvalidArgument,
         "encode expects [N,4," + std::to_string(s) + "," + std::to_string(s) +
             "] input, got " + c10::str(x.sizes()));
  }
  EncoderOutput out;
  auto h = x;
  for (auto& rung : encoder_) {
    for (size_t b = 0; b < rung.convs.size(); ++b) {
      h = torch::leaky_relu(rung.norms[b]->forward(rung.convs[b]->forward(h)),
                            0.2);
    }
    auto pooled = rung.se->forward(h).mean({2, 3});
    auto mu = rung.mu->forward(pooled);
    out.mu.push_back(mu);
    if (generator) {
      out.sample.push_back(mu + torch::randn(mu.sizes(), *generator, mu.options()));
    } else {
      out.sample.push_back(mu);
    }
  }
  return out;
}

torch::Tensor VlaeImpl::DecodeWithTaps(std::span<const torch::Tensor> z,
                                       std::vector<torch::Tensor>& rung_inputs) {
  if (z.size() != kNumCodes) {
    Fail(ErrorCode::kInvalidArgument,
         "decode expects " + std::to_string(kNumCodes) + " codes, got " +
             std::to_string(z.size()));
  }
  for (const auto& code : z) {
    if (code.dim() != 2 || code.size(1) != kCodeDim) {
      Fail(ErrorCode::kInvalidArgument,
           "each code must be [N," + std::to_string(kCodeDim) + "], got " +
               c10::str(code.sizes()));
    }
  }
  rung_inputs.assign(kNumCodes, torch::Tensor());
  torch::Tensor h;
  for (int l = kNumCodes - 1; l >= 0; --l) {
    auto& rung = decoder_[l];
    auto injected = rung.inject_fc->forward(z[l]).reshape(
        {z[l].size(0), rung.inject_channels, rung.grid, rung.grid});
    injected = rung.inject_conv->forward(injected);
    h = h.defined() ? torch::cat({h, injected}, 1) : injected;
    rung_inputs[l] = h;
    h = torch::relu(rung.norms[0]->forward(rung.upsample->forward(h)));
    for (size_t b = 0; b < rung.convs.size(); ++b) {
      h = torch::relu(rung.norms[b + 1]->forward(rung.convs[b]->forward(h)));
    }
  }
  return torch::sigmoid(output_->forward(h));
}

torch::Tensor VlaeImpl::Decode(std::span<const torch::Tensor> z) {
  std::vector<torch::Tensor> taps;
  return DecodeWithTaps(z, taps);
}

torch::Tensor VlaeImpl::DecodeFlat(const torch::Tensor& z_flat) {
  Require(z_flat.dim() == 2 && z_flat.size(1) == kGenomeSize,
          "DecodeFlat expects [N," + std::to_string(kGenomeSize) + "]");
  auto parts = z_flat.split(kCodeDim, 1);
  return Decode(parts);
}

std::vector<SNConv2d> VlaeImpl::EncoderConvs() const {
  std::vector<SNConv2d> out;
  for (const auto& rung : encoder_) {
    out.insert(out.end(), rung.convs.begin(), rung.convs.end());
  }
  return out;
}

LatentHierarchy Encode(VlaeImpl& model, const ImageSample& x, bool deterministic,
                       std::optional<at::Generator> generator) {
  Require(x.pixels.dim() == 3 && x.pixels.size(0) == model.config().image_size &&
              x.pixels.size(1) == model.config().image_size &&
              x.pixels.size(2) == 4,
          "image size " + c10::str(x.pixels.sizes()) +
              " does not match the model's " +
              std::to_string(model.config().image_size));
  torch::NoGradGuard no_grad;
  if (!deterministic && !generator) {
    generator = at::make_generator<at::CPUGeneratorImpl>(
        std::random_device{}());
  }
  auto batch = x.pixels.permute({2, 0, 1}).unsqueeze(0).to(torch::kFloat);
  auto out = model.Encode(batch, deterministic ? std::nullopt : generator);
  LatentHierarchy z;
  z.provenance = LatentProvenance::kEncoded;
  for (int l = 0; l < kNumCodes; ++l) {
    auto mu = out.mu[l][0].to(torch::kDouble).contiguous();
    auto sample = out.sample[l][0].to(torch::kDouble).contiguous();
    for (int j = 0; j < kCodeDim; ++j) {
      z.codes[l].mu[j] = mu[j].item<double>();
      z.codes[l].sample[j] = sample[j].item<double>();
    }
  }
  return z;
}

ImageSample Decode(VlaeImpl& model, const LatentHierarchy& z) {
  torch::NoGradGuard no_grad;
  const auto flat = z.FlatSamples();
  auto tensor = torch::tensor(flat, torch::kDouble)
                    .to(torch::kFloat)
                    .reshape({1, kGenomeSize});
  return FromBatchItem(model.DecodeFlat(tensor), 0);
}

VlaeTrainer::VlaeTrainer(Vlae model, PerceptualExtractor extractor,
                         const VlaeTrainOptions& options)
    : model_(std::move(model)),
      extractor_(std::move(extractor)),
      options_(options),
      optimizer_(model_->parameters(),
                 torch::optim::AdamOptions(options.learning_rate)),
      generator_(at::make_generator<at::CPUGeneratorImpl>(
          DeriveSeed(options.seed, 0xe95))) {
  options_.weights.Validate();
  Require(options_.noise_fraction >= 0 && options_.noise_fraction <= 1,
          "noise fraction must be in [0,1]");
}

void VlaeTrainer::SetLearningRate(double lr) {
  for (auto& group : optimizer_.param_groups()) {
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
  }
}

VlaeLossReport VlaeTrainer::Step(const torch::Tensor& clean_batch) {
  model_->train();
  const auto clean = clean_batch.to(torch::kFloat);
  const auto corrupted = CorruptSaltPepperBatch(
      clean, options_.noise_fraction,
      DeriveSeed(options_.seed, 0xc0, static_cast<uint64_t>(steps_)));
  auto encoded = model_->Encode(corrupted, generator_);
  auto reconstruction = model_->Decode(encoded.sample);
  std::vector<torch::Tensor> prior;
  for (int l = 0; l < kNumCodes; ++l) {
    prior.push_back(torch::randn({clean.size(0), kCodeDim}, generator_,
                                 clean.options()));
  }
  auto terms = TotalLoss(clean, reconstruction, encoded.sample, prior,
                         options_.weights, *extractor_);

  VlaeLossReport report;
  auto checked = [&](const torch::Tensor& t, const std::string& name) {
    const double value = t.item<double>();
    if (!std::isfinite(value)) {
      Fail(ErrorCode::kNumerical, "non-finite " + name + " loss at step " +
                                      std::to_string(steps_));
    }
    return value;
  };
  report.pixel = checked(terms.pixel, "pixel");
  report.perceptual = checked(terms.perceptual, "perceptual");
  for (int l = 0; l < kNumCodes; ++l) {
    report.mmd[l] = checked(terms.mmd[l], "mmd_z" + std::to_string(l + 1));
  }
  report.total = checked(terms.total, "total");

  optimizer_.zero_grad();
  terms.total.backward();
  optimizer_.step();
  ++steps_;
  return report;
}

void SaveVlae(Vlae& model, const std::filesystem::path& directory,
              nlohmann::json manifest) {
  SaveModule(*model, directory / kModelFile);
  manifest["kind"] = "vlae";
  manifest["architecture"] = model->config().ToJson();
  manifest["architecture_hash"] =
      Sha256Hex(model->config().ToJson().dump()).substr(0, 16);
  WriteManifest(directory, std::move(manifest));
}

Vlae LoadVlae(const std::filesystem::path& checkpoint, nlohmann::json* manifest) {
  const auto directory = CheckpointDirectory(checkpoint);
  auto m = ReadManifest(directory);
  if (m.value("kind", "") != "vlae") {
    Fail(ErrorCode::kInvalidArgument,
         directory.string() + " is not a VLAE checkpoint");
  }
  Vlae model(VlaeConfig::FromJson(m.at("architecture")));
  LoadModule(*model, directory / kModelFile);
  model->eval();
  if (manifest) *manifest = std::move(m);
  return model;
}

}  // namespace dhrl
