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

#include "dhrl/nn_primitives.h"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>

#include "dhrl/common.h"

namespace dhrl {

namespace {

constexpr uint64_t kSpectralInitSeed = 0x5eed5eedULL;
// Extra iterations run once when the singular vectors are first created.
// Random rectangular matrices can have sigma_2 / sigma_1 above 0.99, and 20
// cold rounds then underestimate sigma_1 by several percent.
constexpr int kSpectralWarmupIters = 100;

torch::Tensor Normalized(const torch::Tensor& x) {
  return x / (x.norm() + 1e-12);
}

}  // namespace

SqueezeExciteImpl::SqueezeExciteImpl(int64_t channels, int64_t reduction) {
  Require(channels >= 1 && reduction >= 1, "invalid squeeze-excite sizing");
  const int64_t hidden = std::max<int64_t>(1, channels / reduction);
  squeeze = register_module("squeeze", torch::nn::Linear(channels, hidden));
  excite = register_module("excite", torch::nn::Linear(hidden, channels));
}

torch::Tensor SqueezeExciteImpl::Gates(const torch::Tensor& x) {
  auto pooled = x.mean({2, 3});
  return torch::sigmoid(excite(torch::relu(squeeze(pooled))));
}

torch::Tensor SqueezeExciteImpl::forward(const torch::Tensor& x) {
  return x * Gates(x).unsqueeze(-1).unsqueeze(-1);
}

torch::Tensor SpectralNormalize(const torch::Tensor& w, int power_iters,
                                SpectralNormState& state) {
  Require(power_iters >= 1, "power_iters must be >= 1");
  Require(w.dim() >= 1 && w.numel() > 0, "empty weight");
  const auto matrix = w.reshape({w.size(0), -1});
  {
    torch::NoGradGuard no_grad;
    if (matrix.abs().max().item<double>() == 0.0) {
      Fail(ErrorCode::kInvalidArgument,
           "spectral normalization of a zero matrix is undefined");
    }
    const auto detached = matrix.detach();
    if (!state.u.defined() || state.u.size(0) != matrix.size(0)) {
      auto gen = at::make_generator<at::CPUGeneratorImpl>(kSpectralInitSeed);
      state.u = Normalized(torch::randn({matrix.size(0)}, gen,
                                        detached.options()));
      for (int i = 0; i < kSpectralWarmupIters; ++i) {
        state.v = Normalized(torch::mv(detached.t(), state.u));
        state.u = Normalized(torch::mv(detached, state.v));
      }
    }
    for (int i = 0; i < power_iters; ++i) {
      state.v = Normalized(torch::mv(detached.t(), state.u));
      state.u = Normalized(torch::mv(detached, state.v));
    }
  }
  const auto sigma = torch::dot(state.u, torch::mv(matrix, state.v));
  return w / sigma;
}

torch::Tensor SpectralNormalize(const torch::Tensor& w, int power_iters) {
  SpectralNormState state;
  return SpectralNormalize(w, power_iters, state);
}

SNConv2dImpl::SNConv2dImpl(int64_t in_channels, int64_t out_channels,
                           int64_t kernel, int64_t stride, int64_t padding,
                           int power_iters)
    : stride_(stride), padding_(padding), power_iters_(power_iters) {
  // Same initialization as torch::nn::Conv2d.
  torch::nn::Conv2d reference(
      torch::nn::Conv2dOptions(in_channels, out_channels, kernel));
  weight = register_parameter("weight", reference->weight.detach().clone());
  bias = register_parameter("bias", reference->bias.detach().clone());
  SpectralNormState state;
  torch::NoGradGuard no_grad;
  SpectralNormalize(weight, 5, state);
  u = register_buffer("u", state.u);
  v = register_buffer("v", state.v);
}

torch::Tensor SNConv2dImpl::forward(const torch::Tensor& x) {
  torch::Tensor kernel;
  if (is_training()) {
    SpectralNormState state{u.detach().clone(), v.detach().clone()};
    kernel = SpectralNormalize(weight, power_iters_, state);
    torch::NoGradGuard no_grad;
    u.copy_(state.u);
    v.copy_(state.v);
  } else {
    kernel = EffectiveWeight();
  }
  return torch::conv2d(x, kernel, bias, stride_, padding_);
}

torch::Tensor SNConv2dImpl::EffectiveWeight() {
  const auto matrix = weight.reshape({weight.size(0), -1});
  const auto sigma = torch::dot(u.detach(), torch::mv(matrix, v.detach()));
  return weight / sigma;
}

namespace {

void CorruptInPlace(torch::TensorAccessor<float, 3> hwc_or_chw, bool chw,
                    int64_t height, int64_t width, double fraction,
                    uint64_t seed) {
  const int64_t total = height * width;
  const auto count = static_cast<int64_t>(std::floor(fraction * total));
  if (count <= 0) return;
  std::mt19937_64 rng(seed);
  std::vector<int64_t> order(static_cast<size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  // Partial Fisher-Yates: the first `count` entries are a uniform sample
  // without replacement.
  for (int64_t i = 0; i < count; ++i) {
    const uint64_t span = static_cast<uint64_t>(total - i);
    const int64_t j = i + static_cast<int64_t>(rng() % span);
    std::swap(order[i], order[j]);
    const float value = (rng() >> 63) ? 1.0f : 0.0f;
    const int64_t y = order[i] / width, x = order[i] % width;
    for (int c = 0; c < 3; ++c) {
      if (chw) {
        hwc_or_chw[c][y][x] = value;
      } else {
        hwc_or_chw[y][x][c] = value;
      }
    }
  }
}

}  // namespace

ImageSample CorruptSaltPepper(const ImageSample& x, double fraction,
                              uint64_t seed) {
  Require(fraction >= 0.0 && fraction <= 1.0, "fraction must be in [0,1]");
  ImageSample out = x;
  out.pixels = x.pixels.to(torch::kFloat).clone().contiguous();
  CorruptInPlace(out.pixels.accessor<float, 3>(), /*chw=*/false,
                 out.pixels.size(0), out.pixels.size(1), fraction, seed);
  return out;
}

torch::Tensor CorruptSaltPepperBatch(const torch::Tensor& nchw, double fraction,
                                     uint64_t seed) {
  Require(fraction >= 0.0 && fraction <= 1.0, "fraction must be in [0,1]");
  auto out = nchw.detach().to(torch::kFloat).clone().contiguous();
  auto acc = out.accessor<float, 4>();
  for (int64_t i = 0; i < out.size(0); ++i) {
    CorruptInPlace(acc[i], /*chw=*/true, out.size(2), out.size(3), fraction,
                   DeriveSeed(seed, static_cast<uint64_t>(i)));
  }
  return out;
}

PerceptualExtractorImpl::PerceptualExtractorImpl(
    std::vector<int64_t> stage_channels, uint64_t seed)
    : stage_channels_(std::move(stage_channels)), seed_(seed) {
  Require(!stage_channels_.empty(), "extractor needs at least one stage");
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  int64_t in = 3;
  int64_t layer_index = 0;
  for (int64_t out : stage_channels_) {
    for (int k = 0; k < 2; ++k) {
      const int64_t conv_in = k == 0 ? in : out;
      torch::nn::Conv2d conv(
          torch::nn::Conv2dOptions(conv_in, out, 3).padding(1));
      {
        torch::NoGradGuard no_grad;
        conv->weight.copy_(torch::randn(conv->weight.sizes(), gen) *
                           std::sqrt(2.0 / (conv_in * 9)));
        conv->bias.zero_();
      }
      convs_.push_back(register_module(
          "conv" + std::to_string(convs_.size()), conv));
      layer_index += 2;  // conv, relu
    }
    tap_points_.push_back(layer_index);  // the pooling layer
    ++layer_index;
    in = out;
  }
  for (auto& p : parameters()) p.set_requires_grad(false);
  eval();
}

int64_t PerceptualExtractorImpl::MinimumSize() const {
  return int64_t{1} << stage_channels_.size();
}

std::vector<torch::Tensor> PerceptualExtractorImpl::Extract(
    const torch::Tensor& rgb_nchw) {
  Require(rgb_nchw.dim() == 4 && rgb_nchw.size(1) == 3,
          "extractor expects a [N,3,H,W] batch");
  if (rgb_nchw.size(2) < MinimumSize() || rgb_nchw.size(3) < MinimumSize()) {
    Fail(ErrorCode::kInvalidArgument,
         "input " + std::to_string(rgb_nchw.size(2)) +
             " is smaller than the extractor minimum " +
             std::to_string(MinimumSize()));
  }
  std::vector<torch::Tensor> taps;
  auto h = rgb_nchw;
  for (size_t stage = 0; stage < stage_channels_.size(); ++stage) {
    h = torch::relu(convs_[2 * stage]->forward(h));
    h = torch::relu(convs_[2 * stage + 1]->forward(h));
    h = torch::max_pool2d(h, 2);
    taps.push_back(h);
  }
  return taps;
}

double PerceptualExtractorImpl::Checksum() {
  torch::NoGradGuard no_grad;
  double sum = 0.0;
  for (const auto& p : parameters()) {
    sum += p.to(torch::kDouble).abs().sum().item<double>();
  }
  return sum;
}

void PerceptualExtractorImpl::Save(const std::filesystem::path& path) {
  torch::serialize::OutputArchive archive;
  save(archive);
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  archive.save_to(path.string());
  nlohmann::json manifest = {
      {"format_version", 1},
      {"kind", "perceptual_extractor"},
      {"stage_channels", stage_channels_},
      {"tap_points", tap_points_},
      {"seed", seed_},
      {"checksum", Checksum()},
  };
  WriteFile(path.string() + ".json", manifest.dump(2));
}

std::shared_ptr<PerceptualExtractorImpl> PerceptualExtractorImpl::Load(
    const std::filesystem::path& path) {
  const auto manifest =
      nlohmann::json::parse(ReadFile(path.string() + ".json"));
  if (manifest.value("kind", "") != "perceptual_extractor") {
    Fail(ErrorCode::kInvalidArgument,
         path.string() + " is not a perceptual extractor checkpoint");
  }
  auto extractor = std::make_shared<PerceptualExtractorImpl>(
      manifest.at("stage_channels").get<std::vector<int64_t>>(),
      manifest.at("seed").get<uint64_t>());
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());
  extractor->load(archive);
  for (auto& p : extractor->parameters()) p.set_requires_grad(false);
  extractor->eval();
  if (manifest.at("tap_points").get<std::vector<int64_t>>() !=
      extractor->tap_points()) {
    Fail(ErrorCode::kInvalidArgument, "tap points in manifest do not match");
  }
  return extractor;
}

PerceptualExtractor DefaultPerceptualExtractor() {
  return PerceptualExtractor(std::vector<int64_t>{8, 16, 32, 64}, 20260101);
}

}  // namespace dhrl
