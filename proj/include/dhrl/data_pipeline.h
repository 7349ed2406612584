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

#ifndef DHRL_DATA_PIPELINE_H_
#define DHRL_DATA_PIPELINE_H_

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dhrl {

// RGBA raster on [0,1] stored as a float tensor of shape [H, W, 4].
struct ImageSample {
  torch::Tensor pixels;
  std::optional<int> label;
  std::string source_id;

  int64_t size() const { return pixels.size(0); }
};

bool IsSupportedImageSize(int64_t size);

// Throws kInvalidArgument naming `context` when the sample breaks the
// ImageSample invariants (shape, channel count, range).
void ValidateImage(const ImageSample& sample, const std::string& context = "");

// out = alpha * rgb + (1 - alpha) * 1, shape [H, W, 3].
torch::Tensor AlphaBlendWhite(const ImageSample& sample);
// Batched, differentiable form over [N, 4, H, W] -> [N, 3, H, W].
torch::Tensor AlphaBlendWhiteBatch(const torch::Tensor& rgba_nchw);

// Bilinear resize with antialiasing of an [H, W, C] raster to size x size.
torch::Tensor ResizeSquare(const torch::Tensor& hwc, int64_t size);

// PNG codec for [H, W, C] float rasters on [0,1], C in {3, 4}.
torch::Tensor DecodePng(const std::string& bytes);
std::string EncodePng(const torch::Tensor& hwc);
torch::Tensor ReadPng(const std::filesystem::path& path);
void WritePng(const std::filesystem::path& path, const torch::Tensor& hwc);

// Loads every *.png in `directory` (lexicographic by filename), rejecting
// non-square and non-RGBA files. Labels come from an optional labels.csv
// (filename,label).
std::vector<ImageSample> LoadDataset(const std::filesystem::path& directory,
                                     int64_t image_size);

// Writes samples as <source_id>.png plus labels.csv when any sample is
// labelled.
void WriteDataset(const std::filesystem::path& directory,
                  std::span<const ImageSample> samples);

// Stacks samples into an [N, 4, H, W] batch and back.
torch::Tensor ToBatch(std::span<const ImageSample> samples);
ImageSample FromBatchItem(const torch::Tensor& nchw, int64_t index);

struct SyntheticFactor {
  // One of: hue, layout, size, length, count, spot.
  std::string name;
  int cardinality = 2;
};

struct SyntheticFactorSpec {
  int64_t n_samples = 1000;
  int64_t image_size = 64;
  std::vector<SyntheticFactor> factors;
  // Factor whose value becomes the sample label; empty selects the first.
  std::string label_factor;
  uint64_t seed = 0;
};

struct SyntheticDataset {
  std::vector<ImageSample> samples;
  std::vector<std::string> factor_names;
  // factor_values[i][f] is the value index of factor f for sample i.
  std::vector<std::vector<int>> factor_values;
};

SyntheticDataset MakeSyntheticDataset(const SyntheticFactorSpec& spec);

// Renders the ornament image for one factor row. Pure function of its
// inputs; MakeSyntheticDataset calls it for every sample.
torch::Tensor RenderSynthetic(const SyntheticFactorSpec& spec,
                              std::span<const int> factor_row);

// Writes PNGs, labels.csv and factors.csv (header row names the factors).
void WriteSyntheticDataset(const std::filesystem::path& directory,
                           const SyntheticDataset& dataset);

}  // namespace dhrl

#endif  // DHRL_DATA_PIPELINE_H_
