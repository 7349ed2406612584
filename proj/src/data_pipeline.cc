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

#include "dhrl/data_pipeline.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <opencv2/imgcodecs.hpp>
#include <random>
#include <set>
#include <sstream>

#include "dhrl/common.h"

namespace dhrl {

namespace fs = std::filesystem;

bool IsSupportedImageSize(int64_t size) {
  return size == 32 || size == 64 || size == 128 || size == 256;
}

void ValidateImage(const ImageSample& sample, const std::string& context) {
  const std::string where = context.empty() ? sample.source_id : context;
  const auto& p = sample.pixels;
  Require(p.defined() && p.dim() == 3, where + ": expected [H,W,4] raster");
  Require(p.size(2) == 4, where + ": expected 4 channels (RGBA), got " +
                              std::to_string(p.size(2)));
  Require(p.size(0) == p.size(1), where + ": image is not square");
  Require(IsSupportedImageSize(p.size(0)),
          where + ": unsupported size " + std::to_string(p.size(0)));
  Require(p.min().item<float>() >= 0.0f && p.max().item<float>() <= 1.0f,
          where + ": channel values outside [0,1]");
}

torch::Tensor AlphaBlendWhite(const ImageSample& sample) {
  const auto rgb = sample.pixels.slice(2, 0, 3);
  const auto alpha = sample.pixels.slice(2, 3, 4);
  return alpha * rgb + (1.0 - alpha);
}

torch::Tensor AlphaBlendWhiteBatch(const torch::Tensor& rgba_nchw) {
  const auto rgb = rgba_nchw.slice(1, 0, 3);
  const auto alpha = rgba_nchw.slice(1, 3, 4);
  return alpha * rgb + (1.0 - alpha);
}

torch::Tensor ResizeSquare(const torch::Tensor& hwc, int64_t size) {
  if (hwc.size(0) == size && hwc.size(1) == size) return hwc;
  namespace F = torch::nn::functional;
  auto nchw = hwc.permute({2, 0, 1}).unsqueeze(0).to(torch::kFloat);
  auto resized = F::interpolate(nchw, F::InterpolateFuncOptions()
                                          .size(std::vector<int64_t>{size, size})
                                          .mode(torch::kBilinear)
                                          .align_corners(false)
                                          .antialias(true));
  return resized.squeeze(0).permute({1, 2, 0}).clamp(0.0, 1.0).contiguous();
}

torch::Tensor DecodePng(const std::string& bytes) {
  std::vector<uchar> buffer(bytes.begin(), bytes.end());
  cv::Mat mat;
  if (!buffer.empty()) mat = cv::imdecode(buffer, cv::IMREAD_UNCHANGED);
  if (mat.empty()) Fail(ErrorCode::kInvalidArgument, "undecodable PNG data");
  const int channels = mat.channels();
  Require(channels == 3 || channels == 4,
          "unsupported channel count " + std::to_string(channels));
  double scale = 1.0;
  cv::Mat as_float;
  if (mat.depth() == CV_8U) {
    scale = 1.0 / 255.0;
  } else if (mat.depth() == CV_16U) {
    scale = 1.0 / 65535.0;
  } else {
    Fail(ErrorCode::kInvalidArgument, "unsupported PNG bit depth");
  }
  mat.convertTo(as_float, CV_32F, scale);
  auto tensor = torch::from_blob(as_float.data,
                                 {as_float.rows, as_float.cols, channels},
                                 torch::kFloat)
                    .clone();
  // OpenCV stores BGR(A).
  auto index = channels == 4 ? torch::tensor({2, 1, 0, 3}, torch::kLong)
                             : torch::tensor({2, 1, 0}, torch::kLong);
  return tensor.index_select(2, index).contiguous();
}

std::string EncodePng(const torch::Tensor& hwc) {
  Require(hwc.dim() == 3 && (hwc.size(2) == 3 || hwc.size(2) == 4),
          "EncodePng expects an [H,W,3|4] raster");
  const int64_t channels = hwc.size(2);
  auto index = channels == 4 ? torch::tensor({2, 1, 0, 3}, torch::kLong)
                             : torch::tensor({2, 1, 0}, torch::kLong);
  auto bytes = (hwc.detach().to(torch::kFloat).clamp(0, 1) * 255.0)
                   .round()
                   .to(torch::kUInt8)
                   .index_select(2, index)
                   .contiguous();
  cv::Mat mat(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)),
              channels == 4 ? CV_8UC4 : CV_8UC3, bytes.data_ptr<uint8_t>());
  std::vector<uchar> out;
  if (!cv::imencode(".png", mat, out)) {
    Fail(ErrorCode::kIo, "PNG encoding failed");
  }
  return std::string(out.begin(), out.end());
}

torch::Tensor ReadPng(const fs::path& path) {
  try {
    return DecodePng(ReadFile(path));
  } catch (const Error& e) {
    Fail(e.code(), path.filename().string() + ": " + e.what());
  }
}

void WritePng(const fs::path& path, const torch::Tensor& hwc) {
  WriteFile(path, EncodePng(hwc));
}

std::vector<ImageSample> LoadDataset(const fs::path& directory,
                                     int64_t image_size) {
  Require(IsSupportedImageSize(image_size),
          "unsupported image size " + std::to_string(image_size));
  if (!fs::is_directory(directory)) {
    Fail(ErrorCode::kNotFound, "dataset directory not found: " +
                                   directory.string());
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(directory)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
    return a.filename().string() < b.filename().string();
  });
  if (files.empty()) {
    Fail(ErrorCode::kInvalidArgument,
         "dataset directory has no PNG files: " + directory.string());
  }

  std::map<std::string, int> labels;
  const fs::path manifest = directory / "labels.csv";
  if (fs::exists(manifest)) {
    for (const auto& row : ReadCsv(manifest)) {
      if (row.size() < 2 || row[0] == "filename") continue;
      labels[row[0]] = std::stoi(row[1]);
    }
  }

  std::vector<ImageSample> samples;
  samples.reserve(files.size());
  for (const auto& file : files) {
    const std::string name = file.filename().string();
    auto pixels = ReadPng(file);
    if (pixels.size(2) != 4) {
      Fail(ErrorCode::kInvalidArgument, name + ": not an RGBA image");
    }
    if (pixels.size(0) != pixels.size(1)) {
      Fail(ErrorCode::kInvalidArgument, name + ": image is not square");
    }
    ImageSample sample;
    sample.pixels = ResizeSquare(pixels, image_size);
    sample.source_id = file.stem().string();
    if (auto it = labels.find(name); it != labels.end()) {
      sample.label = it->second;
    }
    samples.push_back(std::move(sample));
  }
  return samples;
}

void WriteDataset(const fs::path& directory,
                  std::span<const ImageSample> samples) {
  fs::create_directories(directory);
  std::ostringstream manifest;
  bool any_label = false;
  manifest << "filename,label\n";
  for (const auto& sample : samples) {
    const std::string name = sample.source_id + ".png";
    WritePng(directory / name, sample.pixels);
    if (sample.label) {
      any_label = true;
      manifest << name << ',' << *sample.label << '\n';
    }
  }
  if (any_label) WriteFile(directory / "labels.csv", manifest.str());
}

torch::Tensor ToBatch(std::span<const ImageSample> samples) {
  Require(!samples.empty(), "cannot batch zero samples");
  std::vector<torch::Tensor> items;
  items.reserve(samples.size());
  for (const auto& s : samples) items.push_back(s.pixels);
  return torch::stack(items).permute({0, 3, 1, 2}).contiguous();
}

ImageSample FromBatchItem(const torch::Tensor& nchw, int64_t index) {
  ImageSample sample;
  sample.pixels =
      nchw[index].detach().permute({1, 2, 0}).to(torch::kFloat).contiguous();
  return sample;
}

namespace {

const std::set<std::string>& KnownFactors() {
  static const std::set<std::string> kKnown = {"hue",   "layout", "size",
                                               "length", "count", "spot"};
  return kKnown;
}

void ValidateSpec(const SyntheticFactorSpec& spec) {
  Require(spec.n_samples >= 0, "n_samples must be non-negative");
  Require(IsSupportedImageSize(spec.image_size),
          "unsupported synthetic image size " +
              std::to_string(spec.image_size));
  Require(!spec.factors.empty(), "synthetic spec needs at least one factor");
  std::set<std::string> seen;
  for (const auto& f : spec.factors) {
    Require(KnownFactors().count(f.name) == 1,
            "unknown synthetic factor '" + f.name + "'");
    Require(seen.insert(f.name).second, "duplicate factor '" + f.name + "'");
    Require(f.cardinality >= 2, "factor '" + f.name +
                                    "' needs cardinality >= 2, got " +
                                    std::to_string(f.cardinality));
  }
  if (!spec.label_factor.empty()) {
    Require(seen.count(spec.label_factor) == 1,
            "label factor '" + spec.label_factor + "' is not a factor");
  }
}

struct Rgb {
  float r, g, b;
};

Rgb HsvToRgb(double hue_degrees, double s, double v) {
  const double h = std::fmod(hue_degrees, 360.0) / 60.0;
  const double c = v * s;
  const double x = c * (1.0 - std::fabs(std::fmod(h, 2.0) - 1.0));
  const double m = v - c;
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h)) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  return {static_cast<float>(r + m), static_cast<float>(g + m),
          static_cast<float>(b + m)};
}

struct Circle {
  double x, y, r;
  bool Contains(double px, double py) const {
    return (px - x) * (px - x) + (py - y) * (py - y) <= r * r;
  }
};

}  // namespace

torch::Tensor RenderSynthetic(const SyntheticFactorSpec& spec,
                              std::span<const int> factor_row) {
  Require(factor_row.size() == spec.factors.size(),
          "factor row length does not match spec");
  std::map<std::string, std::pair<int, int>> value;  // name -> (v, card)
  for (size_t f = 0; f < spec.factors.size(); ++f) {
    value[spec.factors[f].name] = {factor_row[f], spec.factors[f].cardinality};
  }
  auto fraction = [&](const std::string& name, double fallback) {
    auto it = value.find(name);
    if (it == value.end()) return fallback;
    return static_cast<double>(it->second.first) / (it->second.second - 1);
  };

  const double s = static_cast<double>(spec.image_size);
  const double cx = 0.47 * s, cy = 0.5 * s;
  const double half_length = s * (0.27 + 0.12 * fraction("length", 0.5));
  const double half_height = 0.17 * s;

  // Ornament patches in body coordinates.
  int n_patches = 3;
  if (auto it = value.find("count"); it != value.end()) {
    n_patches = it->second.first + 1;
  }
  double layout_angle = 0.0;
  if (auto it = value.find("layout"); it != value.end()) {
    layout_angle = 2.0 * std::numbers::pi * it->second.first /
                   it->second.second;
  }
  const double patch_radius = s * (0.07 + 0.06 * fraction("size", 0.5));
  // Hue 36 is an orange that lands inside the orange fitness range.
  double hue = 36.0;
  if (auto it = value.find("hue"); it != value.end()) {
    hue = 36.0 + 360.0 * it->second.first / it->second.second;
  }
  const Rgb patch_color = HsvToRgb(hue, 0.95, 0.97);
  const Rgb body_color{0.70f, 0.75f, 0.80f};

  std::vector<Circle> patches;
  const double cluster_u = 0.45 * std::cos(layout_angle);
  const double cluster_v = 0.45 * std::sin(layout_angle);
  for (int j = 0; j < n_patches; ++j) {
    const double phi = layout_angle + 2.0 * std::numbers::pi * j /
                                          std::max(n_patches, 3);
    const double u = cluster_u + 0.38 * std::cos(phi);
    const double v = cluster_v + 0.38 * std::sin(phi);
    patches.push_back({cx + u * half_length, cy + v * half_height,
                       patch_radius});
  }
  std::optional<Circle> spot;
  if (auto it = value.find("spot"); it != value.end() && it->second.first > 0) {
    spot = Circle{cx + 0.55 * half_length, cy - 0.15 * half_height,
                  s * 0.035 * (1.0 + it->second.first)};
  }

  auto in_body = [&](double px, double py) {
    const double du = (px - cx) / half_length, dv = (py - cy) / half_height;
    if (du * du + dv * dv <= 1.0) return true;
    // Tail: triangle behind the body.
    const double tail_start = cx - 0.9 * half_length;
    const double tail_end = cx - half_length - 0.2 * s;
    if (px > tail_start || px < tail_end) return false;
    const double t = (tail_start - px) / (tail_start - tail_end);
    return std::fabs(py - cy) <= (0.25 + 0.75 * t) * 0.6 * half_height;
  };

  constexpr int kSuper = 4;
  const int64_t n = spec.image_size;
  auto out = torch::zeros({n, n, 4}, torch::kFloat);
  auto acc = out.accessor<float, 3>();
  for (int64_t y = 0; y < n; ++y) {
    for (int64_t x = 0; x < n; ++x) {
      double r = 0, g = 0, b = 0;
      int inside = 0;
      for (int sy = 0; sy < kSuper; ++sy) {
        for (int sx = 0; sx < kSuper; ++sx) {
          const double px = x + (sx + 0.5) / kSuper;
          const double py = y + (sy + 0.5) / kSuper;
          if (!in_body(px, py)) continue;
          ++inside;
          Rgb c = body_color;
          for (const auto& p : patches) {
            if (p.Contains(px, py)) {
              c = patch_color;
              break;
            }
          }
          if (spot && spot->Contains(px, py)) c = {0.03f, 0.03f, 0.03f};
          r += c.r;
          g += c.g;
          b += c.b;
        }
      }
      if (inside == 0) continue;
      acc[y][x][0] = static_cast<float>(r / inside);
      acc[y][x][1] = static_cast<float>(g / inside);
      acc[y][x][2] = static_cast<float>(b / inside);
      acc[y][x][3] = static_cast<float>(inside) / (kSuper * kSuper);
    }
  }
  return out;
}

SyntheticDataset MakeSyntheticDataset(const SyntheticFactorSpec& spec) {
  ValidateSpec(spec);
  SyntheticDataset dataset;
  size_t label_index = 0;
  for (size_t f = 0; f < spec.factors.size(); ++f) {
    dataset.factor_names.push_back(spec.factors[f].name);
    if (spec.factors[f].name == spec.label_factor) label_index = f;
  }
  std::mt19937_64 rng(DeriveSeed(spec.seed, 0x5157));
  dataset.samples.reserve(static_cast<size_t>(spec.n_samples));
  for (int64_t i = 0; i < spec.n_samples; ++i) {
    std::vector<int> row;
    for (const auto& f : spec.factors) {
      row.push_back(static_cast<int>(rng() % static_cast<uint64_t>(f.cardinality)));
    }
    ImageSample sample;
    sample.pixels = RenderSynthetic(spec, row);
    sample.label = row[label_index];
    char id[32];
    std::snprintf(id, sizeof(id), "syn_%06lld", static_cast<long long>(i));
    sample.source_id = id;
    dataset.samples.push_back(std::move(sample));
    dataset.factor_values.push_back(std::move(row));
  }
  return dataset;
}

void WriteSyntheticDataset(const fs::path& directory,
                           const SyntheticDataset& dataset) {
  WriteDataset(directory, dataset.samples);
  std::ostringstream csv;
  csv << "filename";
  for (const auto& name : dataset.factor_names) csv << ',' << name;
  csv << '\n';
  for (size_t i = 0; i < dataset.samples.size(); ++i) {
    csv << dataset.samples[i].source_id << ".png";
    for (int v : dataset.factor_values[i]) csv << ',' << v;
    csv << '\n';
  }
  WriteFile(directory / "factors.csv", csv.str());
}

}  // namespace dhrl
