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

#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "dhrl/common.h"

namespace dhrl {
namespace {

namespace fs = std::filesystem;

fs::path TempDir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("dhrl_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ImageSample Pixel(float r, float g, float b, float a) {
  ImageSample s;
  s.pixels = torch::tensor({r, g, b, a}).reshape({1, 1, 4});
  return s;
}

TEST(AlphaBlendWhite, OpaquePassthrough) {
  auto out = AlphaBlendWhite(Pixel(0.2f, 0.4f, 0.6f, 1.0f)).flatten();
  EXPECT_FLOAT_EQ(out[0].item<float>(), 0.2f);
  EXPECT_FLOAT_EQ(out[1].item<float>(), 0.4f);
  EXPECT_FLOAT_EQ(out[2].item<float>(), 0.6f);
}

TEST(AlphaBlendWhite, TransparentBecomesWhite) {
  auto out = AlphaBlendWhite(Pixel(0.3f, 0.1f, 0.9f, 0.0f)).flatten();
  for (int c = 0; c < 3; ++c) EXPECT_FLOAT_EQ(out[c].item<float>(), 1.0f);
}

TEST(AlphaBlendWhite, HalfAlphaBlack) {
  auto out = AlphaBlendWhite(Pixel(0.0f, 0.0f, 0.0f, 0.5f)).flatten();
  for (int c = 0; c < 3; ++c) EXPECT_FLOAT_EQ(out[c].item<float>(), 0.5f);
}

TEST(AlphaBlendWhite, BatchMatchesSingle) {
  auto img = torch::rand({8, 8, 4});
  ImageSample s{img, std::nullopt, "x"};
  auto single = AlphaBlendWhite(s).permute({2, 0, 1});
  auto batched = AlphaBlendWhiteBatch(img.permute({2, 0, 1}).unsqueeze(0))[0];
  EXPECT_TRUE(torch::allclose(single, batched));
}

void WriteRgba(const fs::path& path, int64_t size, float red) {
  auto img = torch::zeros({size, size, 4});
  img.select(2, 0).fill_(red);
  img.select(2, 3).fill_(1.0f);
  WritePng(path, img);
}

TEST(LoadDataset, ShapesOrderAndLabels) {
  auto dir = TempDir("load");
  for (int i = 7; i >= 0; --i) {
    WriteRgba(dir / ("img_" + std::to_string(i) + ".png"), 80, i / 10.0f);
  }
  std::string manifest = "filename,label\n";
  for (int i = 0; i < 8; ++i) {
    manifest += "img_" + std::to_string(i) + ".png," + std::to_string(i % 2) + "\n";
  }
  WriteFile(dir / "labels.csv", manifest);

  auto samples = LoadDataset(dir, 64);
  ASSERT_EQ(samples.size(), 8u);
  std::set<int> labels;
  for (int i = 0; i < 8; ++i) {
    EXPECT_EQ(samples[i].pixels.sizes(), (std::vector<int64_t>{64, 64, 4}));
    EXPECT_EQ(samples[i].source_id, "img_" + std::to_string(i));
    ASSERT_TRUE(samples[i].label.has_value());
    EXPECT_EQ(*samples[i].label, i % 2);
    labels.insert(*samples[i].label);
    EXPECT_NO_THROW(ValidateImage(samples[i]));
    EXPECT_NEAR(samples[i].pixels[10][10][0].item<float>(), i / 10.0f, 2.0 / 255);
  }
  EXPECT_EQ(labels, (std::set<int>{0, 1}));
}

TEST(LoadDataset, NoManifestMeansNoLabels) {
  auto dir = TempDir("nolabels");
  WriteRgba(dir / "a.png", 32, 0.5f);
  auto samples = LoadDataset(dir, 32);
  ASSERT_EQ(samples.size(), 1u);
  EXPECT_FALSE(samples[0].label.has_value());
}

TEST(LoadDataset, RejectsThreeChannelFileByName) {
  auto dir = TempDir("rgb");
  WriteRgba(dir / "good.png", 32, 0.5f);
  WritePng(dir / "bad_rgb.png", torch::rand({32, 32, 3}));
  try {
    LoadDataset(dir, 32);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("bad_rgb.png"), std::string::npos);
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
}

TEST(LoadDataset, RejectsNonSquare) {
  auto dir = TempDir("nonsquare");
  WritePng(dir / "wide.png", torch::rand({32, 48, 4}));
  try {
    LoadDataset(dir, 32);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("wide.png"), std::string::npos);
  }
}

TEST(LoadDataset, EmptyDirectoryIsAnError) {
  auto dir = TempDir("empty");
  EXPECT_THROW(LoadDataset(dir, 32), Error);
}

TEST(LoadDataset, BlendedImagesRoundTripIdempotently) {
  auto dir = TempDir("blend_roundtrip");
  auto spec = SyntheticFactorSpec{4, 32, {{"hue", 2}}, "", 3};
  auto data = MakeSyntheticDataset(spec);
  std::vector<ImageSample> blended;
  for (const auto& s : data.samples) {
    auto rgb = AlphaBlendWhite(s);
    auto rgba = torch::cat({rgb, torch::ones({32, 32, 1})}, 2);
    blended.push_back({rgba, std::nullopt, s.source_id});
  }
  WriteDataset(dir, blended);
  auto first = LoadDataset(dir, 32);
  auto dir2 = TempDir("blend_roundtrip2");
  std::vector<ImageSample> reblended;
  for (const auto& s : first) {
    reblended.push_back(
        {torch::cat({AlphaBlendWhite(s), torch::ones({32, 32, 1})}, 2),
         std::nullopt, s.source_id});
  }
  WriteDataset(dir2, reblended);
  auto second = LoadDataset(dir2, 32);
  ASSERT_EQ(first.size(), second.size());
  for (size_t i = 0; i < first.size(); ++i) {
    EXPECT_TRUE(torch::equal(first[i].pixels, second[i].pixels));
  }
}

TEST(Synthetic, SameSeedIsBitIdentical) {
  SyntheticFactorSpec spec{100, 64, {{"hue", 4}, {"size", 3}}, "", 7};
  auto a = MakeSyntheticDataset(spec);
  auto b = MakeSyntheticDataset(spec);
  ASSERT_EQ(a.samples.size(), 100u);
  for (size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_TRUE(torch::equal(a.samples[i].pixels, b.samples[i].pixels));
    EXPECT_EQ(a.factor_values[i], b.factor_values[i]);
  }
}

TEST(Synthetic, CardinalityOneIsRejected) {
  SyntheticFactorSpec spec{10, 64, {{"hue", 1}}, "", 7};
  EXPECT_THROW(MakeSyntheticDataset(spec), Error);
}

TEST(Synthetic, UnknownFactorIsRejected) {
  SyntheticFactorSpec spec{10, 64, {{"texture", 3}}, "", 7};
  EXPECT_THROW(MakeSyntheticDataset(spec), Error);
}

TEST(Synthetic, HueFactorIsVisibleInMeanPixel) {
  SyntheticFactorSpec spec{100, 64, {{"hue", 4}, {"size", 3}}, "", 7};
  auto data = MakeSyntheticDataset(spec);
  std::array<torch::Tensor, 2> sums{torch::zeros({3}), torch::zeros({3})};
  std::array<int, 2> counts{0, 0};
  for (size_t i = 0; i < data.samples.size(); ++i) {
    const int hue = data.factor_values[i][0];
    if (hue > 1) continue;
    sums[hue] += data.samples[i].pixels.slice(2, 0, 3).mean({0, 1});
    ++counts[hue];
  }
  ASSERT_GT(counts[0], 0);
  ASSERT_GT(counts[1], 0);
  auto diff = (sums[0] / counts[0] - sums[1] / counts[1]).abs().max().item<float>();
  EXPECT_GT(diff, 0.05f);
}

TEST(Synthetic, RerenderingFactorRowReproducesImage) {
  SyntheticFactorSpec spec{30, 32,
                           {{"hue", 4}, {"layout", 4}, {"size", 3}, {"length", 3}},
                           "layout", 11};
  auto data = MakeSyntheticDataset(spec);
  for (size_t i = 0; i < data.samples.size(); ++i) {
    const auto& row = data.factor_values[i];
    EXPECT_TRUE(torch::equal(RenderSynthetic(spec, row), data.samples[i].pixels));
    EXPECT_EQ(*data.samples[i].label, row[1]);
    for (size_t f = 0; f < row.size(); ++f) {
      EXPECT_GE(row[f], 0);
      EXPECT_LT(row[f], spec.factors[f].cardinality);
    }
    EXPECT_NO_THROW(ValidateImage(data.samples[i]));
  }
}

TEST(Synthetic, WritesFactorsCsvWithHeader) {
  auto dir = TempDir("synthetic_out");
  SyntheticFactorSpec spec{5, 32, {{"hue", 2}, {"spot", 2}}, "", 1};
  auto data = MakeSyntheticDataset(spec);
  WriteSyntheticDataset(dir, data);
  auto rows = ReadCsv(dir / "factors.csv");
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"filename", "hue", "spot"}));
  auto loaded = LoadDataset(dir, 32);
  ASSERT_EQ(loaded.size(), 5u);
  EXPECT_EQ(*loaded[0].label, data.factor_values[0][0]);
}

}  // namespace
}  // namespace dhrl
