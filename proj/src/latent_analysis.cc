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

#include "dhrl/latent_analysis.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

#include "dhrl/common.h"

namespace dhrl {

int LatentIndex::Flat() const { return (code - 1) * kCodeDim + dim; }

void ValidateLatentIndex(const LatentIndex& index) {
  Require(index.code >= 1 && index.code <= kNumCodes,
          "latent code must be in 1.." + std::to_string(kNumCodes) + ", got " +
              std::to_string(index.code));
  Require(index.dim >= 0 && index.dim < kCodeDim,
          "latent dim must be in 0.." + std::to_string(kCodeDim - 1) + ", got " +
              std::to_string(index.dim));
}

AttributionMap LatentIntegratedGradients(const LatentDecoder& decoder,
                                         std::span<const double> z,
                                         const LatentIndex& index,
                                         double baseline_value, double target_value,
                                         int steps, int chunk) {
  ValidateLatentIndex(index);
  Require(z.size() == kGenomeSize, "integrated gradients expects a " +
                                       std::to_string(kGenomeSize) + "-value latent");
  Require(steps >= 1, "integrated gradients needs at least one step");
  Require(chunk >= 1, "chunk size must be positive");
  Require(std::isfinite(baseline_value) && std::isfinite(target_value),
          "non-finite attribution path end points");
  const int flat = index.Flat();
  const auto base = torch::tensor(std::vector<double>(z.begin(), z.end()), torch::kDouble);

  torch::Tensor total;
  for (int start = 1; start <= steps; start += chunk) {
    const int count = std::min(chunk, steps - start + 1);
    auto alphas = (torch::arange(start, start + count, torch::kDouble) - 0.5) / steps;
    auto path = base.unsqueeze(0).repeat({count, 1});
    path.select(1, flat).copy_(baseline_value + alphas * (target_value - baseline_value));
    path.requires_grad_(true);

    // Forward-mode derivative via two reverse passes: g = J^T v is linear in
    // v, so differentiating g[:, flat] with respect to v yields J e_flat.
    auto out = decoder(path);
    Require(out.dim() == 4 && out.size(0) == count,
            "decoder must return a [B, C, H, W] batch");
    auto v = torch::ones_like(out).requires_grad_(true);
    auto g = torch::autograd::grad({out}, {path}, {v}, /*retain_graph=*/true,
                                   /*create_graph=*/true, /*allow_unused=*/true)[0];
    torch::Tensor jvp;
    if (g.defined() && g.requires_grad()) {
      jvp = torch::autograd::grad({g.select(1, flat).sum()}, {v}, {},
                                  /*retain_graph=*/false, /*create_graph=*/false,
                                  /*allow_unused=*/true)[0];
    }
    if (!jvp.defined()) jvp = torch::zeros_like(out);
    auto summed = jvp.detach().to(torch::kDouble).sum(0).sum(0);
    total = total.defined() ? total + summed : summed;
  }

  AttributionMap map;
  map.values = total * ((target_value - baseline_value) / steps);
  Require(torch::isfinite(map.values).all().item<bool>(),
          "integrated gradients produced non-finite values");
  map.index = index;
  map.baseline_value = baseline_value;
  map.target_value = target_value;
  map.steps = steps;
  return map;
}

AttributionMap LatentIntegratedGradients(VlaeImpl& model, const LatentHierarchy& z,
                                         const LatentIndex& index,
                                         double baseline_value, double target_value,
                                         int steps) {
  Require(!model.is_training(), "attribution requires a model in eval mode");
  const auto flat = z.FlatSamples();
  return LatentIntegratedGradients(
      [&model](const torch::Tensor& zb) { return model.DecodeFlat(zb.to(torch::kFloat)); },
      flat, index, baseline_value, target_value, steps);
}

IgRangeMode ParseIgRangeMode(const std::string& name) {
  if (name == "global_per_code") return IgRangeMode::kGlobalPerCode;
  if (name == "per_dimension") return IgRangeMode::kPerDimension;
  Fail(ErrorCode::kInvalidArgument,
       "unknown attribution range mode '" + name +
           "' (expected global_per_code or per_dimension)");
}

double IgRange(const std::vector<LatentHierarchy>& population, const LatentIndex& index,
               IgRangeMode mode) {
  ValidateLatentIndex(index);
  Require(!population.empty(), "attribution range needs an encoded population");
  double m = 0;
  for (const auto& z : population) {
    const auto& mu = z.codes[index.code - 1].mu;
    if (mode == IgRangeMode::kPerDimension) {
      m = std::max(m, std::abs(mu[index.dim]));
    } else {
      for (double v : mu) m = std::max(m, std::abs(v));
    }
  }
  return m;
}

torch::Tensor StandardScoreMap(const torch::Tensor& values) {
  auto v = values.to(torch::kDouble);
  const double mean = v.mean().item<double>();
  const double sd = v.std(/*unbiased=*/false).item<double>();
  if (!(sd > 0)) return torch::zeros_like(v);
  return (v - mean) / sd;
}

// ---------------------------------------------------------------------------

void ImportanceMatrix::Validate() const {
  Require(!r.empty(), "importance matrix has no rows");
  Require(classes.size() >= 2, "importance matrix needs at least 2 classes");
  for (const auto& row : r) {
    Require(row.size() == classes.size(), "importance matrix rows are ragged");
    for (double v : row) {
      Require(std::isfinite(v) && v >= 0, "importance entries must be finite and >= 0");
    }
  }
}

ImportanceMatrix ComputeImportanceMatrix(const std::vector<std::vector<double>>& features,
                                         const std::vector<int>& labels,
                                         const GbtOptions& options) {
  Require(features.size() == labels.size(), "features and labels differ in length");
  std::map<int, int> counts;
  for (int y : labels) ++counts[y];
  Require(counts.size() >= 2, "importance estimation needs at least 2 classes, got " +
                                  std::to_string(counts.size()));
  for (const auto& [label, count] : counts) {
    Require(count >= 10, "class " + std::to_string(label) + " has " +
                             std::to_string(count) + " samples; at least 10 are needed");
  }
  ImportanceMatrix m;
  std::map<int, int> dense;
  for (const auto& [label, count] : counts) {
    dense[label] = static_cast<int>(m.classes.size());
    m.classes.push_back(label);
  }
  std::vector<int> y(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) y[i] = dense[labels[i]];
  m.r = GradientBoostedImportance(features, y, static_cast<int>(m.classes.size()), options);
  m.Validate();
  return m;
}

ImportanceMatrix ComputeImportanceMatrix(const std::vector<LatentHierarchy>& latents,
                                         const std::vector<int>& labels,
                                         const GbtOptions& options) {
  std::vector<std::vector<double>> features;
  features.reserve(latents.size());
  for (const auto& z : latents) features.push_back(z.FlatMeans());
  return ComputeImportanceMatrix(features, labels, options);
}

namespace {

// 1 - H_base(p / sum p); nullopt when the vector sums to zero.
std::optional<double> OneMinusEntropy(const std::vector<double>& p, size_t base) {
  const double sum = std::accumulate(p.begin(), p.end(), 0.0);
  if (!(sum > 0)) return std::nullopt;
  if (base < 2) return 1.0;
  double h = 0;
  for (double v : p) {
    const double q = v / sum;
    if (q > 0) h -= q * std::log(q);
  }
  return std::clamp(1.0 - h / std::log(static_cast<double>(base)), 0.0, 1.0);
}

nlohmann::json OptionalJson(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

DisentanglementReport DisentanglementCompleteness(const ImportanceMatrix& m,
                                                  std::vector<int> groups) {
  m.Validate();
  const size_t rows = m.num_latents();
  const size_t k = m.num_classes();
  if (groups.empty()) groups.assign(kNumCodes, kCodeDim);
  Require(std::all_of(groups.begin(), groups.end(), [](int g) { return g >= 1; }),
          "latent groups must be non-empty");
  Require(static_cast<size_t>(std::accumulate(groups.begin(), groups.end(), 0)) == rows,
          "latent groups do not cover the importance matrix rows");

  DisentanglementReport report;
  for (size_t i = 0; i < rows; ++i) report.latent_d.push_back(OneMinusEntropy(m.r[i], k));
  for (size_t j = 0; j < k; ++j) {
    std::vector<double> column(rows);
    for (size_t i = 0; i < rows; ++i) column[i] = m.r[i][j];
    report.class_c.push_back(OneMinusEntropy(column, rows));
  }

  size_t begin = 0;
  for (int size : groups) {
    const size_t end = begin + static_cast<size_t>(size);
    CodeScores scores;
    double weighted = 0, weight = 0;
    for (size_t i = begin; i < end; ++i) {
      if (!report.latent_d[i]) continue;
      const double w = std::accumulate(m.r[i].begin(), m.r[i].end(), 0.0);
      weighted += w * *report.latent_d[i];
      weight += w;
    }
    if (weight > 0) scores.disentanglement = weighted / weight;
    double c_sum = 0;
    int c_count = 0;
    for (size_t j = 0; j < k; ++j) {
      std::vector<double> column;
      for (size_t i = begin; i < end; ++i) column.push_back(m.r[i][j]);
      if (auto c = OneMinusEntropy(column, column.size())) {
        c_sum += *c;
        ++c_count;
      }
    }
    if (c_count > 0) scores.completeness = c_sum / c_count;
    report.codes.push_back(scores);
    begin = end;
  }
  return report;
}

nlohmann::json DisentanglementReport::ToJson() const {
  nlohmann::json j;
  j["codes"] = nlohmann::json::array();
  for (size_t c = 0; c < codes.size(); ++c) {
    j["codes"].push_back({{"code", c + 1},
                          {"disentanglement", OptionalJson(codes[c].disentanglement)},
                          {"completeness", OptionalJson(codes[c].completeness)}});
  }
  j["latent_disentanglement"] = nlohmann::json::array();
  for (const auto& d : latent_d) j["latent_disentanglement"].push_back(OptionalJson(d));
  j["class_completeness"] = nlohmann::json::array();
  for (const auto& c : class_c) j["class_completeness"].push_back(OptionalJson(c));
  return j;
}

// ---------------------------------------------------------------------------

double MinkowskiDistance(std::span<const double> a, std::span<const double> b, double p) {
  Require(a.size() == b.size(), "Minkowski distance needs equal-length vectors");
  Require(p >= 1 && std::isfinite(p), "Minkowski order p must be a finite value >= 1");
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += std::pow(std::abs(a[i] - b[i]), p);
  return std::pow(s, 1.0 / p);
}

std::vector<Neighbor> NearestNeighbors(const std::vector<LatentHierarchy>& latents,
                                       size_t query, int code, int k, double p) {
  ValidateLatentIndex({code, 0});
  Require(query < latents.size(), "query index " + std::to_string(query) +
                                      " is outside the dataset of " +
                                      std::to_string(latents.size()));
  Require(k >= 1, "k must be at least 1");
  Require(static_cast<size_t>(k) < latents.size(),
          "k = " + std::to_string(k) + " must be smaller than the dataset size " +
              std::to_string(latents.size()));
  const auto& q = latents[query].codes[code - 1].mu;
  std::vector<Neighbor> all;
  all.reserve(latents.size() - 1);
  for (size_t i = 0; i < latents.size(); ++i) {
    if (i == query) continue;
    all.push_back({i, MinkowskiDistance(q, latents[i].codes[code - 1].mu, p)});
  }
  std::partial_sort(all.begin(), all.begin() + k, all.end(),
                    [](const Neighbor& a, const Neighbor& b) {
                      return a.distance != b.distance ? a.distance < b.distance
                                                      : a.index < b.index;
                    });
  all.resize(k);
  return all;
}

double PriorLogDensity(const LatentHierarchy& z) {
  double sq = 0;
  for (double v : z.FlatMeans()) sq += v * v;
  return -0.5 * sq - 0.5 * kGenomeSize * std::log(2 * std::numbers::pi);
}

std::vector<double> SampleLikelihood(const std::vector<LatentHierarchy>& latents) {
  Require(latents.size() >= 2, "likelihood scores need at least 2 samples");
  std::vector<double> raw;
  raw.reserve(latents.size());
  for (const auto& z : latents) raw.push_back(PriorLogDensity(z));
  const double n = static_cast<double>(raw.size());
  const double mean = std::accumulate(raw.begin(), raw.end(), 0.0) / n;
  double var = 0;
  for (double v : raw) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  if (!(sd > 0)) {
    Fail(ErrorCode::kNumerical, "likelihood scores are undefined: zero variance");
  }
  for (double& v : raw) v = (v - mean) / sd;
  return raw;
}

Traversal LatentTraversal(VlaeImpl& model, const LatentHierarchy& z,
                          const LatentIndex& index, double lo, double hi, int steps) {
  ValidateLatentIndex(index);
  Require(steps >= 2, "a traversal needs at least 2 steps");
  Require(std::isfinite(lo) && std::isfinite(hi), "non-finite traversal range");
  Traversal t;
  for (int s = 0; s < steps; ++s) {
    // Pin the end points so the range is hit exactly.
    const double v = s == steps - 1 ? hi : lo + (hi - lo) * s / (steps - 1);
    auto zz = z;
    zz.codes[index.code - 1].mu[index.dim] = v;
    zz.codes[index.code - 1].sample[index.dim] = v;
    t.values.push_back(v);
    t.frames.push_back(Decode(model, zz));
  }
  return t;
}

double DiffSupport(const ImageSample& a, const ImageSample& b, double threshold) {
  Require(a.pixels.sizes() == b.pixels.sizes(), "images differ in shape");
  auto pa = a.pixels.to(torch::kDouble);
  auto pb = b.pixels.to(torch::kDouble);
  auto fg = (pa.select(2, 3) > 0.5).logical_or(pb.select(2, 3) > 0.5);
  const auto n = fg.sum().item<int64_t>();
  if (n == 0) return 0;
  auto changed = ((pa - pb).abs() > threshold).any(2).logical_and(fg);
  return static_cast<double>(changed.sum().item<int64_t>()) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------

std::vector<LatentHierarchy> EncodeDataset(VlaeImpl& model,
                                           const std::vector<ImageSample>& samples,
                                           int64_t batch_size) {
  Require(batch_size >= 1, "batch size must be positive");
  torch::NoGradGuard no_grad;
  std::vector<LatentHierarchy> out;
  out.reserve(samples.size());
  for (size_t start = 0; start < samples.size(); start += batch_size) {
    const size_t end = std::min(samples.size(), start + static_cast<size_t>(batch_size));
    auto batch = ToBatch(std::span(samples).subspan(start, end - start));
    Require(batch.size(2) == model.config().image_size,
            "image size does not match the model's " +
                std::to_string(model.config().image_size));
    auto enc = model.Encode(batch);
    std::vector<torch::Tensor> mu;
    for (const auto& m : enc.mu) mu.push_back(m.to(torch::kDouble).contiguous());
    for (size_t i = 0; i < end - start; ++i) {
      LatentHierarchy z;
      z.provenance = LatentProvenance::kEncoded;
      for (int l = 0; l < kNumCodes; ++l) {
        const double* p = mu[l].data_ptr<double>() + i * kCodeDim;
        std::copy(p, p + kCodeDim, z.codes[l].mu.begin());
        z.codes[l].sample = z.codes[l].mu;
      }
      out.push_back(z);
    }
  }
  return out;
}

DisentanglementEvaluation EvaluateDisentanglement(VlaeImpl& model,
                                                  const std::vector<ImageSample>& samples,
                                                  const GbtOptions& options) {
  std::vector<int> labels;
  for (const auto& s : samples) {
    Require(s.label.has_value(), "sample " + s.source_id + " has no label");
    labels.push_back(*s.label);
  }
  DisentanglementEvaluation e;
  e.importance = ComputeImportanceMatrix(EncodeDataset(model, samples), labels, options);
  e.report = DisentanglementCompleteness(e.importance);
  return e;
}

void WriteLatentTable(const std::filesystem::path& path,
                      const std::vector<std::string>& source_ids,
                      const std::vector<LatentHierarchy>& latents) {
  Require(source_ids.size() == latents.size(), "one source id per latent is required");
  std::string csv = "source_id,code,dim,mu\n";
  char buf[64];
  for (size_t i = 0; i < latents.size(); ++i) {
    for (int l = 0; l < kNumCodes; ++l) {
      for (int j = 0; j < kCodeDim; ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", latents[i].codes[l].mu[j]);
        csv += source_ids[i] + "," + std::to_string(l + 1) + "," + std::to_string(j) +
               "," + buf + "\n";
      }
    }
  }
  WriteFile(path, csv);
}

nlohmann::json AttributionMetadata(const AttributionMap& map) {
  return {{"code", map.index.code},
          {"dim", map.index.dim},
          {"steps", map.steps},
          {"baseline", map.baseline_value},
          {"target", map.target_value},
          {"height", map.values.size(0)},
          {"width", map.values.size(1)},
          {"sum", map.values.sum().item<double>()},
          {"display", "standard score, clipped to [-3, 3]"}};
}

torch::Tensor AttributionColormap(const AttributionMap& map) {
  auto t = (StandardScoreMap(map.values) / 3.0).clamp(-1, 1).to(torch::kFloat);
  auto pos = t.clamp_min(0).unsqueeze(-1);
  auto neg = (-t).clamp_min(0).unsqueeze(-1);
  auto white = torch::ones({1, 1, 3});
  auto red = torch::tensor({0.70f, 0.02f, 0.15f}).view({1, 1, 3});
  auto blue = torch::tensor({0.23f, 0.30f, 0.75f}).view({1, 1, 3});
  return (white + pos * (red - white) + neg * (blue - white)).clamp(0, 1);
}

void WriteAttribution(const std::filesystem::path& png_path, const AttributionMap& map) {
  WritePng(png_path, AttributionColormap(map));
  auto json_path = png_path;
  json_path.replace_extension(".json");
  WriteFile(json_path, AttributionMetadata(map).dump(2) + "\n");
}

}  // namespace dhrl
