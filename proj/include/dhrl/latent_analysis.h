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

#ifndef DHRL_LATENT_ANALYSIS_H_
#define DHRL_LATENT_ANALYSIS_H_

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dhrl/data_pipeline.h"
#include "dhrl/importance.h"
#include "dhrl/vlae.h"

namespace dhrl {

// A latent coordinate: code in 1..kNumCodes (z_1 shallowest), dim in
// 0..kCodeDim-1.
struct LatentIndex {
  int code = 1;
  int dim = 0;

  int Flat() const;  // position in the concatenated 40-vector
};

void ValidateLatentIndex(const LatentIndex& index);

// ---------------------------------------------------------------------------
// Integrated gradients along one latent coordinate.

struct AttributionMap {
  torch::Tensor values;  // [H, W] double, channel-summed attribution
  LatentIndex index;
  double baseline_value = 0;
  double target_value = 0;
  int steps = 0;
};

// Maps a [B, kGenomeSize] latent batch to a [B, C, H, W] output batch.
using LatentDecoder = std::function<torch::Tensor(const torch::Tensor&)>;

// Integrates d out / d z_index along the straight path from baseline_value to
// target_value, every other coordinate held at `z`. Midpoint Riemann sum with
// `steps` points, scaled by (target - baseline), summed over channels. The
// decoder must be deterministic per row (eval mode).
AttributionMap LatentIntegratedGradients(const LatentDecoder& decoder,
                                         std::span<const double> z,
                                         const LatentIndex& index,
                                         double baseline_value, double target_value,
                                         int steps, int chunk = 100);
// The model overload runs in float on the model's own weights.
AttributionMap LatentIntegratedGradients(VlaeImpl& model, const LatentHierarchy& z,
                                         const LatentIndex& index,
                                         double baseline_value, double target_value,
                                         int steps);

enum class IgRangeMode {
  kGlobalPerCode,  // max |mu| over the population and all dims of the code
  kPerDimension,   // max |mu| over the population for that dim only
};
IgRangeMode ParseIgRangeMode(const std::string& name);

// max |z| for the baseline (-M) and target (+M) of the attribution path.
double IgRange(const std::vector<LatentHierarchy>& population,
               const LatentIndex& index, IgRangeMode mode);

// (v - mean) / sd over all pixels; all zeros when sd is zero.
torch::Tensor StandardScoreMap(const torch::Tensor& values);

// ---------------------------------------------------------------------------
// Importance and disentanglement/completeness.

struct ImportanceMatrix {
  // r[i][k]: importance of latent i for class k. Non-negative, finite.
  std::vector<std::vector<double>> r;
  std::vector<int> classes;  // original label of each column

  size_t num_latents() const { return r.size(); }
  size_t num_classes() const { return classes.size(); }
  void Validate() const;
};

// Requires >= 2 classes with >= 10 samples each.
ImportanceMatrix ComputeImportanceMatrix(
    const std::vector<std::vector<double>>& features, const std::vector<int>& labels,
    const GbtOptions& options);
ImportanceMatrix ComputeImportanceMatrix(const std::vector<LatentHierarchy>& latents,
                                         const std::vector<int>& labels,
                                         const GbtOptions& options);

struct CodeScores {
  std::optional<double> disentanglement;
  std::optional<double> completeness;
};

struct DisentanglementReport {
  std::vector<std::optional<double>> latent_d;  // per row; nullopt for zero rows
  std::vector<std::optional<double>> class_c;   // per column over all latents
  std::vector<CodeScores> codes;                // per group
  nlohmann::json ToJson() const;
};

// `groups` lists consecutive row counts (defaults to four codes of ten).
// D_i = 1 - H_K(row i normalized); a code's D is the importance-weighted mean
// of its rows' D_i. A code's C is the mean over classes of
// 1 - H_n(column restricted to the code's n rows). Undefined entries (zero
// rows or columns) are excluded from every aggregate.
DisentanglementReport DisentanglementCompleteness(const ImportanceMatrix& m,
                                                  std::vector<int> groups = {});

// ---------------------------------------------------------------------------
// Neighbors, likelihood, traversal.

struct Neighbor {
  size_t index = 0;
  double distance = 0;
};

double MinkowskiDistance(std::span<const double> a, std::span<const double> b,
                         double p);

// Exact k nearest neighbors of `query` on code `code` (1-based) means,
// excluding the query, ordered by (distance, index).
std::vector<Neighbor> NearestNeighbors(const std::vector<LatentHierarchy>& latents,
                                       size_t query, int code, int k, double p = 2.0);

// log N(mu; 0, I) of the concatenated means.
double PriorLogDensity(const LatentHierarchy& z);
// Standard-scored prior log-densities (population standard deviation).
std::vector<double> SampleLikelihood(const std::vector<LatentHierarchy>& latents);

struct Traversal {
  std::vector<double> values;
  std::vector<ImageSample> frames;
};

Traversal LatentTraversal(VlaeImpl& model, const LatentHierarchy& z,
                          const LatentIndex& index, double lo, double hi, int steps);

// Fraction of foreground pixels (alpha > 0.5 in either image) whose RGBA
// values differ by more than `threshold` in any channel.
double DiffSupport(const ImageSample& a, const ImageSample& b, double threshold = 0.05);

// ---------------------------------------------------------------------------
// Dataset helpers and exports.

// Deterministic (mean) codes for every sample, batched.
std::vector<LatentHierarchy> EncodeDataset(VlaeImpl& model,
                                           const std::vector<ImageSample>& samples,
                                           int64_t batch_size = 64);

struct DisentanglementEvaluation {
  ImportanceMatrix importance;
  DisentanglementReport report;
};

// Encodes labelled samples and scores the codes against the labels.
DisentanglementEvaluation EvaluateDisentanglement(
    VlaeImpl& model, const std::vector<ImageSample>& samples, const GbtOptions& options);

// CSV with header source_id,code,dim,mu (code 1-based).
void WriteLatentTable(const std::filesystem::path& path,
                      const std::vector<std::string>& source_ids,
                      const std::vector<LatentHierarchy>& latents);

// Diverging colormap (blue, white, red) of the standard-scored map, clipped
// to +-3 sd. Returns an [H, W, 3] raster on [0, 1].
torch::Tensor AttributionColormap(const AttributionMap& map);

// Writes the colormap as PNG plus a JSON sidecar with the target, steps,
// baseline and target values.
void WriteAttribution(const std::filesystem::path& png_path, const AttributionMap& map);
nlohmann::json AttributionMetadata(const AttributionMap& map);

}  // namespace dhrl

#endif  // DHRL_LATENT_ANALYSIS_H_
