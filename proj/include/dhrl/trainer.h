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

#ifndef DHRL_TRAINER_H_
#define DHRL_TRAINER_H_

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dhrl/config.h"
#include "dhrl/data_pipeline.h"

namespace dhrl {

// Checkpoint tags written into stage manifests.
inline constexpr char kTagStage1[] = "stage1";
inline constexpr char kTagPretrained[] = "pretrained_on_generated";
inline constexpr char kTagFinetuned[] = "finetuned";
inline constexpr char kTagOriginalsOnly[] = "originals_only";
inline constexpr char kTagGeneratedOnly[] = "generated_only";

struct StageResult {
  std::filesystem::path directory;   // checkpoint directory (model.pt + manifest)
  std::string model_sha256;
  double heldout_pixel_loss = 0;     // on held-out originals, after the stage
};

// Original samples split into training and held-out parts.
struct DataSplit {
  std::vector<ImageSample> train;
  std::vector<ImageSample> heldout;
};

// Deterministic split of `samples` by (fraction, seed). The held-out part
// has round(fraction * n) samples.
DataSplit SplitDataset(const std::vector<ImageSample>& samples, double fraction,
                       uint64_t seed);

// Loads config.dataset_dir at config.image_size and splits it.
DataSplit LoadOriginals(const RunConfig& config);

// Per-step progress for callers that want live output.
using ProgressFn = std::function<void(const std::string& stage, int64_t step,
                                      double total_loss)>;

class PipelineTrainer {
 public:
  explicit PipelineTrainer(RunConfig config, ProgressFn progress = nullptr);

  // Stage 1: InfoGAN on the original training split.
  StageResult RunStage1Gan();
  // Stage 2: generate n_gen samples from a stage-1 checkpoint and pretrain
  // the VLAE on them only.
  StageResult RunStage2Pretrain(const std::filesystem::path& gan_checkpoint);
  // Stage 3: fine-tune a stage-2 checkpoint on the original training split.
  // Any other tag is a kFailedPrecondition error.
  StageResult RunStage3Finetune(const std::filesystem::path& vlae_checkpoint);
  // Baselines: a freshly initialized VLAE trained for
  // pretrain_steps + finetune_steps on originals only, or on generated
  // samples only (from a stage-1 checkpoint).
  StageResult RunOriginalsOnly();
  StageResult RunGeneratedOnly(const std::filesystem::path& gan_checkpoint);

  // Mean pixel loss of deterministic reconstructions of the held-out split.
  double HeldoutPixelLoss(const std::filesystem::path& vlae_checkpoint);

  const RunConfig& config() const { return config_; }
  const DataSplit& data();

 private:
  std::filesystem::path StageDir(const std::string& name) const;

  RunConfig config_;
  ProgressFn progress_;
  bool data_loaded_ = false;
  DataSplit data_;
};

}  // namespace dhrl

#endif  // DHRL_TRAINER_H_
