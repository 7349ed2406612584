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

#include "dhrl/trainer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "dhrl/checkpoint.h"
#include "dhrl/common.h"
#include "dhrl/infogan.h"
#include "dhrl/vlae.h"

namespace dhrl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Seed streams.
constexpr uint64_t kInitStream = 0x1417;
constexpr uint64_t kOrderStream = 0x0bde;

// Training images held as one tensor. Generated samples are kept as 8-bit
// values (what their PNG files hold), originals as floats.
struct SampleStore {
  torch::Tensor images;  // [N, 4, S, S], uint8 or float
  std::vector<std::string> ids;

  static SampleStore FromSamples(const std::vector<ImageSample>& samples,
                                 bool quantize) {
    SampleStore s;
    auto batch = ToBatch(samples);
    s.images = quantize ? batch.mul(255.0).round().clamp(0, 255).to(torch::kUInt8)
                        : batch.contiguous();
    for (const auto& x : samples) s.ids.push_back(x.source_id);
    return s;
  }
  int64_t size() const { return images.size(0); }
  torch::Tensor Gather(const torch::Tensor& index) const {
    auto out = images.index_select(0, index);
    return out.scalar_type() == torch::kUInt8 ? out.to(torch::kFloat).div(255.0) : out;
  }
};

// Epoch-shuffled batch order driven only by (seed, epoch).
class BatchSampler {
 public:
  BatchSampler(int64_t n, int64_t batch, uint64_t seed)
      : n_(n), batch_(std::min(batch, n)), seed_(seed) {
    Require(n > 0, "no training samples");
  }

  torch::Tensor Next() {
    if (cursor_ + batch_ > n_ || order_.empty()) {
      order_.resize(n_);
      std::iota(order_.begin(), order_.end(), int64_t{0});
      std::mt19937_64 rng(DeriveSeed(seed_, kOrderStream, epoch_++));
      // Fisher-Yates with an explicit bound so the order does not depend on
      // the standard library's distribution implementation.
      for (int64_t i = n_ - 1; i > 0; --i) {
        const int64_t j = static_cast<int64_t>(rng() % static_cast<uint64_t>(i + 1));
        std::swap(order_[i], order_[j]);
      }
      cursor_ = 0;
    }
    auto idx = torch::from_blob(order_.data() + cursor_, {batch_}, torch::kLong).clone();
    cursor_ += batch_;
    return idx;
  }

 private:
  int64_t n_, batch_;
  uint64_t seed_;
  uint64_t epoch_ = 0;
  int64_t cursor_ = 0;
  std::vector<int64_t> order_;
};

std::string FormatRow(int64_t step, const std::vector<double>& values) {
  std::string row = std::to_string(step);
  char buf[40];
  for (double v : values) {
    std::snprintf(buf, sizeof(buf), ",%.17g", v);
    row += buf;
  }
  return row + "\n";
}

void WriteLineage(const fs::path& dir, const std::string& header,
                  const std::vector<std::string>& ids) {
  std::set<std::string> unique(ids.begin(), ids.end());
  std::string text = "# " + header + "\n";
  for (const auto& id : unique) text += id + "\n";
  WriteFile(dir / "lineage.txt", text);
}

std::string IdsDigest(const std::vector<std::string>& ids) {
  std::string joined;
  for (const auto& id : ids) joined += id + "\n";
  return Sha256Hex(joined);
}

json BaseManifest(const RunConfig& config, const std::string& tag) {
  return {{"stage", tag}, {"run_id", config.run_id}, {"config", config.raw}};
}

// Ensures a checkpoint directory carries one of `allowed` stage tags.
json RequireTag(const fs::path& checkpoint, const std::vector<std::string>& allowed,
                const std::string& what) {
  auto manifest = ReadManifest(CheckpointDirectory(checkpoint));
  const std::string tag = manifest.value("stage", "");
  if (std::find(allowed.begin(), allowed.end(), tag) == allowed.end()) {
    Fail(ErrorCode::kFailedPrecondition,
         what + " requires a checkpoint tagged '" + allowed.front() + "', got '" +
             (tag.empty() ? std::string("<none>") : tag) + "' at " +
             checkpoint.string());
  }
  return manifest;
}

PerceptualExtractor MakeExtractor(const RunConfig& config) {
  return PerceptualExtractor(config.extractor_channels, config.extractor_seed);
}

struct VlaeRun {
  std::string stage;
  fs::path dir;
  int64_t steps = 0;
  double learning_rate = 0;
  uint64_t seed = 0;
};

// Trains `model` on `store`, writing metrics.csv and periodic checkpoints
// under run.dir. Rethrows divergence naming the last good checkpoint.
void TrainVlae(const RunConfig& config, Vlae& model, const SampleStore& store,
               const VlaeRun& run, const json& manifest, const ProgressFn& progress) {
  VlaeTrainOptions opts;
  opts.learning_rate = run.learning_rate;
  opts.noise_fraction = config.vlae.noise_fraction;
  opts.weights = config.objectives;
  opts.seed = run.seed;
  VlaeTrainer trainer(model, MakeExtractor(config), opts);
  BatchSampler sampler(store.size(), config.vlae.batch_size, run.seed);

  std::ofstream metrics(run.dir / "metrics.csv");
  metrics << "step,pixel,perceptual,mmd_z1,mmd_z2,mmd_z3,mmd_z4,total\n";
  fs::path last_good;
  for (int64_t step = 1; step <= run.steps; ++step) {
    VlaeLossReport r;
    try {
      r = trainer.Step(store.Gather(sampler.Next()));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNumerical) throw;
      Fail(ErrorCode::kNumerical,
           run.stage + " diverged: " + e.what() + "; last good checkpoint: " +
               (last_good.empty() ? std::string("<none>") : last_good.string()));
    }
    metrics << FormatRow(step, {r.pixel, r.perceptual, r.mmd[0], r.mmd[1], r.mmd[2],
                                r.mmd[3], r.total});
    if (progress) progress(run.stage, step, r.total);
    if (step % config.checkpoint_every == 0 && step < run.steps) {
      last_good = run.dir / "checkpoints" / ("step_" + std::to_string(step));
      json m = manifest;
      m["steps_completed"] = step;
      SaveVlae(model, last_good, m);
    }
  }
  metrics.close();
}

}  // namespace

DataSplit SplitDataset(const std::vector<ImageSample>& samples, double fraction,
                       uint64_t seed) {
  Require(fraction >= 0 && fraction < 1, "holdout fraction must be in [0, 1)");
  const auto n = static_cast<int64_t>(samples.size());
  const auto held = static_cast<int64_t>(std::llround(fraction * n));
  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), int64_t{0});
  std::mt19937_64 rng(DeriveSeed(seed, 0x5711));
  for (int64_t i = n - 1; i > 0; --i) {
    const int64_t j = static_cast<int64_t>(rng() % static_cast<uint64_t>(i + 1));
    std::swap(order[i], order[j]);
  }
  std::vector<int64_t> heldout(order.begin(), order.begin() + held);
  std::sort(heldout.begin(), heldout.end());
  std::set<int64_t> held_set(heldout.begin(), heldout.end());
  DataSplit split;
  for (int64_t i = 0; i < n; ++i) {
    (held_set.count(i) ? split.heldout : split.train).push_back(samples[i]);
  }
  return split;
}

DataSplit LoadOriginals(const RunConfig& config) {
  if (config.dataset_dir.empty()) {
    Fail(ErrorCode::kInvalidArgument, "data.dataset_dir is not set");
  }
  return SplitDataset(LoadDataset(config.dataset_dir, config.image_size),
                      config.holdout_fraction, config.split_seed);
}

PipelineTrainer::PipelineTrainer(RunConfig config, ProgressFn progress)
    : config_(std::move(config)), progress_(std::move(progress)) {}

const DataSplit& PipelineTrainer::data() {
  if (!data_loaded_) {
    data_ = LoadOriginals(config_);
    Require(!data_.train.empty(), "training split is empty");
    data_loaded_ = true;
  }
  return data_;
}

fs::path PipelineTrainer::StageDir(const std::string& name) const {
  return config_.RunDirectory() / name;
}

StageResult PipelineTrainer::RunStage1Gan() {
  const auto dir = StageDir("stage1");
  fs::create_directories(dir);
  WriteFile(dir / "config.json", config_.raw.dump(2) + "\n");
  const auto store = SampleStore::FromSamples(data().train, /*quantize=*/false);

  torch::manual_seed(DeriveSeed(config_.gan.train.seed, kInitStream));
  GanModel model(config_.gan.model);
  GanTrainer trainer(model, config_.gan.train);
  BatchSampler sampler(store.size(), config_.gan.batch_size, config_.gan.train.seed);

  json manifest = BaseManifest(config_, kTagStage1);
  manifest["seed"] = config_.gan.train.seed;
  manifest["steps"] = config_.gan.steps;
  manifest["predecessor_sha256"] = nullptr;
  manifest["training_data_sha256"] = IdsDigest(store.ids);

  std::ofstream metrics(dir / "metrics.csv");
  metrics << "step,d_loss,g_loss,info_categorical,info_continuous,mi_lower_bound,"
             "value,objective\n";
  fs::path last_good;
  for (int64_t step = 1; step <= config_.gan.steps; ++step) {
    GanLossReport r;
    try {
      r = trainer.Step(store.Gather(sampler.Next()));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNumerical) throw;
      Fail(ErrorCode::kNumerical,
           std::string("stage1 diverged: ") + e.what() + "; last good checkpoint: " +
               (last_good.empty() ? std::string("<none>") : last_good.string()));
    }
    metrics << FormatRow(step, {r.d_loss, r.g_loss, r.info_categorical,
                                r.info_continuous, r.mi_lower_bound, r.value,
                                r.objective});
    if (progress_) progress_("stage1", step, r.d_loss + r.g_loss);
    if (step % config_.checkpoint_every == 0 && step < config_.gan.steps) {
      last_good = dir / "checkpoints" / ("step_" + std::to_string(step));
      json m = manifest;
      m["steps_completed"] = step;
      SaveGan(model, last_good, m);
    }
  }
  metrics.close();
  WriteLineage(dir, "originals used by stage1", store.ids);
  model->eval();
  SaveGan(model, dir, manifest);
  return {dir, Sha256File(dir / kModelFile), 0.0};
}

StageResult PipelineTrainer::RunStage2Pretrain(const fs::path& gan_checkpoint) {
  RequireTag(gan_checkpoint, {kTagStage1}, "stage 2");
  const auto gan_dir = CheckpointDirectory(gan_checkpoint);
  const int64_t originals = static_cast<int64_t>(data().train.size());
  if (config_.n_gen < originals) {
    Fail(ErrorCode::kInvalidArgument,
         "generate.n_gen (" + std::to_string(config_.n_gen) +
             ") must be at least the dataset size (" + std::to_string(originals) + ")");
  }
  const auto dir = StageDir("stage2");
  fs::create_directories(dir);
  WriteFile(dir / "config.json", config_.raw.dump(2) + "\n");

  auto gan = LoadGan(gan_dir);
  gan->eval();
  auto generated = GenerateDecontextualizedDataset(*gan, config_.n_gen,
                                                   config_.generate_seed);
  WriteDataset(dir / "generated", generated);
  const auto store = SampleStore::FromSamples(generated, /*quantize=*/true);
  generated.clear();

  torch::manual_seed(DeriveSeed(config_.vlae.seed, kInitStream));
  Vlae model(config_.vlae.model);
  json manifest = BaseManifest(config_, kTagPretrained);
  manifest["predecessor_sha256"] = Sha256File(gan_dir / kModelFile);
  manifest["n_gen"] = config_.n_gen;
  manifest["generate_seed"] = config_.generate_seed;
  manifest["seed"] = config_.vlae.seed;
  manifest["steps"] = config_.vlae.pretrain_steps;
  manifest["training_data_sha256"] = IdsDigest(store.ids);
  manifest["extractor_checksum"] = MakeExtractor(config_)->Checksum();

  TrainVlae(config_, model, store,
            {"stage2", dir, config_.vlae.pretrain_steps, config_.vlae.learning_rate,
             config_.vlae.seed},
            manifest, progress_);
  WriteLineage(dir, "samples used by stage2 (generated only)", store.ids);
  model->eval();
  SaveVlae(model, dir, manifest);
  const double heldout = HeldoutPixelLoss(dir);
  manifest["heldout_pixel_loss"] = heldout;
  SaveVlae(model, dir, manifest);
  return {dir, Sha256File(dir / kModelFile), heldout};
}

StageResult PipelineTrainer::RunStage3Finetune(const fs::path& vlae_checkpoint) {
  RequireTag(vlae_checkpoint, {kTagPretrained}, "stage 3");
  const auto source_dir = CheckpointDirectory(vlae_checkpoint);
  const auto dir = StageDir("stage3");
  fs::create_directories(dir);
  WriteFile(dir / "config.json", config_.raw.dump(2) + "\n");
  const auto store = SampleStore::FromSamples(data().train, /*quantize=*/false);

  auto model = LoadVlae(source_dir);
  model->train();
  json manifest = BaseManifest(config_, kTagFinetuned);
  manifest["predecessor_sha256"] = Sha256File(source_dir / kModelFile);
  manifest["seed"] = config_.vlae.finetune_seed;
  manifest["steps"] = config_.vlae.finetune_steps;
  manifest["training_data_sha256"] = IdsDigest(store.ids);
  manifest["extractor_checksum"] = MakeExtractor(config_)->Checksum();

  TrainVlae(config_, model, store,
            {"stage3", dir, config_.vlae.finetune_steps,
             config_.vlae.finetune_learning_rate, config_.vlae.finetune_seed},
            manifest, progress_);
  WriteLineage(dir, "originals used by stage3", store.ids);
  model->eval();
  SaveVlae(model, dir, manifest);
  const double heldout = HeldoutPixelLoss(dir);
  manifest["heldout_pixel_loss"] = heldout;
  SaveVlae(model, dir, manifest);
  return {dir, Sha256File(dir / kModelFile), heldout};
}

StageResult PipelineTrainer::RunOriginalsOnly() {
  const auto dir = StageDir("baseline_originals_only");
  fs::create_directories(dir);
  WriteFile(dir / "config.json", config_.raw.dump(2) + "\n");
  const auto store = SampleStore::FromSamples(data().train, /*quantize=*/false);
  torch::manual_seed(DeriveSeed(config_.vlae.seed, kInitStream));
  Vlae model(config_.vlae.model);
  const int64_t steps = config_.vlae.pretrain_steps + config_.vlae.finetune_steps;
  json manifest = BaseManifest(config_, kTagOriginalsOnly);
  manifest["predecessor_sha256"] = nullptr;
  manifest["seed"] = config_.vlae.seed;
  manifest["steps"] = steps;
  manifest["training_data_sha256"] = IdsDigest(store.ids);
  TrainVlae(config_, model, store,
            {"originals_only", dir, steps, config_.vlae.learning_rate, config_.vlae.seed},
            manifest, progress_);
  WriteLineage(dir, "originals used by the originals-only baseline", store.ids);
  model->eval();
  SaveVlae(model, dir, manifest);
  const double heldout = HeldoutPixelLoss(dir);
  manifest["heldout_pixel_loss"] = heldout;
  SaveVlae(model, dir, manifest);
  return {dir, Sha256File(dir / kModelFile), heldout};
}

StageResult PipelineTrainer::RunGeneratedOnly(const fs::path& gan_checkpoint) {
  RequireTag(gan_checkpoint, {kTagStage1}, "generated-only baseline");
  const auto gan_dir = CheckpointDirectory(gan_checkpoint);
  const auto dir = StageDir("baseline_generated_only");
  fs::create_directories(dir);
  WriteFile(dir / "config.json", config_.raw.dump(2) + "\n");
  auto gan = LoadGan(gan_dir);
  gan->eval();
  const auto store = SampleStore::FromSamples(
      GenerateDecontextualizedDataset(*gan, config_.n_gen, config_.generate_seed),
      /*quantize=*/true);
  torch::manual_seed(DeriveSeed(config_.vlae.seed, kInitStream));
  Vlae model(config_.vlae.model);
  const int64_t steps = config_.vlae.pretrain_steps + config_.vlae.finetune_steps;
  json manifest = BaseManifest(config_, kTagGeneratedOnly);
  manifest["predecessor_sha256"] = Sha256File(gan_dir / kModelFile);
  manifest["n_gen"] = config_.n_gen;
  manifest["seed"] = config_.vlae.seed;
  manifest["steps"] = steps;
  manifest["training_data_sha256"] = IdsDigest(store.ids);
  TrainVlae(config_, model, store,
            {"generated_only", dir, steps, config_.vlae.learning_rate, config_.vlae.seed},
            manifest, progress_);
  WriteLineage(dir, "samples used by the generated-only baseline", store.ids);
  model->eval();
  SaveVlae(model, dir, manifest);
  const double heldout = HeldoutPixelLoss(dir);
  manifest["heldout_pixel_loss"] = heldout;
  SaveVlae(model, dir, manifest);
  return {dir, Sha256File(dir / kModelFile), heldout};
}

double PipelineTrainer::HeldoutPixelLoss(const fs::path& vlae_checkpoint) {
  const auto& heldout = data().heldout;
  if (heldout.empty()) return std::nan("");
  auto model = LoadVlae(vlae_checkpoint);
  torch::NoGradGuard no_grad;
  auto x = ToBatch(heldout);
  double total = 0;
  const int64_t chunk = 64;
  for (int64_t start = 0; start < x.size(0); start += chunk) {
    auto part = x.slice(0, start, std::min(start + chunk, x.size(0)));
    auto out = model->Encode(part);
    auto recon = model->Decode(out.mu);
    total += (recon - part).pow(2).mean({1, 2, 3}).sum().item<double>();
  }
  return total / static_cast<double>(x.size(0));
}

}  // namespace dhrl
