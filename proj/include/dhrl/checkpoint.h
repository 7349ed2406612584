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

#ifndef DHRL_CHECKPOINT_H_
#define DHRL_CHECKPOINT_H_

#include <torch/torch.h>

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

namespace dhrl {

// A checkpoint is a directory holding `model.pt` (torch archive of the module
// state) and `manifest.json`.
inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr char kModelFile[] = "model.pt";
inline constexpr char kManifestFile[] = "manifest.json";

void SaveModule(torch::nn::Module& module, const std::filesystem::path& file);
void LoadModule(torch::nn::Module& module, const std::filesystem::path& file);

// Writes manifest.json. Adds format_version, model_sha256 (hash of model.pt
// when present) and created_at.
void WriteManifest(const std::filesystem::path& directory,
                   nlohmann::json manifest);
nlohmann::json ReadManifest(const std::filesystem::path& directory);

// Accepts either a checkpoint directory or a path to its manifest/model file.
std::filesystem::path CheckpointDirectory(const std::filesystem::path& path);

// Manifest with volatile fields (created_at) removed; used for lineage
// comparisons between reruns.
nlohmann::json StableManifest(nlohmann::json manifest);

std::string UtcTimestamp();

}  // namespace dhrl

#endif  // DHRL_CHECKPOINT_H_
