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

#include "dhrl/checkpoint.h"

#include <chrono>
#include <ctime>

#include "dhrl/common.h"

namespace dhrl {

namespace fs = std::filesystem;

void SaveModule(torch::nn::Module& module, const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  torch::serialize::OutputArchive archive;
  module.save(archive);
  archive.save_to(file.string());
}

void LoadModule(torch::nn::Module& module, const fs::path& file) {
  if (!fs::exists(file)) {
    Fail(ErrorCode::kNotFound, "checkpoint file not found: " + file.string());
  }
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(file.string());
    module.load(archive);
  } catch (const c10::Error& e) {
    Fail(ErrorCode::kInvalidArgument,
         "cannot load " + file.string() + ": " + e.what_without_backtrace());
  }
}

std::string UtcTimestamp() {
  const auto now = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buffer[32];
  std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buffer;
}

void WriteManifest(const fs::path& directory, nlohmann::json manifest) {
  manifest["format_version"] = kCheckpointFormatVersion;
  if (fs::exists(directory / kModelFile)) {
    manifest["model_sha256"] = Sha256File(directory / kModelFile);
  }
  manifest["created_at"] = UtcTimestamp();
  WriteFile(directory / kManifestFile, manifest.dump(2) + "\n");
}

nlohmann::json ReadManifest(const fs::path& directory) {
  const fs::path file = CheckpointDirectory(directory) / kManifestFile;
  if (!fs::exists(file)) {
    Fail(ErrorCode::kNotFound, "manifest not found: " + file.string());
  }
  try {
    auto manifest = nlohmann::json::parse(ReadFile(file));
    if (manifest.value("format_version", 0) != kCheckpointFormatVersion) {
      Fail(ErrorCode::kInvalidArgument,
           "unsupported checkpoint format in " + file.string());
    }
    return manifest;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kInvalidArgument,
         "malformed manifest " + file.string() + ": " + e.what());
  }
}

fs::path CheckpointDirectory(const fs::path& path) {
  if (fs::is_directory(path)) return path;
  if (!fs::exists(path)) {
    Fail(ErrorCode::kNotFound, "checkpoint not found: " + path.string());
  }
  return path.parent_path().empty() ? fs::path(".") : path.parent_path();
}

nlohmann::json StableManifest(nlohmann::json manifest) {
  manifest.erase("created_at");
  return manifest;
}

}  // namespace dhrl
