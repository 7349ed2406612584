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

#ifndef DHRL_SERVICE_H_
#define DHRL_SERVICE_H_

#include <filesystem>
#include <memory>
#include <string>

#include "dhrl/config.h"

namespace dhrl {

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  // Static files served under /ui when set.
  std::filesystem::path ui_dir;
  AnalysisSection analysis;
  EvolutionSection evolution;
  // Thumbnails returned by /v1/evolve/status.
  int status_top_k = 4;
};

enum class RunStatus { kCreated, kRunning, kPaused, kFinished };
std::string RunStatusName(RunStatus status);
// Legal edges: created -> running, running <-> paused, running -> finished,
// paused -> finished.
bool IsLegalTransition(RunStatus from, RunStatus to);

// JSON-over-HTTP front end for frozen checkpoints and live evolution runs.
// Every route lives under /v1; errors are {"code", "message"} bodies.
class InferenceService {
 public:
  explicit InferenceService(ServiceOptions options);
  ~InferenceService();
  InferenceService(const InferenceService&) = delete;
  InferenceService& operator=(const InferenceService&) = delete;

  // Loads a VLAE checkpoint, makes it the active model and returns its id.
  std::string LoadModel(const std::filesystem::path& checkpoint);
  // Attaches a saved fitness table to the active model.
  void LoadFitnessTable(const std::filesystem::path& directory);

  // Binds to options.host and an OS-chosen port, returning the port.
  int BindToAnyPort();
  // Binds to options.host:options.port.
  void Bind();
  // Serves until Stop(); call after a successful bind.
  void ListenAfterBind();
  void Stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace dhrl

#endif  // DHRL_SERVICE_H_
