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

#ifndef DHRL_CONFIG_H_
#define DHRL_CONFIG_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "dhrl/infogan.h"
#include "dhrl/objectives.h"
#include "dhrl/vlae.h"

namespace dhrl {

// Where a default value comes from: stated in the source method, or chosen
// here because the method leaves it open.
enum class Provenance { kPaper, kImplementation };

struct ConfigKey {
  std::string key;  // dotted path, e.g. "vlae.learning_rate"
  nlohmann::json default_value;
  Provenance provenance;
  std::string help;
};

// Every recognized key, in help-text order.
const std::vector<ConfigKey>& ConfigKeys();

// Nested JSON holding every default.
nlohmann::json DefaultConfigJson();

// Overlays `overlay` onto the defaults. Unknown keys and type mismatches are
// kInvalidArgument errors; the message lists the valid keys.
nlohmann::json MergeConfig(const nlohmann::json& overlay);

// Applies one "dotted.key=value" override in place. The value is parsed as
// JSON when possible and as a bare string otherwise.
void ApplyOverride(nlohmann::json& config, const std::string& assignment);

// Reads a JSON config file (missing file is kNotFound naming the path),
// merges it onto the defaults and applies the overrides in order.
nlohmann::json LoadConfig(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides = {});

// Help text: every key with its default and provenance.
std::string ConfigHelp();

// JSON Schema (draft-07) for config files, generated from ConfigKeys().
nlohmann::json ConfigSchema();

struct SyntheticSection {
  int64_t n_samples = 0;
  std::string factors;  // "hue:4,layout:4"
  std::string label_factor;
  uint64_t seed = 0;

  SyntheticFactorSpec Spec(int64_t image_size) const;
};

struct GanSection {
  GanConfig model;
  GanTrainOptions train;
  int64_t steps = 0;
  int64_t batch_size = 32;
};

struct VlaeSection {
  VlaeConfig model;
  double learning_rate = 1e-4;
  double finetune_learning_rate = 1e-4;
  double noise_fraction = 0.1;
  int64_t batch_size = 32;
  int64_t pretrain_steps = 0;
  int64_t finetune_steps = 0;
  uint64_t seed = 0;
  uint64_t finetune_seed = 0;
};

struct AnalysisSection {
  int ig_steps = 300;
  std::string ig_max_abs = "global_per_code";
  uint64_t importance_seed = 0;
  int gbt_rounds = 50;
  int gbt_depth = 3;
  double gbt_learning_rate = 0.1;
  double gbt_subsample = 0.8;
  int neighbors_k = 5;
  double minkowski_p = 2.0;
  double traversal_min = -2.0;
  double traversal_max = 2.0;
  int traversal_steps = 5;
};

struct EvolutionSection {
  int64_t population = 1000;
  int64_t generations = 500;
  int64_t weighted_parents = 500;
  int64_t unweighted_parents = 200;
  int64_t offspring = 300;
  double w_orange = 0.5;
  double w_black = 0.5;
  uint64_t seed = 0;
  std::string init = "prior_draw";
  int64_t table_size = 10000;
  uint64_t table_seed = 0;
  int64_t allele_every = 50;
  double fixation_threshold = 0.01;
};

// Typed view of a merged config.
struct RunConfig {
  std::string run_id;
  std::filesystem::path output_dir;
  int64_t checkpoint_every = 500;
  std::filesystem::path dataset_dir;
  int64_t image_size = 64;
  double holdout_fraction = 0.1;
  uint64_t split_seed = 0;
  SyntheticSection synthetic;
  GanSection gan;
  int64_t n_gen = 19000;
  uint64_t generate_seed = 0;
  VlaeSection vlae;
  ObjectiveWeights objectives;
  std::vector<int64_t> extractor_channels;
  uint64_t extractor_seed = 0;
  AnalysisSection analysis;
  EvolutionSection evolution;
  std::string service_host;
  int service_port = 8080;

  nlohmann::json raw;  // merged JSON this view was built from

  // Validates cross-field invariants as well as per-module ones.
  static RunConfig FromJson(const nlohmann::json& merged);
  std::filesystem::path RunDirectory() const { return output_dir / run_id; }
};

}  // namespace dhrl

#endif  // DHRL_CONFIG_H_
