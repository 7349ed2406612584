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

#include "dhrl/config.h"

#include <absl/strings/str_join.h>
#include <absl/strings/str_split.h>

#include <sstream>

#include "dhrl/common.h"

namespace dhrl {

using nlohmann::json;

namespace {

constexpr Provenance kPaper = Provenance::kPaper;
constexpr Provenance kImpl = Provenance::kImplementation;

std::vector<ConfigKey> BuildKeys() {
  return {
      {"run.id", "desk", kImpl, "run identifier; outputs go to <output_dir>/<id>"},
      {"run.output_dir", "runs", kImpl, "root directory for run outputs"},
      {"run.checkpoint_every", 500, kImpl, "intermediate checkpoint cadence in steps"},

      {"data.dataset_dir", "", kImpl, "directory of RGBA PNGs (+ labels.csv)"},
      {"data.image_size", 64, kImpl, "square training resolution (32/64/128/256)"},
      {"data.holdout_fraction", 0.1, kImpl, "share of originals held out for evaluation"},
      {"data.split_seed", 11, kImpl, "seed of the train/held-out split"},

      {"synthetic.n_samples", 1000, kImpl, "make-synthetic sample count"},
      {"synthetic.factors", "hue:4,layout:4,size:3,length:3", kImpl,
       "make-synthetic factors as name:cardinality list"},
      {"synthetic.label_factor", "layout", kImpl, "factor written as the class label"},
      {"synthetic.seed", 7, kImpl, "make-synthetic seed"},

      {"gan.categories", 19, kPaper, "categorical code size K"},
      {"gan.continuous", 2, kPaper, "continuous code count"},
      {"gan.base_channels", 64, kImpl, "layer width next to the image, doubling toward 4x4"},
      {"gan.lambda_info", 0.1, kImpl, "information term weight"},
      {"gan.learning_rate", 2e-4, kImpl, "Adam learning rate"},
      {"gan.beta1", 0.5, kImpl, "Adam beta1"},
      {"gan.beta2", 0.999, kImpl, "Adam beta2"},
      {"gan.batch_size", 32, kImpl, "stage-1 batch size"},
      {"gan.steps", 2000, kImpl, "stage-1 training steps"},
      {"gan.seed", 1, kImpl, "stage-1 seed"},

      {"generate.n_gen", 19000, kPaper, "generated samples for stage 2"},
      {"generate.seed", 2, kImpl, "generation seed"},

      {"vlae.channels", {16, 64, 256, 1024}, kPaper, "per-rung base widths N"},
      {"vlae.se_reduction", 16, kPaper, "squeeze-excite reduction ratio"},
      {"vlae.sn_power_iters", 5, kImpl, "spectral-norm power iterations per step"},
      {"vlae.learning_rate", 1e-4, kImpl, "stage-2 Adam learning rate"},
      {"vlae.finetune_learning_rate", 1e-4, kImpl, "stage-3 Adam learning rate"},
      {"vlae.noise_fraction", 0.1, kPaper, "salt-and-pepper pixel fraction"},
      {"vlae.batch_size", 32, kImpl, "VLAE batch size"},
      {"vlae.pretrain_steps", 3000, kImpl, "stage-2 steps"},
      {"vlae.finetune_steps", 1000, kImpl, "stage-3 steps"},
      {"vlae.seed", 3, kImpl, "stage-2 seed (init and noise)"},
      {"vlae.finetune_seed", 4, kImpl, "stage-3 seed"},

      {"objectives.alpha", 1e-6, kPaper, "perceptual weight"},
      {"objectives.beta", 1e5, kPaper, "pixel weight"},
      {"objectives.lambda_mmd", 1.0, kImpl, "MMD weight per latent code"},
      {"objectives.bandwidths", DefaultMmdBandwidths(), kPaper,
       "MMD kernel bandwidths (sigma^2), ascending"},

      {"extractor.channels", {8, 16, 32, 64}, kImpl,
       "fixed perceptual extractor stage widths"},
      {"extractor.seed", 20260101, kImpl, "perceptual extractor weight seed"},

      {"analysis.ig_steps", 300, kPaper, "Riemann steps m for integrated gradients"},
      {"analysis.ig_max_abs", "global_per_code", kImpl,
       "IG range source: global_per_code or per_dimension"},
      {"analysis.importance_seed", 5, kImpl, "importance estimator seed"},
      {"analysis.gbt_rounds", 50, kImpl, "boosting rounds per class"},
      {"analysis.gbt_depth", 3, kImpl, "tree depth"},
      {"analysis.gbt_learning_rate", 0.1, kImpl, "boosting shrinkage"},
      {"analysis.gbt_subsample", 0.8, kImpl, "row subsample per round"},
      {"analysis.neighbors_k", 5, kImpl, "nearest neighbours returned"},
      {"analysis.minkowski_p", 2.0, kImpl, "Minkowski order"},
      {"analysis.traversal_min", -2.0, kPaper, "traversal start"},
      {"analysis.traversal_max", 2.0, kPaper, "traversal end"},
      {"analysis.traversal_steps", 5, kImpl, "traversal frames"},

      {"evolution.population", 1000, kPaper, "population size"},
      {"evolution.generations", 500, kPaper, "generations"},
      {"evolution.weighted_parents", 500, kPaper, "fitness-proportional parents"},
      {"evolution.unweighted_parents", 200, kPaper, "uniformly drawn parents"},
      {"evolution.offspring", 300, kPaper, "offspring per generation"},
      {"evolution.w_orange", 0.5, kPaper, "orange range weight"},
      {"evolution.w_black", 0.5, kPaper, "black range weight"},
      {"evolution.seed", 6, kImpl, "evolution seed"},
      {"evolution.init", "prior_draw", kImpl, "prior_draw or dataset_embedding"},
      {"evolution.table_size", 10000, kImpl, "fitness reference table entries"},
      {"evolution.table_seed", 8, kImpl, "reference table seed"},
      {"evolution.allele_every", 50, kImpl, "allele matrix snapshot cadence"},
      {"evolution.fixation_threshold", 0.01, kImpl, "variance below which an allele is fixed"},

      {"service.host", "127.0.0.1", kImpl, "bind address"},
      {"service.port", 8080, kImpl, "bind port"},
  };
}

json::json_pointer Pointer(const std::string& dotted) {
  std::string path;
  for (const auto& part : absl::StrSplit(dotted, '.')) {
    path += "/";
    path += std::string(part);
  }
  return json::json_pointer(path);
}

const ConfigKey* FindKey(const std::string& key) {
  for (const auto& k : ConfigKeys()) {
    if (k.key == key) return &k;
  }
  return nullptr;
}

std::string ValidKeyList() {
  std::vector<std::string> keys;
  for (const auto& k : ConfigKeys()) keys.push_back(k.key);
  return absl::StrJoin(keys, ", ");
}

[[noreturn]] void UnknownKey(const std::string& key) {
  Fail(ErrorCode::kInvalidArgument,
       "unknown config key '" + key + "'; valid keys: " + ValidKeyList());
}

bool SameKind(const json& expected, const json& value) {
  if (expected.is_number()) {
    if (!value.is_number()) return false;
    // An integer default accepts only integers.
    return !expected.is_number_integer() || value.is_number_integer();
  }
  return expected.type() == value.type();
}

void SetChecked(json& config, const ConfigKey& key, const json& value) {
  if (!SameKind(key.default_value, value)) {
    Fail(ErrorCode::kInvalidArgument,
         "config key '" + key.key + "' expects a value like " +
             key.default_value.dump() + ", got " + value.dump());
  }
  config[Pointer(key.key)] = value;
}

void Flatten(const json& node, const std::string& prefix,
             std::vector<std::pair<std::string, json>>& out) {
  if (node.is_object() && !FindKey(prefix)) {
    for (const auto& [name, child] : node.items()) {
      Flatten(child, prefix.empty() ? name : prefix + "." + name, out);
    }
    return;
  }
  out.emplace_back(prefix, node);
}

template <typename T>
T Get(const json& j, const std::string& key) {
  return j.at(Pointer(key)).get<T>();
}

}  // namespace

const std::vector<ConfigKey>& ConfigKeys() {
  static const std::vector<ConfigKey> keys = BuildKeys();
  return keys;
}

json DefaultConfigJson() {
  json config = json::object();
  for (const auto& k : ConfigKeys()) config[Pointer(k.key)] = k.default_value;
  return config;
}

json MergeConfig(const json& overlay) {
  Require(overlay.is_object(), "config must be a JSON object");
  json config = DefaultConfigJson();
  std::vector<std::pair<std::string, json>> leaves;
  Flatten(overlay, "", leaves);
  for (const auto& [key, value] : leaves) {
    const ConfigKey* k = FindKey(key);
    if (!k) UnknownKey(key);
    SetChecked(config, *k, value);
  }
  return config;
}

void ApplyOverride(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    Fail(ErrorCode::kInvalidArgument,
         "override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  const ConfigKey* k = FindKey(key);
  if (!k) UnknownKey(key);
  json value = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (value.is_discarded()) value = text;
  SetChecked(config, *k, value);
}

json LoadConfig(const std::filesystem::path& path,
                const std::vector<std::string>& overrides) {
  json overlay = json::object();
  if (!path.empty()) {
    if (!std::filesystem::exists(path)) {
      Fail(ErrorCode::kNotFound, "config file not found: " + path.string());
    }
    try {
      overlay = json::parse(ReadFile(path));
    } catch (const json::parse_error& e) {
      Fail(ErrorCode::kInvalidArgument,
           "config " + path.string() + " is not valid JSON: " + e.what());
    }
  }
  json config = MergeConfig(overlay);
  for (const auto& o : overrides) ApplyOverride(config, o);
  return config;
}

std::string ConfigHelp() {
  std::ostringstream out;
  out << "Config keys (default, source):\n";
  for (const auto& k : ConfigKeys()) {
    out << "  " << k.key << " = " << k.default_value.dump() << "  ["
        << (k.provenance == Provenance::kPaper ? "paper" : "implementation")
        << "]\n      " << k.help << "\n";
  }
  return out.str();
}

json ConfigSchema() {
  auto type_of = [](const json& v) -> json {
    if (v.is_boolean()) return "boolean";
    if (v.is_number_integer()) return "integer";
    if (v.is_number()) return "number";
    if (v.is_string()) return "string";
    if (v.is_array()) {
      json items = v.empty() || v[0].is_number_integer() ? json{{"type", "integer"}}
                                                          : json{{"type", "number"}};
      return json{{"type", "array"}, {"items", items}};
    }
    return "object";
  };
  json schema = {{"$schema", "http://json-schema.org/draft-07/schema#"},
                 {"title", "DHRL run config"},
                 {"type", "object"},
                 {"additionalProperties", false},
                 {"properties", json::object()}};
  for (const auto& k : ConfigKeys()) {
    const auto dot = k.key.find('.');
    const std::string section = k.key.substr(0, dot);
    const std::string name = k.key.substr(dot + 1);
    json& sec = schema["properties"][section];
    if (sec.is_null()) {
      sec = {{"type", "object"}, {"additionalProperties", false}, {"properties", json::object()}};
    }
    json prop = type_of(k.default_value);
    if (prop.is_string()) prop = json{{"type", prop}};
    prop["default"] = k.default_value;
    prop["description"] = k.help;
    prop["x-default-source"] = k.provenance == Provenance::kPaper ? "paper" : "implementation";
    sec["properties"][name] = prop;
  }
  return schema;
}

SyntheticFactorSpec SyntheticSection::Spec(int64_t image_size) const {
  SyntheticFactorSpec spec;
  spec.n_samples = n_samples;
  spec.image_size = image_size;
  spec.label_factor = label_factor;
  spec.seed = seed;
  for (const auto& item : absl::StrSplit(factors, ',', absl::SkipEmpty())) {
    std::vector<std::string> parts = absl::StrSplit(item, ':');
    Require(parts.size() == 2, "synthetic factor '" + std::string(item) +
                                   "' must look like name:cardinality");
    int cardinality = 0;
    try {
      cardinality = std::stoi(parts[1]);
    } catch (const std::exception&) {
      Fail(ErrorCode::kInvalidArgument,
           "bad cardinality in synthetic factor '" + std::string(item) + "'");
    }
    spec.factors.push_back({parts[0], cardinality});
  }
  return spec;
}

RunConfig RunConfig::FromJson(const json& merged) {
  RunConfig c;
  c.raw = merged;
  try {
    c.run_id = Get<std::string>(merged, "run.id");
    c.output_dir = Get<std::string>(merged, "run.output_dir");
    c.checkpoint_every = Get<int64_t>(merged, "run.checkpoint_every");
    c.dataset_dir = Get<std::string>(merged, "data.dataset_dir");
    c.image_size = Get<int64_t>(merged, "data.image_size");
    c.holdout_fraction = Get<double>(merged, "data.holdout_fraction");
    c.split_seed = Get<uint64_t>(merged, "data.split_seed");

    c.synthetic.n_samples = Get<int64_t>(merged, "synthetic.n_samples");
    c.synthetic.factors = Get<std::string>(merged, "synthetic.factors");
    c.synthetic.label_factor = Get<std::string>(merged, "synthetic.label_factor");
    c.synthetic.seed = Get<uint64_t>(merged, "synthetic.seed");

    c.gan.model.image_size = c.image_size;
    c.gan.model.categories = Get<int>(merged, "gan.categories");
    c.gan.model.continuous = Get<int>(merged, "gan.continuous");
    c.gan.model.base_channels = Get<int64_t>(merged, "gan.base_channels");
    c.gan.train.lambda_info = Get<double>(merged, "gan.lambda_info");
    c.gan.train.learning_rate = Get<double>(merged, "gan.learning_rate");
    c.gan.train.beta1 = Get<double>(merged, "gan.beta1");
    c.gan.train.beta2 = Get<double>(merged, "gan.beta2");
    c.gan.train.seed = Get<uint64_t>(merged, "gan.seed");
    c.gan.batch_size = Get<int64_t>(merged, "gan.batch_size");
    c.gan.steps = Get<int64_t>(merged, "gan.steps");

    c.n_gen = Get<int64_t>(merged, "generate.n_gen");
    c.generate_seed = Get<uint64_t>(merged, "generate.seed");

    c.vlae.model.image_size = c.image_size;
    c.vlae.model.channels =
        Get<std::array<int64_t, kNumCodes>>(merged, "vlae.channels");
    c.vlae.model.se_reduction = Get<int64_t>(merged, "vlae.se_reduction");
    c.vlae.model.sn_power_iters = Get<int>(merged, "vlae.sn_power_iters");
    c.vlae.learning_rate = Get<double>(merged, "vlae.learning_rate");
    c.vlae.finetune_learning_rate = Get<double>(merged, "vlae.finetune_learning_rate");
    c.vlae.noise_fraction = Get<double>(merged, "vlae.noise_fraction");
    c.vlae.batch_size = Get<int64_t>(merged, "vlae.batch_size");
    c.vlae.pretrain_steps = Get<int64_t>(merged, "vlae.pretrain_steps");
    c.vlae.finetune_steps = Get<int64_t>(merged, "vlae.finetune_steps");
    c.vlae.seed = Get<uint64_t>(merged, "vlae.seed");
    c.vlae.finetune_seed = Get<uint64_t>(merged, "vlae.finetune_seed");

    c.objectives.alpha = Get<double>(merged, "objectives.alpha");
    c.objectives.beta = Get<double>(merged, "objectives.beta");
    c.objectives.lambda_mmd = Get<double>(merged, "objectives.lambda_mmd");
    c.objectives.bandwidths = Get<std::vector<double>>(merged, "objectives.bandwidths");

    c.extractor_channels = Get<std::vector<int64_t>>(merged, "extractor.channels");
    c.extractor_seed = Get<uint64_t>(merged, "extractor.seed");

    auto& a = c.analysis;
    a.ig_steps = Get<int>(merged, "analysis.ig_steps");
    a.ig_max_abs = Get<std::string>(merged, "analysis.ig_max_abs");
    a.importance_seed = Get<uint64_t>(merged, "analysis.importance_seed");
    a.gbt_rounds = Get<int>(merged, "analysis.gbt_rounds");
    a.gbt_depth = Get<int>(merged, "analysis.gbt_depth");
    a.gbt_learning_rate = Get<double>(merged, "analysis.gbt_learning_rate");
    a.gbt_subsample = Get<double>(merged, "analysis.gbt_subsample");
    a.neighbors_k = Get<int>(merged, "analysis.neighbors_k");
    a.minkowski_p = Get<double>(merged, "analysis.minkowski_p");
    a.traversal_min = Get<double>(merged, "analysis.traversal_min");
    a.traversal_max = Get<double>(merged, "analysis.traversal_max");
    a.traversal_steps = Get<int>(merged, "analysis.traversal_steps");

    auto& e = c.evolution;
    e.population = Get<int64_t>(merged, "evolution.population");
    e.generations = Get<int64_t>(merged, "evolution.generations");
    e.weighted_parents = Get<int64_t>(merged, "evolution.weighted_parents");
    e.unweighted_parents = Get<int64_t>(merged, "evolution.unweighted_parents");
    e.offspring = Get<int64_t>(merged, "evolution.offspring");
    e.w_orange = Get<double>(merged, "evolution.w_orange");
    e.w_black = Get<double>(merged, "evolution.w_black");
    e.seed = Get<uint64_t>(merged, "evolution.seed");
    e.init = Get<std::string>(merged, "evolution.init");
    e.table_size = Get<int64_t>(merged, "evolution.table_size");
    e.table_seed = Get<uint64_t>(merged, "evolution.table_seed");
    e.allele_every = Get<int64_t>(merged, "evolution.allele_every");
    e.fixation_threshold = Get<double>(merged, "evolution.fixation_threshold");

    c.service_host = Get<std::string>(merged, "service.host");
    c.service_port = Get<int>(merged, "service.port");
  } catch (const json::exception& ex) {
    Fail(ErrorCode::kInvalidArgument, std::string("malformed config: ") + ex.what());
  }

  Require(!c.run_id.empty() && c.run_id.find('/') == std::string::npos,
          "run.id must be a non-empty name without '/'");
  Require(c.checkpoint_every >= 1, "run.checkpoint_every must be >= 1");
  Require(IsSupportedImageSize(c.image_size),
          "data.image_size must be one of 32, 64, 128, 256");
  Require(c.holdout_fraction >= 0 && c.holdout_fraction < 1,
          "data.holdout_fraction must be in [0, 1)");
  Require(c.gan.steps >= 0 && c.gan.batch_size >= 1, "gan steps/batch invalid");
  Require(c.n_gen >= 0, "generate.n_gen must be >= 0");
  Require(c.vlae.pretrain_steps >= 0 && c.vlae.finetune_steps >= 0 &&
              c.vlae.batch_size >= 1,
          "vlae steps/batch invalid");
  Require(c.vlae.noise_fraction >= 0 && c.vlae.noise_fraction <= 1,
          "vlae.noise_fraction must be in [0, 1]");
  Require(!c.extractor_channels.empty(), "extractor.channels must be non-empty");
  Require(c.analysis.ig_steps >= 1, "analysis.ig_steps must be >= 1");
  Require(c.analysis.ig_max_abs == "global_per_code" ||
              c.analysis.ig_max_abs == "per_dimension",
          "analysis.ig_max_abs must be global_per_code or per_dimension");
  Require(c.analysis.minkowski_p >= 1, "analysis.minkowski_p must be >= 1");
  Require(c.analysis.traversal_steps >= 2, "analysis.traversal_steps must be >= 2");
  Require(c.evolution.weighted_parents + c.evolution.unweighted_parents +
                  c.evolution.offspring ==
              c.evolution.population,
          "evolution: weighted + unweighted parents + offspring must equal population");
  Require(c.evolution.init == "prior_draw" || c.evolution.init == "dataset_embedding",
          "evolution.init must be prior_draw or dataset_embedding");
  Require(c.evolution.w_orange >= 0 && c.evolution.w_black >= 0,
          "fitness weights must be non-negative");
  Require(c.service_port > 0 && c.service_port < 65536, "service.port out of range");
  c.gan.model.Validate();
  c.vlae.model.Validate();
  c.objectives.Validate();
  return c;
}

}  // namespace dhrl
