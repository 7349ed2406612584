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

#include <gtest/gtest.h>

#include <filesystem>

#include "dhrl/common.h"

namespace dhrl {
namespace {

using nlohmann::json;

TEST(Config, DefaultsCarryTheMethodValues) {
  auto c = RunConfig::FromJson(DefaultConfigJson());
  EXPECT_EQ(c.objectives.alpha, 1e-6);
  EXPECT_EQ(c.objectives.beta, 1e5);
  EXPECT_EQ(c.objectives.bandwidths,
            (std::vector<double>{1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1, 5, 10, 15, 20,
                                 25, 30, 35, 100, 1e3, 1e4, 1e5, 1e6}));
  EXPECT_EQ(c.vlae.model.channels, (std::array<int64_t, 4>{16, 64, 256, 1024}));
  EXPECT_EQ(c.vlae.noise_fraction, 0.10);
  EXPECT_EQ(c.gan.model.categories, 19);
  EXPECT_EQ(c.gan.model.continuous, 2);
  EXPECT_EQ(c.n_gen, 19000);
  EXPECT_EQ(c.analysis.ig_steps, 300);
  EXPECT_EQ(c.analysis.traversal_min, -2.0);
  EXPECT_EQ(c.analysis.traversal_max, 2.0);
  EXPECT_EQ(c.evolution.population, 1000);
  EXPECT_EQ(c.evolution.generations, 500);
  EXPECT_EQ(c.evolution.weighted_parents, 500);
  EXPECT_EQ(c.evolution.unweighted_parents, 200);
  EXPECT_EQ(c.evolution.offspring, 300);
  EXPECT_EQ(c.evolution.w_orange, 0.5);
  EXPECT_EQ(c.evolution.w_black, 0.5);
  EXPECT_EQ(c.checkpoint_every, 500);
  EXPECT_EQ(c.service_port, 8080);
}

TEST(Config, UnknownKeyListsValidKeys) {
  try {
    MergeConfig(json::parse(R"({"vlae": {"learning_rat": 0.1}})"));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("vlae.learning_rat"), std::string::npos);
    EXPECT_NE(msg.find("vlae.learning_rate"), std::string::npos);
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
  json c = DefaultConfigJson();
  EXPECT_THROW(ApplyOverride(c, "nope=1"), Error);
}

TEST(Config, TypeMismatchIsRejected) {
  EXPECT_THROW(MergeConfig(json::parse(R"({"gan": {"steps": "many"}})")), Error);
  EXPECT_THROW(MergeConfig(json::parse(R"({"gan": {"steps": 1.5}})")), Error);
  // Integers are acceptable where a real is expected.
  EXPECT_NO_THROW(MergeConfig(json::parse(R"({"vlae": {"learning_rate": 1}})")));
}

TEST(Config, OverridesParseJsonOrFallBackToStrings) {
  json c = DefaultConfigJson();
  ApplyOverride(c, "gan.steps=12");
  ApplyOverride(c, "run.id=abc");
  ApplyOverride(c, "vlae.channels=[4,8,16,32]");
  ApplyOverride(c, "objectives.alpha=0");
  auto rc = RunConfig::FromJson(c);
  EXPECT_EQ(rc.gan.steps, 12);
  EXPECT_EQ(rc.run_id, "abc");
  EXPECT_EQ(rc.vlae.model.channels, (std::array<int64_t, 4>{4, 8, 16, 32}));
  EXPECT_EQ(rc.objectives.alpha, 0.0);
  EXPECT_THROW(ApplyOverride(c, "gan.steps"), Error);
}

TEST(Config, MissingFileNamesThePath) {
  try {
    LoadConfig("/nonexistent/c.json");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotFound);
    EXPECT_NE(std::string(e.what()).find("/nonexistent/c.json"), std::string::npos);
  }
}

TEST(Config, FileThenOverridesInOrder) {
  auto path = std::filesystem::temp_directory_path() / "dhrl_config_test.json";
  WriteFile(path, R"({"gan": {"steps": 5}, "evolution": {"seed": 9}})");
  auto c = RunConfig::FromJson(LoadConfig(path, {"gan.steps=7"}));
  EXPECT_EQ(c.gan.steps, 7);
  EXPECT_EQ(c.evolution.seed, 9u);
  WriteFile(path, "{not json");
  EXPECT_THROW(LoadConfig(path), Error);
}

TEST(Config, CrossFieldValidation) {
  json c = DefaultConfigJson();
  ApplyOverride(c, "evolution.offspring=301");
  EXPECT_THROW(RunConfig::FromJson(c), Error);
  c = DefaultConfigJson();
  ApplyOverride(c, "data.image_size=48");
  EXPECT_THROW(RunConfig::FromJson(c), Error);
  c = DefaultConfigJson();
  ApplyOverride(c, "objectives.bandwidths=[2, 1]");
  EXPECT_THROW(RunConfig::FromJson(c), Error);
}

TEST(Config, HelpListsEveryKeyWithProvenance) {
  const auto help = ConfigHelp();
  for (const auto& k : ConfigKeys()) {
    EXPECT_NE(help.find(k.key + " = "), std::string::npos) << k.key;
  }
  EXPECT_NE(help.find("objectives.alpha = 1e-06  [paper]"), std::string::npos);
  EXPECT_NE(help.find("vlae.batch_size = 32  [implementation]"), std::string::npos);
}

TEST(Config, SyntheticFactorList) {
  SyntheticSection s{10, "hue:4,layout:3", "layout", 1};
  auto spec = s.Spec(32);
  ASSERT_EQ(spec.factors.size(), 2u);
  EXPECT_EQ(spec.factors[1].name, "layout");
  EXPECT_EQ(spec.factors[1].cardinality, 3);
  s.factors = "hue";
  EXPECT_THROW(s.Spec(32), Error);
}

TEST(Config, SchemaDescribesEveryKey) {
  const auto schema = ConfigSchema();
  EXPECT_EQ(schema["additionalProperties"], false);
  for (const auto& k : ConfigKeys()) {
    const auto dot = k.key.find('.');
    const auto& section = schema["properties"][k.key.substr(0, dot)];
    ASSERT_TRUE(section.is_object()) << k.key;
    EXPECT_EQ(section["additionalProperties"], false);
    const auto& prop = section["properties"][k.key.substr(dot + 1)];
    ASSERT_TRUE(prop.is_object()) << k.key;
    EXPECT_EQ(prop["default"], k.default_value) << k.key;
    EXPECT_EQ(prop["x-default-source"],
              k.provenance == Provenance::kPaper ? "paper" : "implementation");
  }
  EXPECT_EQ(schema["properties"]["vlae"]["properties"]["channels"]["type"], "array");
  EXPECT_EQ(schema["properties"]["run"]["properties"]["checkpoint_every"]["type"], "integer");
  EXPECT_EQ(schema["properties"]["objectives"]["properties"]["alpha"]["type"], "number");
}

}  // namespace
}  // namespace dhrl
