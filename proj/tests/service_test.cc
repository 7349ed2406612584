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

#include "dhrl/service.h"

#include <absl/strings/escaping.h>
#include <gtest/gtest.h>
#include <httplib.h>

#include <chrono>
#include <filesystem>
#include <thread>

#include "dhrl/common.h"
#include "dhrl/data_pipeline.h"
#include "dhrl/vlae.h"

namespace dhrl {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path TinyCheckpoint() {
  const auto dir = fs::temp_directory_path() / "dhrl_service_ckpt";
  fs::remove_all(dir);
  VlaeConfig c;
  c.image_size = 32;
  c.channels = {4, 8, 8, 16};
  torch::manual_seed(3);
  Vlae model(c);
  model->eval();
  SaveVlae(model, dir, {{"seed", 3}});
  return dir;
}

std::string PngB64(const torch::Tensor& hwc) { return absl::Base64Escape(EncodePng(hwc)); }

torch::Tensor FromB64(const std::string& b64) {
  std::string bytes;
  EXPECT_TRUE(absl::Base64Unescape(b64, &bytes));
  return DecodePng(bytes);
}

// A running server on an ephemeral port plus a client aimed at it.
class Harness {
 public:
  explicit Harness(bool with_model) : service_(Options()) {
    if (with_model) checkpoint_ = service_.LoadModel(TinyCheckpoint());
    port_ = service_.BindToAnyPort();
    thread_ = std::thread([this] { service_.ListenAfterBind(); });
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    client_->set_read_timeout(120, 0);
  }
  ~Harness() {
    service_.Stop();
    thread_.join();
  }

  static ServiceOptions Options() {
    ServiceOptions o;
    o.analysis.ig_steps = 20;
    o.status_top_k = 2;
    return o;
  }

  std::pair<int, json> Post(const std::string& path, const json& body) {
    return Parse(client_->Post(path, body.dump(), "application/json"));
  }
  std::pair<int, json> Patch(const std::string& path, const json& body) {
    return Parse(client_->Patch(path, body.dump(), "application/json"));
  }
  std::pair<int, json> Get(const std::string& path) { return Parse(client_->Get(path)); }

  const std::string& checkpoint() const { return checkpoint_; }

 private:
  static std::pair<int, json> Parse(const httplib::Result& r) {
    if (!r) return {-1, json()};
    return {r->status, json::parse(r->body, nullptr, false)};
  }

  InferenceService service_;
  std::string checkpoint_;
  int port_ = 0;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
};

json ZeroCodes() { return json(std::vector<std::vector<double>>(4, std::vector<double>(10, 0.0))); }

TEST(RunStatus, LegalTransitions) {
  using S = RunStatus;
  EXPECT_TRUE(IsLegalTransition(S::kCreated, S::kRunning));
  EXPECT_TRUE(IsLegalTransition(S::kRunning, S::kPaused));
  EXPECT_TRUE(IsLegalTransition(S::kPaused, S::kRunning));
  EXPECT_TRUE(IsLegalTransition(S::kRunning, S::kFinished));
  EXPECT_TRUE(IsLegalTransition(S::kPaused, S::kFinished));
  EXPECT_FALSE(IsLegalTransition(S::kCreated, S::kPaused));
  EXPECT_FALSE(IsLegalTransition(S::kCreated, S::kFinished));
  for (auto to : {S::kCreated, S::kRunning, S::kPaused, S::kFinished}) {
    EXPECT_FALSE(IsLegalTransition(S::kFinished, to));
  }
  EXPECT_EQ(RunStatusName(S::kPaused), "paused");
}

TEST(Service, HealthAndModelListing) {
  Harness h(true);
  auto [code, body] = h.Get("/v1/health");
  EXPECT_EQ(code, 200);
  EXPECT_EQ(body["status"], "ok");
  std::tie(code, body) = h.Get("/v1/models");
  EXPECT_EQ(code, 200);
  EXPECT_EQ(body["active"], h.checkpoint());
  EXPECT_EQ(h.checkpoint().size(), 12u);
  ASSERT_EQ(body["models"].size(), 1u);
  EXPECT_EQ(body["models"][0]["image_size"], 32);
}

TEST(Service, NoModelIsAConflict) {
  Harness h(false);
  auto [code, body] = h.Post("/v1/decode", {{"codes", ZeroCodes()}});
  EXPECT_EQ(code, 409);
  EXPECT_EQ(body["code"], "failed_precondition");
  EXPECT_FALSE(body["message"].get<std::string>().empty());
}

TEST(Service, EncodeDecodeRoundTrip) {
  Harness h(true);
  auto [code, dec] = h.Post("/v1/decode", {{"codes", ZeroCodes()}});
  ASSERT_EQ(code, 200) << dec.dump();
  EXPECT_EQ(dec["checkpoint"], h.checkpoint());
  auto img = FromB64(dec["image"]);
  EXPECT_EQ(img.sizes(), (std::vector<int64_t>{32, 32, 4}));

  // Decoding is deterministic.
  auto [code2, dec2] = h.Post("/v1/decode", {{"codes", ZeroCodes()}});
  ASSERT_EQ(code2, 200);
  EXPECT_EQ(dec["image"], dec2["image"]);

  auto [ce, enc] = h.Post("/v1/encode", {{"image", dec["image"]}});
  ASSERT_EQ(ce, 200) << enc.dump();
  ASSERT_EQ(enc["codes"].size(), 4u);
  for (const auto& c : enc["codes"]) ASSERT_EQ(c.size(), 10u);
  auto [ce2, enc2] = h.Post("/v1/encode", {{"image", dec["image"]}});
  EXPECT_EQ(enc["codes"], enc2["codes"]);

  // Stochastic encoding returns samples that depend on the seed.
  auto [cs, s1] = h.Post("/v1/encode",
                         {{"image", dec["image"]}, {"deterministic", false}, {"seed", 1}});
  ASSERT_EQ(cs, 200);
  auto [cs2, s2] = h.Post("/v1/encode",
                          {{"image", dec["image"]}, {"deterministic", false}, {"seed", 1}});
  EXPECT_EQ(s1["samples"], s2["samples"]);
  EXPECT_NE(s1["samples"], enc["codes"]);

  // The flat 40-value layout is accepted as well.
  std::vector<double> flat(40, 0.0);
  auto [cf, decf] = h.Post("/v1/decode", {{"codes", flat}});
  ASSERT_EQ(cf, 200);
  EXPECT_EQ(decf["image"], dec["image"]);
}

TEST(Service, RejectsBadImages) {
  Harness h(true);
  auto rgb = torch::rand({32, 32, 3});
  auto [code, body] = h.Post("/v1/encode", {{"image", PngB64(rgb)}});
  EXPECT_EQ(code, 400);
  EXPECT_EQ(body["code"], "invalid_argument");

  auto small = torch::rand({16, 16, 4});
  std::tie(code, body) = h.Post("/v1/encode", {{"image", PngB64(small)}});
  EXPECT_EQ(code, 400);

  std::tie(code, body) = h.Post("/v1/encode", {{"image", "!!not base64!!"}});
  EXPECT_EQ(code, 400);
  std::tie(code, body) = h.Post("/v1/encode", json::object());
  EXPECT_EQ(code, 400);
}

TEST(Service, RejectsBadCodesAndTargets) {
  Harness h(true);
  auto [code, body] = h.Post("/v1/decode", {{"codes", {{1, 2, 3}}}});
  EXPECT_EQ(code, 400);
  std::tie(code, body) = h.Post(
      "/v1/attribute", {{"codes", ZeroCodes()}, {"target", {{"code", 5}, {"dim", 0}}}});
  EXPECT_EQ(code, 400);
  std::tie(code, body) = h.Post(
      "/v1/traverse", {{"codes", ZeroCodes()}, {"target", {{"code", 1}, {"dim", 10}}}});
  EXPECT_EQ(code, 400);
  std::tie(code, body) = h.Post("/v1/decode", json("not an object"));
  EXPECT_EQ(code, 400);
  std::tie(code, body) = h.Post("/v1/models/load", {{"path", "/nonexistent/ckpt"}});
  EXPECT_GE(code, 400);
  std::tie(code, body) = h.Get("/v1/no_such_route");
  EXPECT_EQ(code, 404);
  std::tie(code, body) = h.Get("/ui");
  EXPECT_EQ(code, 404);
}

TEST(Service, ServesStaticUi) {
  const auto dir = fs::temp_directory_path() / "dhrl_service_ui";
  fs::create_directories(dir);
  WriteFile(dir / "index.html", "<html>explorer</html>");
  ServiceOptions o;
  o.ui_dir = dir;
  InferenceService service(o);
  const int port = service.BindToAnyPort();
  std::thread t([&] { service.ListenAfterBind(); });
  httplib::Client client("127.0.0.1", port);
  auto r = client.Get("/ui/index.html");
  service.Stop();
  t.join();
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(r->body, "<html>explorer</html>");
}

TEST(Service, AttributionOfZeroPathIsZero) {
  Harness h(true);
  auto [code, body] = h.Post("/v1/attribute", {{"codes", ZeroCodes()},
                                               {"target", {{"code", 2}, {"dim", 3}}},
                                               {"m", 10}});
  ASSERT_EQ(code, 200) << body.dump();
  // All-zero codes give a zero-length default path.
  ASSERT_EQ(body["values"].size(), 32u);
  for (const auto& row : body["values"]) {
    for (double v : row) EXPECT_EQ(v, 0.0);
  }
  EXPECT_EQ(body["metadata"]["steps"], 10);
  auto heat = FromB64(body["heatmap"]);
  EXPECT_EQ(heat.size(0), 32);

  std::tie(code, body) = h.Post("/v1/attribute", {{"codes", ZeroCodes()},
                                                  {"target", {{"code", 2}, {"dim", 3}}},
                                                  {"baseline", -2.0},
                                                  {"target_value", 2.0}});
  ASSERT_EQ(code, 200);
  double total = 0;
  for (const auto& row : body["values"]) {
    for (double v : row) total += std::abs(v);
  }
  EXPECT_GT(total, 0.0);
}

TEST(Service, TraversalReturnsFrames) {
  Harness h(true);
  auto [code, body] = h.Post("/v1/traverse", {{"codes", ZeroCodes()},
                                              {"target", {{"code", 4}, {"dim", 0}}},
                                              {"range", {-1.0, 1.0}},
                                              {"steps", 5}});
  ASSERT_EQ(code, 200) << body.dump();
  ASSERT_EQ(body["frames"].size(), 5u);
  EXPECT_EQ(body["values"].front(), -1.0);
  EXPECT_EQ(body["values"].back(), 1.0);
  // The middle frame sits at zero and matches a plain decode.
  auto [cd, dec] = h.Post("/v1/decode", {{"codes", ZeroCodes()}});
  EXPECT_EQ(body["frames"][2], dec["image"]);
}

class EvolutionApi : public ::testing::Test {
 protected:
  void SetUp() override {
    h_ = std::make_unique<Harness>(true);
    auto [code, body] = h_->Post("/v1/fitness_table", {{"n_refs", 64}, {"seed", 1}});
    ASSERT_EQ(code, 200) << body.dump();
    ASSERT_EQ(body["entries"], 64);
  }

  static json Config(int64_t generations) {
    return {{"population", 100},
            {"generations", generations},
            {"weighted_parents", 50},
            {"unweighted_parents", 20},
            {"offspring", 30},
            {"seed", 4}};
  }

  std::unique_ptr<Harness> h_;
};

TEST_F(EvolutionApi, CreateNeedsTable) {
  Harness bare(true);
  auto [code, body] = bare.Post("/v1/evolve/create", {{"config", Config(5)}});
  EXPECT_EQ(code, 409);
  std::tie(code, body) = bare.Get("/v1/evolve/status");
  EXPECT_EQ(code, 404);
}

TEST_F(EvolutionApi, StateMachine) {
  auto [code, run] = h_->Post("/v1/evolve/create", {{"config", Config(100000)}});
  ASSERT_EQ(code, 200) << run.dump();
  EXPECT_EQ(run["status"], "created");
  EXPECT_EQ(run["generation"], 0);
  EXPECT_EQ(run["checkpoint"], h_->checkpoint());
  const std::string id = run["run_id"];

  // Explicit steps and pause are illegal before the run starts.
  std::tie(code, run) = h_->Post("/v1/evolve/step", {{"run_id", id}});
  EXPECT_EQ(code, 409);
  std::tie(code, run) = h_->Post("/v1/evolve/pause", {{"run_id", id}});
  EXPECT_EQ(code, 409);

  std::tie(code, run) = h_->Post("/v1/evolve/start", {{"run_id", id}});
  ASSERT_EQ(code, 200);
  EXPECT_EQ(run["status"], "running");
  std::this_thread::sleep_for(std::chrono::milliseconds(200));

  // Pause returns only once the in-flight generation has landed.
  std::tie(code, run) = h_->Post("/v1/evolve/pause", {{"run_id", id}});
  ASSERT_EQ(code, 200);
  EXPECT_EQ(run["status"], "paused");
  const int64_t g = run["generation"];
  EXPECT_GT(g, 0);
  EXPECT_EQ(run["history"].size(), static_cast<size_t>(g + 1));
  std::this_thread::sleep_for(std::chrono::milliseconds(200));
  auto [cs, status] = h_->Get("/v1/evolve/status?run_id=" + id);
  ASSERT_EQ(cs, 200);
  EXPECT_EQ(status["generation"], g);
  ASSERT_EQ(status["top"].size(), 2u);
  EXPECT_EQ(FromB64(status["top"][0]["thumbnail"]).size(0), 32);
  EXPECT_GE(status["top"][0]["fitness"].get<double>(),
            status["top"][1]["fitness"].get<double>());

  std::tie(code, run) = h_->Post("/v1/evolve/step", {{"run_id", id}, {"n", 3}});
  ASSERT_EQ(code, 200);
  EXPECT_EQ(run["generation"], g + 3);

  // Weight changes land at the next generation boundary.
  auto [cp, patch] = h_->Patch("/v1/evolve/config",
                               {{"run_id", id}, {"w_orange", 0.9}, {"w_black", 0.1}});
  ASSERT_EQ(cp, 200) << patch.dump();
  EXPECT_EQ(patch["effective_from_generation"], g + 4);
  std::tie(code, run) = h_->Get("/v1/evolve/status?run_id=" + id);
  EXPECT_EQ(run["weights"]["w_orange"], 0.5);
  EXPECT_EQ(run["pending_weights"]["w_orange"], 0.9);
  std::tie(code, run) = h_->Post("/v1/evolve/step", {{"run_id", id}});
  EXPECT_EQ(run["weights"]["w_orange"], 0.9);
  EXPECT_FALSE(run.contains("pending_weights"));

  std::tie(cp, patch) =
      h_->Patch("/v1/evolve/config", {{"run_id", id}, {"w_orange", 0.9}, {"w_black", 0.9}});
  EXPECT_EQ(cp, 400);

  std::tie(code, run) = h_->Post("/v1/evolve/start", {{"run_id", id}});
  EXPECT_EQ(code, 200);
  std::tie(code, run) = h_->Post("/v1/evolve/stop", {{"run_id", id}});
  ASSERT_EQ(code, 200);
  EXPECT_EQ(run["status"], "finished");

  std::tie(cp, patch) =
      h_->Patch("/v1/evolve/config", {{"run_id", id}, {"w_orange", 0.2}, {"w_black", 0.2}});
  EXPECT_EQ(cp, 409);
  std::tie(code, run) = h_->Post("/v1/evolve/start", {{"run_id", id}});
  EXPECT_EQ(code, 409);
  std::tie(code, run) = h_->Post("/v1/evolve/pause", {{"run_id", id}});
  EXPECT_EQ(code, 409);
  std::tie(code, run) = h_->Get("/v1/evolve/status?run_id=nope");
  EXPECT_EQ(code, 404);
}

TEST_F(EvolutionApi, RunsToCompletion) {
  auto [code, run] = h_->Post("/v1/evolve/start", {{"config", Config(4)}});
  ASSERT_EQ(code, 200) << run.dump();
  const std::string id = run["run_id"];
  for (int i = 0; i < 200 && run["status"] != "finished"; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    std::tie(code, run) = h_->Get("/v1/evolve/status?run_id=" + id);
  }
  EXPECT_EQ(run["status"], "finished");
  EXPECT_EQ(run["generation"], 4);
  EXPECT_EQ(run["history"].size(), 5u);
  // Status without run_id reports the latest run.
  std::tie(code, run) = h_->Get("/v1/evolve/status");
  EXPECT_EQ(run["run_id"], id);
}

}  // namespace
}  // namespace dhrl
