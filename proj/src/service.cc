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
#include <httplib.h>

#include <atomic>
#include <condition_variable>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <thread>

#include "dhrl/checkpoint.h"
#include "dhrl/common.h"
#include "dhrl/evolution.h"
#include "dhrl/latent_analysis.h"
#include "dhrl/vlae.h"

namespace dhrl {

namespace fs = std::filesystem;
using nlohmann::json;

std::string RunStatusName(RunStatus status) {
  switch (status) {
    case RunStatus::kCreated:
      return "created";
    case RunStatus::kRunning:
      return "running";
    case RunStatus::kPaused:
      return "paused";
    case RunStatus::kFinished:
      return "finished";
  }
  return "unknown";
}

bool IsLegalTransition(RunStatus from, RunStatus to) {
  switch (from) {
    case RunStatus::kCreated:
      return to == RunStatus::kRunning;
    case RunStatus::kRunning:
      return to == RunStatus::kPaused || to == RunStatus::kFinished;
    case RunStatus::kPaused:
      return to == RunStatus::kRunning || to == RunStatus::kFinished;
    case RunStatus::kFinished:
      return false;
  }
  return false;
}

namespace {

int HttpStatus(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
      return 400;
    case ErrorCode::kNotFound:
      return 404;
    case ErrorCode::kFailedPrecondition:
      return 409;
    case ErrorCode::kNumerical:
      return 422;
    case ErrorCode::kIo:
    case ErrorCode::kInternal:
      return 500;
  }
  return 500;
}

std::string PngBase64(const torch::Tensor& hwc) {
  return absl::Base64Escape(EncodePng(hwc));
}

json CodesJson(const LatentHierarchy& z, bool samples) {
  json out = json::array();
  for (const auto& code : z.codes) out.push_back(samples ? code.sample : code.mu);
  return out;
}

LatentHierarchy CodesFromJson(const json& j) {
  Require(j.is_array(), "codes must be an array of " + std::to_string(kNumCodes) +
                            " arrays of " + std::to_string(kCodeDim) + " numbers");
  if (j.size() == kGenomeSize && j[0].is_number()) {
    return LatentHierarchy::FromFlat(j.get<std::vector<double>>(), LatentProvenance::kManual);
  }
  std::vector<std::vector<double>> codes;
  for (const auto& c : j) {
    Require(c.is_array(), "each code must be an array of numbers");
    codes.push_back(c.get<std::vector<double>>());
  }
  auto z = LatentHierarchy::FromCodes(codes, LatentProvenance::kManual);
  for (double v : z.FlatSamples()) Require(std::isfinite(v), "codes must be finite");
  return z;
}

LatentIndex TargetFromJson(const json& j) {
  Require(j.is_object() && j.contains("code") && j.contains("dim"),
          "target must be an object with code (1-4) and dim (0-9)");
  LatentIndex index{j.at("code").get<int>(), j.at("dim").get<int>()};
  ValidateLatentIndex(index);
  return index;
}

}  // namespace

// ---------------------------------------------------------------------------

struct LoadedModel {
  std::string id;
  fs::path path;
  json manifest;
  Vlae model{nullptr};
  std::shared_ptr<const FitnessTable> table;  // swapped under Impl::models_mu
};

struct EvoRun {
  std::string id;
  std::shared_ptr<LoadedModel> model;
  std::shared_ptr<const FitnessTable> table;

  std::mutex writer;  // held for the duration of every generation step
  std::mutex state_mu;
  std::condition_variable cv;
  RunStatus status = RunStatus::kCreated;
  std::optional<FitnessWeights> pending_weights;
  bool shutdown = false;
  std::unique_ptr<EvolutionRun> run;  // touched only with `writer` held
  json telemetry;                     // published under state_mu
  std::vector<std::pair<Alleles, double>> top;  // published under state_mu
  std::thread worker;
};

struct InferenceService::Impl {
  ServiceOptions options;
  httplib::Server server;

  std::shared_mutex models_mu;
  std::map<std::string, std::shared_ptr<LoadedModel>> models;
  std::string active;

  std::mutex runs_mu;
  std::map<std::string, std::shared_ptr<EvoRun>> runs;
  int next_run = 1;

  explicit Impl(ServiceOptions o) : options(std::move(o)) { Routes(); }

  ~Impl() {
    server.stop();
    std::vector<std::shared_ptr<EvoRun>> all;
    {
      std::lock_guard l(runs_mu);
      for (auto& [id, r] : runs) all.push_back(r);
    }
    for (auto& r : all) {
      {
        std::lock_guard l(r->state_mu);
        r->shutdown = true;
      }
      r->cv.notify_all();
      if (r->worker.joinable()) r->worker.join();
    }
  }

  // --- models -----------------------------------------------------------------

  std::string Load(const fs::path& path) {
    json manifest;
    Vlae model = LoadVlae(path, &manifest);
    auto entry = std::make_shared<LoadedModel>();
    const auto dir = CheckpointDirectory(path);
    std::string sha = manifest.value("model_sha256", std::string());
    if (sha.empty()) sha = Sha256File(dir / kModelFile);
    entry->id = sha.substr(0, 12);
    entry->path = dir;
    entry->manifest = manifest;
    entry->model = model;
    std::unique_lock l(models_mu);
    models[entry->id] = entry;
    active = entry->id;
    return entry->id;
  }

  std::shared_ptr<LoadedModel> ModelFor(const json& body) {
    std::shared_lock l(models_mu);
    std::string id = body.is_object() ? body.value("checkpoint", std::string()) : "";
    if (id.empty()) {
      if (active.empty()) Fail(ErrorCode::kFailedPrecondition, "no model loaded");
      id = active;
    }
    auto it = models.find(id);
    if (it == models.end()) Fail(ErrorCode::kNotFound, "unknown checkpoint id " + id);
    return it->second;
  }

  std::shared_ptr<const FitnessTable> TableFor(const LoadedModel& m) {
    std::shared_lock l(models_mu);
    return m.table;
  }

  void AttachTable(const std::shared_ptr<LoadedModel>& m,
                   std::shared_ptr<const FitnessTable> table) {
    std::unique_lock l(models_mu);
    m->table = std::move(table);
  }

  // --- plumbing ---------------------------------------------------------------

  using JsonHandler = std::function<json(const httplib::Request&, const json&)>;

  static void Reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void ReplyError(httplib::Response& res, int status, std::string_view code,
                         const std::string& message) {
    Reply(res, status, {{"code", code}, {"message", message}});
  }

  static httplib::Server::Handler Wrap(JsonHandler handler) {
    return [handler](const httplib::Request& req, httplib::Response& res) {
      try {
        json body = json::object();
        if (!req.body.empty()) {
          body = json::parse(req.body, nullptr, /*allow_exceptions=*/false);
          if (body.is_discarded()) {
            ReplyError(res, 400, "invalid_argument", "request body is not valid JSON");
            return;
          }
        }
        Reply(res, 200, handler(req, body));
      } catch (const Error& e) {
        ReplyError(res, HttpStatus(e.code()), ErrorCodeName(e.code()), e.what());
      } catch (const json::exception& e) {
        ReplyError(res, 400, "invalid_argument", std::string("bad request field: ") + e.what());
      } catch (const c10::Error& e) {
        ReplyError(res, 400, "invalid_argument", e.what_without_backtrace());
      } catch (const std::exception& e) {
        ReplyError(res, 500, "internal", e.what());
      }
    };
  }

  static ImageSample ImageFromBase64(const std::string& b64, int64_t size) {
    std::string bytes;
    if (!absl::Base64Unescape(b64, &bytes) || bytes.empty()) {
      Fail(ErrorCode::kInvalidArgument, "image is not valid base64");
    }
    torch::Tensor hwc;
    try {
      hwc = DecodePng(bytes);
    } catch (const Error& e) {
      Fail(ErrorCode::kInvalidArgument, std::string("image is not a readable PNG: ") + e.what());
    }
    Require(hwc.dim() == 3 && hwc.size(2) == 4,
            "image must be RGBA (4 channels), got " + std::to_string(hwc.size(2)));
    Require(hwc.size(0) == size && hwc.size(1) == size,
            "image must be " + std::to_string(size) + "x" + std::to_string(size));
    ImageSample s{hwc, std::nullopt, "request"};
    ValidateImage(s, "request image");
    return s;
  }

  // --- routes -----------------------------------------------------------------

  void Routes() {
    server.Get("/v1/health", Wrap([](const auto&, const json&) {
                 return json{{"status", "ok"}};
               }));

    server.Get("/v1/models", Wrap([this](const auto&, const json&) {
                 std::shared_lock l(models_mu);
                 json list = json::array();
                 for (const auto& [id, m] : models) {
                   list.push_back({{"id", id},
                                   {"path", m->path.string()},
                                   {"stage", m->manifest.value("stage", "")},
                                   {"image_size", m->model->config().image_size},
                                   {"fitness_table", m->table != nullptr}});
                 }
                 return json{{"active", active}, {"models", list}};
               }));

    server.Post("/v1/models/load", Wrap([this](const auto&, const json& body) {
                  Require(body.contains("path"), "path is required");
                  const auto id = Load(body.at("path").get<std::string>());
                  if (body.contains("fitness_table")) {
                    auto m = ModelFor(json{{"checkpoint", id}});
                    AttachTable(m, std::make_shared<FitnessTable>(FitnessTable::Load(
                                       body.at("fitness_table").get<std::string>())));
                  }
                  return json{{"checkpoint", id}};
                }));

    server.Post("/v1/fitness_table", Wrap([this](const auto&, const json& body) {
                  auto m = ModelFor(body);
                  const auto n = body.value("n_refs", options.evolution.table_size);
                  const auto seed = body.value("seed", options.evolution.table_seed);
                  const auto mode = ParseInitMode(body.value("init", options.evolution.init));
                  Require(mode == InitMode::kPriorDraw,
                          "the service builds tables from prior draws only; build "
                          "embedding-seeded tables with the CLI");
                  auto table = std::make_shared<FitnessTable>(
                      BuildFitnessTable(*m->model, n, seed, mode));
                  AttachTable(m, table);
                  return json{{"checkpoint", m->id}, {"entries", table->size()}};
                }));

    server.Post("/v1/encode", Wrap([this](const auto&, const json& body) {
                  auto m = ModelFor(body);
                  Require(body.contains("image"), "image (base64 PNG) is required");
                  auto x = ImageFromBase64(body.at("image").get<std::string>(),
                                           m->model->config().image_size);
                  const bool deterministic = body.value("deterministic", true);
                  std::optional<at::Generator> gen;
                  if (!deterministic) {
                    gen = at::make_generator<at::CPUGeneratorImpl>(
                        body.value("seed", uint64_t{0}));
                  }
                  auto z = Encode(*m->model, x, deterministic, gen);
                  json out = {{"checkpoint", m->id}, {"codes", CodesJson(z, false)}};
                  if (!deterministic) out["samples"] = CodesJson(z, true);
                  return out;
                }));

    server.Post("/v1/decode", Wrap([this](const auto&, const json& body) {
                  auto m = ModelFor(body);
                  Require(body.contains("codes"), "codes are required");
                  auto img = Decode(*m->model, CodesFromJson(body.at("codes")));
                  return json{{"checkpoint", m->id}, {"image", PngBase64(img.pixels)}};
                }));

    server.Post("/v1/attribute", Wrap([this](const auto&, const json& body) {
                  auto m = ModelFor(body);
                  Require(body.contains("codes") && body.contains("target"),
                          "codes and target are required");
                  auto z = CodesFromJson(body.at("codes"));
                  auto index = TargetFromJson(body.at("target"));
                  const int steps = body.value("m", options.analysis.ig_steps);
                  // Without explicit end points the path spans +-max|z| over the
                  // requested code.
                  double reach = 0;
                  for (double v : z.codes[index.code - 1].sample) {
                    reach = std::max(reach, std::abs(v));
                  }
                  const double lo = body.value("baseline", -reach);
                  const double hi = body.value("target_value", reach);
                  auto map = LatentIntegratedGradients(*m->model, z, index, lo, hi, steps);
                  json values = json::array();
                  auto acc = map.values.contiguous();
                  for (int64_t h = 0; h < acc.size(0); ++h) {
                    std::vector<double> row(acc[h].data_ptr<double>(),
                                            acc[h].data_ptr<double>() + acc.size(1));
                    values.push_back(row);
                  }
                  return json{{"checkpoint", m->id},
                              {"heatmap", PngBase64(AttributionColormap(map))},
                              {"values", values},
                              {"metadata", AttributionMetadata(map)}};
                }));

    server.Post("/v1/traverse", Wrap([this](const auto&, const json& body) {
                  auto m = ModelFor(body);
                  Require(body.contains("codes") && body.contains("target"),
                          "codes and target are required");
                  auto z = CodesFromJson(body.at("codes"));
                  auto index = TargetFromJson(body.at("target"));
                  double lo = options.analysis.traversal_min;
                  double hi = options.analysis.traversal_max;
                  if (body.contains("range")) {
                    const auto r = body.at("range").get<std::vector<double>>();
                    Require(r.size() == 2, "range must be [min, max]");
                    lo = r[0];
                    hi = r[1];
                  }
                  const int steps = body.value("steps", options.analysis.traversal_steps);
                  auto t = LatentTraversal(*m->model, z, index, lo, hi, steps);
                  json frames = json::array();
                  for (const auto& f : t.frames) frames.push_back(PngBase64(f.pixels));
                  return json{{"checkpoint", m->id}, {"values", t.values}, {"frames", frames}};
                }));

    // --- evolution -------------------------------------------------------------

    server.Post("/v1/evolve/create", Wrap([this](const auto&, const json& body) {
                  return Status(*Create(body));
                }));

    server.Post("/v1/evolve/start", Wrap([this](const auto&, const json& body) {
                  std::shared_ptr<EvoRun> run =
                      body.contains("run_id") ? Find(body.at("run_id").get<std::string>())
                                              : Create(body);
                  Transition(*run, RunStatus::kRunning);
                  return Status(*run);
                }));

    server.Post("/v1/evolve/pause", Wrap([this](const auto&, const json& body) {
                  auto run = Find(RunId(body));
                  Transition(*run, RunStatus::kPaused);
                  // Wait for the in-flight generation so the reply is final.
                  std::lock_guard w(run->writer);
                  return Status(*run);
                }));

    server.Post("/v1/evolve/stop", Wrap([this](const auto&, const json& body) {
                  auto run = Find(RunId(body));
                  Transition(*run, RunStatus::kFinished);
                  std::lock_guard w(run->writer);
                  return Status(*run);
                }));

    server.Post("/v1/evolve/step", Wrap([this](const auto&, const json& body) {
                  auto run = Find(RunId(body));
                  const int64_t n = body.value("n", int64_t{1});
                  Require(n >= 1, "n must be at least 1");
                  std::lock_guard w(run->writer);
                  {
                    std::lock_guard l(run->state_mu);
                    if (run->status != RunStatus::kPaused) {
                      Fail(ErrorCode::kFailedPrecondition,
                           "explicit steps need a paused run; run " + run->id + " is " +
                               RunStatusName(run->status));
                    }
                  }
                  for (int64_t i = 0; i < n && !run->run->finished(); ++i) StepLocked(*run);
                  return Status(*run);
                }));

    server.Patch("/v1/evolve/config", Wrap([this](const auto&, const json& body) {
                   auto run = Find(RunId(body));
                   FitnessWeights w{body.at("w_orange").get<double>(),
                                    body.at("w_black").get<double>()};
                   w.Validate();
                   std::lock_guard l(run->state_mu);
                   if (run->status == RunStatus::kFinished) {
                     Fail(ErrorCode::kFailedPrecondition,
                          "run " + run->id + " is finished; its config is frozen");
                   }
                   run->pending_weights = w;
                   return json{{"run_id", run->id},
                               {"pending_weights", {{"w_orange", w.orange}, {"w_black", w.black}}},
                               {"effective_from_generation",
                                run->telemetry.at("generation").get<int64_t>() + 1}};
                 }));

    server.Get("/v1/evolve/status", Wrap([this](const httplib::Request& req, const json&) {
                 json q = json::object();
                 if (req.has_param("run_id")) q["run_id"] = req.get_param_value("run_id");
                 return Status(*Find(RunId(q)), /*thumbnails=*/true);
               }));

    if (!options.ui_dir.empty() && fs::is_directory(options.ui_dir)) {
      server.set_mount_point("/ui", options.ui_dir.string());
    } else {
      server.Get("/ui", [](const httplib::Request&, httplib::Response& res) {
        ReplyError(res, 404, "not_found", "no UI directory configured (use --ui-dir)");
      });
    }
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) {
        ReplyError(res, res.status, res.status == 404 ? "not_found" : "error",
                   "no route for this request");
      }
    });
  }

  // --- evolution runs -----------------------------------------------------------

  std::string RunId(const json& body) {
    if (body.is_object() && body.contains("run_id")) {
      return body.at("run_id").get<std::string>();
    }
    std::lock_guard l(runs_mu);
    if (runs.empty()) Fail(ErrorCode::kNotFound, "no evolution runs");
    // Default to the most recent run.
    std::string latest;
    int best = -1;
    for (const auto& [id, r] : runs) {
      const int n = std::stoi(id.substr(id.find('-') + 1));
      if (n > best) {
        best = n;
        latest = id;
      }
    }
    return latest;
  }

  std::shared_ptr<EvoRun> Find(const std::string& id) {
    std::lock_guard l(runs_mu);
    auto it = runs.find(id);
    if (it == runs.end()) Fail(ErrorCode::kNotFound, "unknown evolution run " + id);
    return it->second;
  }

  EvolutionConfig ConfigFrom(const json& body) const {
    const auto& e = options.evolution;
    const json c = body.value("config", json::object());
    EvolutionConfig config;
    config.population = c.value("population", e.population);
    config.generations = c.value("generations", e.generations);
    config.weighted_parents = c.value("weighted_parents", e.weighted_parents);
    config.unweighted_parents = c.value("unweighted_parents", e.unweighted_parents);
    config.offspring = c.value("offspring", e.offspring);
    config.weights = {c.value("w_orange", e.w_orange), c.value("w_black", e.w_black)};
    config.seed = c.value("seed", e.seed);
    config.allele_every = c.value("allele_every", e.allele_every);
    config.fixation_threshold = c.value("fixation_threshold", e.fixation_threshold);
    config.Validate();
    return config;
  }

  std::shared_ptr<EvoRun> Create(const json& body) {
    auto m = ModelFor(body);
    auto table = TableFor(*m);
    if (!table) {
      Fail(ErrorCode::kFailedPrecondition,
           "checkpoint " + m->id + " has no fitness table; POST /v1/fitness_table first");
    }
    const auto config = ConfigFrom(body);
    auto run = std::make_shared<EvoRun>();
    run->model = m;
    run->table = table;
    run->run = std::make_unique<EvolutionRun>(
        config, table, DrawGenomes(config.population, config.seed, InitMode::kPriorDraw));
    {
      std::lock_guard l(runs_mu);
      run->id = "run-" + std::to_string(next_run++);
      runs[run->id] = run;
    }
    Publish(*run);
    run->worker = std::thread([this, run] { Worker(*run); });
    return run;
  }

  static void Transition(EvoRun& run, RunStatus to) {
    {
      std::lock_guard l(run.state_mu);
      if (!IsLegalTransition(run.status, to)) {
        Fail(ErrorCode::kFailedPrecondition,
             "run " + run.id + " cannot go from " + RunStatusName(run.status) + " to " +
                 RunStatusName(to));
      }
      run.status = to;
    }
    run.cv.notify_all();
  }

  // Requires `run.writer`.
  void StepLocked(EvoRun& run) {
    std::optional<FitnessWeights> pending;
    {
      std::lock_guard l(run.state_mu);
      pending.swap(run.pending_weights);
    }
    if (pending) run.run->SetWeights(*pending);
    run.run->Step();
    Publish(run);
  }

  // Requires `run.writer` (or exclusive ownership during creation).
  void Publish(EvoRun& run) {
    const auto& r = *run.run;
    const auto& s = r.history().back();
    json history = json::array();
    for (const auto& h : r.history()) {
      history.push_back({{"generation", h.generation},
                         {"mean", h.mean},
                         {"median", h.median},
                         {"max", h.max},
                         {"frac_orange", h.frac_orange},
                         {"frac_black", h.frac_black}});
    }
    std::vector<std::pair<Alleles, double>> top;
    for (size_t i : r.TopK(static_cast<size_t>(std::max(0, options.status_top_k)))) {
      top.emplace_back(r.population()[i].alleles, *r.population()[i].cached_fitness);
    }
    json fixed = FixedAlleles(r.population(), r.config().fixation_threshold);
    std::lock_guard l(run.state_mu);
    run.telemetry = {{"generation", r.generation()},
                     {"generations", r.config().generations},
                     {"weights",
                      {{"w_orange", r.config().weights.orange},
                       {"w_black", r.config().weights.black}}},
                     {"stats",
                      {{"mean", s.mean},
                       {"median", s.median},
                       {"max", s.max},
                       {"frac_orange", s.frac_orange},
                       {"frac_black", s.frac_black}}},
                     {"fixed_alleles", fixed},
                     {"history", history}};
    run.top = std::move(top);
    if (r.finished() && run.status != RunStatus::kFinished &&
        run.status != RunStatus::kCreated) {
      run.status = RunStatus::kFinished;
    }
  }

  json Status(EvoRun& run, bool thumbnails = false) {
    json out;
    std::vector<std::pair<Alleles, double>> top;
    {
      std::lock_guard l(run.state_mu);
      out = run.telemetry;
      out["run_id"] = run.id;
      out["status"] = RunStatusName(run.status);
      out["checkpoint"] = run.model->id;
      if (run.pending_weights) {
        out["pending_weights"] = {{"w_orange", run.pending_weights->orange},
                                  {"w_black", run.pending_weights->black}};
      }
      top = run.top;
    }
    json list = json::array();
    for (const auto& [alleles, fitness] : top) {
      json item = {{"fitness", fitness}, {"alleles", alleles}};
      if (thumbnails) {
        auto img = Decode(*run.model->model,
                          LatentHierarchy::FromFlat(alleles, LatentProvenance::kManual));
        item["thumbnail"] = PngBase64(img.pixels);
      }
      list.push_back(item);
    }
    out["top"] = list;
    return out;
  }

  void Worker(EvoRun& run) {
    while (true) {
      {
        std::unique_lock l(run.state_mu);
        run.cv.wait(l, [&] { return run.shutdown || run.status == RunStatus::kRunning; });
        if (run.shutdown) return;
      }
      std::lock_guard w(run.writer);
      {
        std::lock_guard l(run.state_mu);
        if (run.shutdown) return;
        if (run.status != RunStatus::kRunning) continue;
      }
      if (run.run->finished()) {
        std::lock_guard l(run.state_mu);
        run.status = RunStatus::kFinished;
        continue;
      }
      StepLocked(run);
    }
  }
};

// ---------------------------------------------------------------------------

InferenceService::InferenceService(ServiceOptions options)
    : impl_(std::make_unique<Impl>(std::move(options))) {}

InferenceService::~InferenceService() = default;

std::string InferenceService::LoadModel(const fs::path& checkpoint) {
  return impl_->Load(checkpoint);
}

void InferenceService::LoadFitnessTable(const fs::path& directory) {
  auto m = impl_->ModelFor(json::object());
  impl_->AttachTable(m, std::make_shared<FitnessTable>(FitnessTable::Load(directory)));
}

int InferenceService::BindToAnyPort() {
  const int port = impl_->server.bind_to_any_port(impl_->options.host);
  if (port <= 0) Fail(ErrorCode::kIo, "cannot bind to " + impl_->options.host);
  return port;
}

void InferenceService::Bind() {
  if (!impl_->server.bind_to_port(impl_->options.host, impl_->options.port)) {
    Fail(ErrorCode::kIo, "cannot bind to " + impl_->options.host + ":" +
                             std::to_string(impl_->options.port));
  }
}

void InferenceService::ListenAfterBind() { impl_->server.listen_after_bind(); }

void InferenceService::Stop() { impl_->server.stop(); }

}  // namespace dhrl
