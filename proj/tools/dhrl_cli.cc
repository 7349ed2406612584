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

// Command-line entry point: one pipeline stage or analysis per invocation.
//
// Exit status: 0 on success, 1 when the invocation or config is invalid,
// 2 when the work itself fails.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "dhrl/checkpoint.h"
#include "dhrl/common.h"
#include "dhrl/config.h"
#include "dhrl/evolution.h"
#include "dhrl/infogan.h"
#include "dhrl/latent_analysis.h"
#include "dhrl/service.h"
#include "dhrl/trainer.h"
#include "dhrl/vlae.h"

namespace dhrl {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Thrown for problems with the invocation itself (exit status 1).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Invocation {
  std::string config_path;
  std::vector<std::string> overrides;
};

RunConfig Resolve(const Invocation& inv) {
  try {
    return RunConfig::FromJson(LoadConfig(inv.config_path, inv.overrides));
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

void Snapshot(const fs::path& dir, const RunConfig& config) {
  fs::create_directories(dir);
  WriteFile(dir / "config.json", config.raw.dump(2) + "\n");
}

void Progress(const std::string& stage, int64_t step, double total) {
  if (step % 100 == 0) {
    std::fprintf(stderr, "[%s] step %lld loss %.6g\n", stage.c_str(),
                 static_cast<long long>(step), total);
  }
}

void Report(const std::string& what, const StageResult& r) {
  std::printf("%s: %s\n  model_sha256 %s\n  heldout_pixel_loss %.6g\n", what.c_str(),
              r.directory.string().c_str(), r.model_sha256.c_str(), r.heldout_pixel_loss);
}

fs::path OrDefault(const std::string& value, const fs::path& fallback) {
  return value.empty() ? fallback : fs::path(value);
}

std::vector<ImageSample> Originals(const RunConfig& config) {
  if (config.dataset_dir.empty()) {
    throw UsageError("data.dataset_dir is not set; pass --set data.dataset_dir=<dir>");
  }
  return LoadDataset(config.dataset_dir, config.image_size);
}

GbtOptions Gbt(const AnalysisSection& a) {
  GbtOptions o;
  o.rounds = a.gbt_rounds;
  o.max_depth = a.gbt_depth;
  o.learning_rate = a.gbt_learning_rate;
  o.subsample = a.gbt_subsample;
  o.seed = a.importance_seed;
  return o;
}

size_t FindSample(const std::vector<ImageSample>& samples, const std::string& source_id) {
  for (size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].source_id == source_id) return i;
  }
  throw UsageError("no sample with source id '" + source_id + "' in the dataset");
}

// The query latent for attribute/traverse: an image file, a dataset sample or
// the origin.
struct Query {
  std::string image;
  std::string sample;
};

std::pair<std::string, LatentHierarchy> QueryLatent(VlaeImpl& model, const RunConfig& config,
                                                    const Query& q) {
  if (!q.image.empty() && !q.sample.empty()) {
    throw UsageError("pass at most one of --image and --sample");
  }
  if (!q.image.empty()) {
    ImageSample x{ReadPng(q.image), std::nullopt, fs::path(q.image).stem().string()};
    ValidateImage(x, q.image);
    return {x.source_id, Encode(model, x, /*deterministic=*/true)};
  }
  if (!q.sample.empty()) {
    auto samples = Originals(config);
    const auto& x = samples[FindSample(samples, q.sample)];
    return {x.source_id, Encode(model, x, /*deterministic=*/true)};
  }
  return {"origin", LatentHierarchy{}};
}

LatentIndex Target(int code, int dim) {
  LatentIndex index{code, dim};
  try {
    ValidateLatentIndex(index);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return index;
}

std::string Opt(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", *v);
  return buf;
}

// --- subcommands ---------------------------------------------------------------

int MakeSynthetic(const Invocation& inv, const std::string& out) {
  const auto config = Resolve(inv);
  const fs::path dir = OrDefault(out, config.dataset_dir);
  if (dir.empty()) throw UsageError("no output directory; set data.dataset_dir or --out");
  auto dataset = MakeSyntheticDataset(config.synthetic.Spec(config.image_size));
  WriteSyntheticDataset(dir, dataset);
  Snapshot(dir, config);
  std::printf("wrote %zu samples to %s\n", dataset.samples.size(), dir.string().c_str());
  return 0;
}

int TrainGan(const Invocation& inv) {
  PipelineTrainer trainer(Resolve(inv), Progress);
  Report("stage1", trainer.RunStage1Gan());
  return 0;
}

int Generate(const Invocation& inv, const std::string& gan, const std::string& out) {
  const auto config = Resolve(inv);
  const auto ckpt = OrDefault(gan, config.RunDirectory() / "stage1");
  const auto dir = OrDefault(out, config.RunDirectory() / "generated");
  GanModel model = LoadGan(ckpt);
  auto samples = GenerateDecontextualizedDataset(*model, config.n_gen, config.generate_seed);
  WriteDataset(dir, samples);
  Snapshot(dir, config);
  std::printf("wrote %zu generated samples to %s\n", samples.size(), dir.string().c_str());
  return 0;
}

int TrainVae(const Invocation& inv, const std::string& gan, const std::string& baseline) {
  PipelineTrainer trainer(Resolve(inv), Progress);
  const auto ckpt = OrDefault(gan, trainer.config().RunDirectory() / "stage1");
  if (baseline == "none") {
    Report("stage2", trainer.RunStage2Pretrain(ckpt));
  } else if (baseline == "originals_only") {
    Report("baseline_originals_only", trainer.RunOriginalsOnly());
  } else {
    Report("baseline_generated_only", trainer.RunGeneratedOnly(ckpt));
  }
  return 0;
}

int Finetune(const Invocation& inv, const std::string& checkpoint) {
  PipelineTrainer trainer(Resolve(inv), Progress);
  Report("stage3", trainer.RunStage3Finetune(
                       OrDefault(checkpoint, trainer.config().RunDirectory() / "stage2")));
  return 0;
}

fs::path AnalysisDir(const RunConfig& config, const std::string& kind, const fs::path& ckpt) {
  return config.RunDirectory() / kind / CheckpointDirectory(ckpt).filename();
}

int Evaluate(const Invocation& inv, const std::string& checkpoint) {
  const auto config = Resolve(inv);
  const auto ckpt = OrDefault(checkpoint, config.RunDirectory() / "stage3");
  Vlae model = LoadVlae(ckpt);
  auto samples = Originals(config);
  const auto eval = EvaluateDisentanglement(*model, samples, Gbt(config.analysis));
  const auto dir = AnalysisDir(config, "evaluate", ckpt);
  Snapshot(dir, config);

  std::ofstream csv(dir / "disentanglement.csv");
  csv << "code,disentanglement,completeness\n";
  for (size_t c = 0; c < eval.report.codes.size(); ++c) {
    csv << "z" << c + 1 << "," << Opt(eval.report.codes[c].disentanglement) << ","
        << Opt(eval.report.codes[c].completeness) << "\n";
  }
  std::ofstream imp(dir / "importance.csv");
  imp << "code,dim";
  for (int k : eval.importance.classes) imp << ",class_" << k;
  imp << "\n";
  for (size_t i = 0; i < eval.importance.num_latents(); ++i) {
    imp << i / kCodeDim + 1 << "," << i % kCodeDim;
    for (double v : eval.importance.r[i]) imp << "," << v;
    imp << "\n";
  }
  WriteLatentTable(dir / "latents.csv", [&] {
    std::vector<std::string> ids;
    for (const auto& s : samples) ids.push_back(s.source_id);
    return ids;
  }(), EncodeDataset(*model, samples));
  WriteFile(dir / "report.json", eval.report.ToJson().dump(2) + "\n");

  std::printf("code  D         C\n");
  for (size_t c = 0; c < eval.report.codes.size(); ++c) {
    std::printf("z%zu    %-9s %s\n", c + 1, Opt(eval.report.codes[c].disentanglement).c_str(),
                Opt(eval.report.codes[c].completeness).c_str());
  }
  std::printf("wrote %s\n", (dir / "disentanglement.csv").string().c_str());
  return 0;
}

int Attribute(const Invocation& inv, const std::string& checkpoint, const Query& q, int code,
              int dim, std::optional<int> steps) {
  const auto config = Resolve(inv);
  const auto index = Target(code, dim);
  const auto ckpt = OrDefault(checkpoint, config.RunDirectory() / "stage3");
  Vlae model = LoadVlae(ckpt);
  auto [name, z] = QueryLatent(*model, config, q);

  // The path spans +-M with M taken from the encoded originals when a
  // dataset is configured, else from the query's own code.
  double reach = 0;
  if (!config.dataset_dir.empty()) {
    reach = IgRange(EncodeDataset(*model, Originals(config)), index,
                    ParseIgRangeMode(config.analysis.ig_max_abs));
  } else {
    for (double v : z.codes[index.code - 1].mu) reach = std::max(reach, std::abs(v));
  }
  auto map = LatentIntegratedGradients(*model, z, index, -reach, reach,
                                       steps.value_or(config.analysis.ig_steps));
  const auto dir = AnalysisDir(config, "attribute", ckpt);
  Snapshot(dir, config);
  const auto png = dir / (name + "_z" + std::to_string(code) + "_" + std::to_string(dim) + ".png");
  WriteAttribution(png, map);
  std::printf("wrote %s (range +-%.4f, %d steps)\n", png.string().c_str(), reach, map.steps);
  return 0;
}

int Neighbors(const Invocation& inv, const std::string& checkpoint, const std::string& sample,
              int code, std::optional<int> k, std::optional<double> p) {
  const auto config = Resolve(inv);
  if (code < 1 || code > kNumCodes) throw UsageError("--code must be in 1..4");
  const auto ckpt = OrDefault(checkpoint, config.RunDirectory() / "stage3");
  Vlae model = LoadVlae(ckpt);
  auto samples = Originals(config);
  const size_t query = FindSample(samples, sample);
  auto latents = EncodeDataset(*model, samples);
  auto found = NearestNeighbors(latents, query, code, k.value_or(config.analysis.neighbors_k),
                                p.value_or(config.analysis.minkowski_p));
  const auto dir = AnalysisDir(config, "neighbors", ckpt);
  Snapshot(dir, config);
  const auto path = dir / (sample + "_z" + std::to_string(code) + ".csv");
  std::ofstream csv(path);
  csv << "rank,source_id,distance\n";
  for (size_t r = 0; r < found.size(); ++r) {
    csv << r + 1 << "," << samples[found[r].index].source_id << "," << found[r].distance << "\n";
    std::printf("%zu  %s  %.6f\n", r + 1, samples[found[r].index].source_id.c_str(),
                found[r].distance);
  }
  std::printf("wrote %s\n", path.string().c_str());
  return 0;
}

int Likelihood(const Invocation& inv, const std::string& checkpoint) {
  const auto config = Resolve(inv);
  const auto ckpt = OrDefault(checkpoint, config.RunDirectory() / "stage3");
  Vlae model = LoadVlae(ckpt);
  auto samples = Originals(config);
  auto latents = EncodeDataset(*model, samples);
  auto scores = SampleLikelihood(latents);
  const auto dir = AnalysisDir(config, "likelihood", ckpt);
  Snapshot(dir, config);
  std::ofstream csv(dir / "likelihood.csv");
  csv << "source_id,log_density,standard_score\n";
  char buf[64];
  for (size_t i = 0; i < samples.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.10g,%.10g", PriorLogDensity(latents[i]), scores[i]);
    csv << samples[i].source_id << "," << buf << "\n";
  }
  std::printf("wrote %s (%zu samples)\n", (dir / "likelihood.csv").string().c_str(),
              samples.size());
  return 0;
}

int Traverse(const Invocation& inv, const std::string& checkpoint, const Query& q, int code,
             int dim, std::optional<double> lo, std::optional<double> hi,
             std::optional<int> steps) {
  const auto config = Resolve(inv);
  const auto index = Target(code, dim);
  const auto ckpt = OrDefault(checkpoint, config.RunDirectory() / "stage3");
  Vlae model = LoadVlae(ckpt);
  auto [name, z] = QueryLatent(*model, config, q);
  auto t = LatentTraversal(*model, z, index, lo.value_or(config.analysis.traversal_min),
                           hi.value_or(config.analysis.traversal_max),
                           steps.value_or(config.analysis.traversal_steps));
  const auto dir = AnalysisDir(config, "traverse", ckpt) /
                   (name + "_z" + std::to_string(code) + "_" + std::to_string(dim));
  Snapshot(dir, config);
  std::ofstream csv(dir / "values.csv");
  csv << "frame,value\n";
  for (size_t i = 0; i < t.frames.size(); ++i) {
    WritePng(dir / ("frame_" + std::to_string(i) + ".png"), t.frames[i].pixels);
    csv << i << "," << t.values[i] << "\n";
  }
  std::printf("wrote %zu frames to %s\n", t.frames.size(), dir.string().c_str());
  return 0;
}

std::vector<LatentHierarchy> Embedding(VlaeImpl& model, const RunConfig& config,
                                       InitMode mode) {
  if (mode != InitMode::kDatasetEmbedding) return {};
  return EncodeDataset(model, Originals(config));
}

int BuildTable(const Invocation& inv, const std::string& checkpoint) {
  const auto config = Resolve(inv);
  const auto ckpt = OrDefault(checkpoint, config.RunDirectory() / "stage3");
  const auto mode = ParseInitMode(config.evolution.init);
  Vlae model = LoadVlae(ckpt);
  auto table = BuildFitnessTable(*model, config.evolution.table_size,
                                 config.evolution.table_seed, mode,
                                 Embedding(*model, config, mode));
  const auto dir = config.RunDirectory() / "fitness_table";
  table.Save(dir, {{"checkpoint", CheckpointDirectory(ckpt).string()},
                   {"init", config.evolution.init},
                   {"seed", config.evolution.table_seed}});
  Snapshot(dir, config);
  std::printf("wrote %zu reference genomes to %s\n", table.size(), dir.string().c_str());
  return 0;
}

int Evolve(const Invocation& inv, const std::string& table_dir, const std::string& checkpoint) {
  const auto config = Resolve(inv);
  const auto& e = config.evolution;
  EvolutionConfig ec;
  ec.population = e.population;
  ec.generations = e.generations;
  ec.weighted_parents = e.weighted_parents;
  ec.unweighted_parents = e.unweighted_parents;
  ec.offspring = e.offspring;
  ec.weights = {e.w_orange, e.w_black};
  ec.seed = e.seed;
  ec.allele_every = e.allele_every;
  ec.fixation_threshold = e.fixation_threshold;
  try {
    ec.Validate();
  } catch (const Error& err) {
    throw UsageError(err.what());
  }
  auto table = std::make_shared<FitnessTable>(
      FitnessTable::Load(OrDefault(table_dir, config.RunDirectory() / "fitness_table")));
  const auto mode = ParseInitMode(e.init);
  std::vector<LatentHierarchy> embedding;
  if (mode == InitMode::kDatasetEmbedding) {
    Vlae model = LoadVlae(OrDefault(checkpoint, config.RunDirectory() / "stage3"));
    embedding = Embedding(*model, config, mode);
  }
  const auto dir = config.RunDirectory() / "evolution";
  Snapshot(dir, config);
  auto history = RunEvolution(ec, table, DrawGenomes(e.population, e.seed, mode, embedding), dir);
  const auto& last = history.back();
  std::printf("generation %lld: mean %.4f median %.4f max %.4f\nwrote %s\n",
              static_cast<long long>(last.generation), last.mean, last.median, last.max,
              (dir / "history.csv").string().c_str());
  return 0;
}

int Serve(const Invocation& inv, const std::string& checkpoint, const std::string& table,
          const std::string& host, std::optional<int> port, const std::string& ui_dir) {
  const auto config = Resolve(inv);
  ServiceOptions o;
  o.host = host.empty() ? config.service_host : host;
  o.port = port.value_or(config.service_port);
  o.ui_dir = ui_dir;
  o.analysis = config.analysis;
  o.evolution = config.evolution;
  InferenceService service(o);
  if (!checkpoint.empty()) {
    std::printf("loaded checkpoint %s\n", service.LoadModel(checkpoint).c_str());
    if (!table.empty()) service.LoadFitnessTable(table);
  } else if (!table.empty()) {
    throw UsageError("--table needs --checkpoint");
  }
  service.Bind();
  std::printf("serving on http://%s:%d/v1\n", o.host.c_str(), o.port);
  std::fflush(stdout);
  service.ListenAfterBind();
  return 0;
}

// --- wiring --------------------------------------------------------------------

CLI::App* Subcommand(CLI::App& app, const std::string& name, const std::string& help,
                     Invocation& inv) {
  auto* sub = app.add_subcommand(name, help);
  sub->add_option("-c,--config", inv.config_path, "JSON run config")->required();
  sub->add_option("--set", inv.overrides,
                  "override config keys: dotted.key=value (repeatable)")
      ->take_all();
  return sub;
}

int Main(int argc, char** argv) {
  CLI::App app{"Hierarchical representation learning pipeline: train, analyse, evolve, serve."};
  app.require_subcommand(0, 1);
  app.footer(ConfigHelp());
  bool print_schema = false;
  app.add_flag("--print-schema", print_schema, "print the config JSON Schema and exit");

  Invocation inv;
  std::string out, gan, checkpoint, baseline = "none", table, host, ui_dir, sample;
  Query q;
  int code = 1, dim = 0;
  std::optional<int> steps, k, port;
  std::optional<double> p, lo, hi;

  auto* make = Subcommand(app, "make-synthetic", "render a labelled synthetic dataset", inv);
  make->add_option("--out", out, "output directory (default data.dataset_dir)");

  auto* train_gan = Subcommand(app, "train-gan", "stage 1: InfoGAN on the originals", inv);

  auto* generate = Subcommand(app, "generate", "sample a decontextualized dataset", inv);
  generate->add_option("--gan", gan, "stage-1 checkpoint (default <run>/stage1)");
  generate->add_option("--out", out, "output directory (default <run>/generated)");

  auto* train_vae = Subcommand(app, "train-vae", "stage 2: pretrain the VLAE on generated data",
                               inv);
  train_vae->add_option("--gan", gan, "stage-1 checkpoint (default <run>/stage1)");
  train_vae->add_option("--baseline", baseline, "train a comparison model instead")
      ->check(CLI::IsMember({"none", "originals_only", "generated_only"}));

  auto* finetune = Subcommand(app, "finetune", "stage 3: fine-tune on the originals", inv);
  finetune->add_option("--checkpoint", checkpoint, "stage-2 checkpoint (default <run>/stage2)");

  auto* evaluate = Subcommand(app, "evaluate", "per-code disentanglement/completeness CSV", inv);
  evaluate->add_option("--checkpoint", checkpoint, "VLAE checkpoint (default <run>/stage3)");

  auto add_query = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", checkpoint, "VLAE checkpoint (default <run>/stage3)");
    sub->add_option("--image", q.image, "RGBA PNG to encode");
    sub->add_option("--sample", q.sample, "source id of a dataset sample to encode");
    sub->add_option("--code", code, "latent code 1..4")->required();
    sub->add_option("--dim", dim, "dimension 0..9")->required();
  };
  auto* attribute = Subcommand(app, "attribute", "integrated-gradients map for one latent", inv);
  add_query(attribute);
  attribute->add_option("--steps", steps, "Riemann steps (default analysis.ig_steps)");

  auto* neighbors = Subcommand(app, "neighbors", "nearest samples on one code", inv);
  neighbors->add_option("--checkpoint", checkpoint, "VLAE checkpoint (default <run>/stage3)");
  neighbors->add_option("--sample", sample, "query source id")->required();
  neighbors->add_option("--code", code, "latent code 1..4")->required();
  neighbors->add_option("-k", k, "neighbor count (default analysis.neighbors_k)");
  neighbors->add_option("-p", p, "Minkowski order (default analysis.minkowski_p)");

  auto* likelihood = Subcommand(app, "likelihood", "prior log-density of every sample", inv);
  likelihood->add_option("--checkpoint", checkpoint, "VLAE checkpoint (default <run>/stage3)");

  auto* traverse = Subcommand(app, "traverse", "decode a sweep along one latent", inv);
  add_query(traverse);
  traverse->add_option("--min", lo, "start value (default analysis.traversal_min)");
  traverse->add_option("--max", hi, "end value (default analysis.traversal_max)");
  traverse->add_option("--steps", steps, "frame count (default analysis.traversal_steps)");

  auto* build_table = Subcommand(app, "build-table", "decode reference genomes for fitness", inv);
  build_table->add_option("--checkpoint", checkpoint, "VLAE checkpoint (default <run>/stage3)");

  auto* evolve = Subcommand(app, "evolve", "run (or resume) the genetic algorithm", inv);
  evolve->add_option("--table", table, "fitness table (default <run>/fitness_table)");
  evolve->add_option("--checkpoint", checkpoint,
                     "VLAE for dataset_embedding init (default <run>/stage3)");

  auto* serve = Subcommand(app, "serve", "HTTP service under /v1", inv);
  serve->add_option("--checkpoint", checkpoint, "VLAE checkpoint to load at start");
  serve->add_option("--table", table, "fitness table to attach");
  serve->add_option("--host", host, "bind address (default service.host)");
  serve->add_option("--port", port, "bind port (default service.port)");
  serve->add_option("--ui-dir", ui_dir, "static files mounted at /ui");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int status = app.exit(e);
    return status == 0 ? 0 : 1;
  }

  if (print_schema) {
    std::printf("%s\n", ConfigSchema().dump(2).c_str());
    return 0;
  }
  if (app.get_subcommands().empty()) {
    std::fprintf(stderr, "a subcommand is required\n%s", app.help().c_str());
    return 1;
  }

  try {
    if (make->parsed()) return MakeSynthetic(inv, out);
    if (train_gan->parsed()) return TrainGan(inv);
    if (generate->parsed()) return Generate(inv, gan, out);
    if (train_vae->parsed()) return TrainVae(inv, gan, baseline);
    if (finetune->parsed()) return Finetune(inv, checkpoint);
    if (evaluate->parsed()) return Evaluate(inv, checkpoint);
    if (attribute->parsed()) return Attribute(inv, checkpoint, q, code, dim, steps);
    if (neighbors->parsed()) return Neighbors(inv, checkpoint, sample, code, k, p);
    if (likelihood->parsed()) return Likelihood(inv, checkpoint);
    if (traverse->parsed()) return Traverse(inv, checkpoint, q, code, dim, lo, hi, steps);
    if (build_table->parsed()) return BuildTable(inv, checkpoint);
    if (evolve->parsed()) return Evolve(inv, table, checkpoint);
    if (serve->parsed()) return Serve(inv, checkpoint, table, host, port, ui_dir);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", std::string(ErrorCodeName(e.code())).c_str(),
                 e.what());
    return e.code() == ErrorCode::kInvalidArgument ? 1 : 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}

}  // namespace
}  // namespace dhrl

int main(int argc, char** argv) { return dhrl::Main(argc, argv); }
