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

#include "dhrl/evolution.h"

#include <c10/util/Logging.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "dhrl/common.h"

namespace dhrl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Stream tags for DeriveSeed.
constexpr uint64_t kPriorStream = 0x9e0;
constexpr uint64_t kGenerationStream = 0xe701;
constexpr uint64_t kWeightedSlot = 1;
constexpr uint64_t kUniformSlot = 2;
constexpr uint64_t kOffspringSlot = 3;

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

PixelFractions FractionsOf(const torch::Tensor& hwc) {
  auto p = hwc.to(torch::kFloat);
  auto r = p.select(2, 0), g = p.select(2, 1), b = p.select(2, 2);
  auto fg = p.select(2, 3) > 0.5;
  PixelFractions f;
  f.foreground = fg.sum().item<int64_t>();
  if (f.foreground == 0) return f;
  auto orange = (r >= 0.9f) & (r <= 1.0f) & (g >= 0.55f) & (g <= 0.75f) & (b >= 0.0f) &
                (b <= 0.1f) & fg;
  auto black = (r < 0.2f) & (g < 0.2f) & (b < 0.2f) & fg;
  const double n = static_cast<double>(f.foreground);
  f.orange = static_cast<double>(orange.sum().item<int64_t>()) / n;
  f.black = static_cast<double>(black.sum().item<int64_t>()) / n;
  return f;
}

double Median(std::vector<double> v) {
  if (v.empty()) return 0;
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lo + hi);
}

}  // namespace

void FitnessWeights::Validate() const {
  Require(std::isfinite(orange) && std::isfinite(black) && orange >= 0 && black >= 0,
          "fitness weights must be finite and non-negative");
  Require(orange + black <= 1 + 1e-12, "fitness weights must sum to at most 1");
}

PixelFractions MeasurePixelRanges(const ImageSample& image) {
  ValidateImage(image, "fitness");
  return FractionsOf(image.pixels);
}

double CombineFitness(const PixelFractions& f, const FitnessWeights& w) {
  return w.orange * f.orange + w.black * f.black;
}

double Fitness(const ImageSample& image, const FitnessWeights& w) {
  w.Validate();
  const auto f = MeasurePixelRanges(image);
  if (f.foreground == 0) {
    LOG(WARNING) << "image " << image.source_id << " has no foreground pixels; fitness is 0";
    return 0;
  }
  return CombineFitness(f, w);
}

// ---------------------------------------------------------------------------

void FitnessTable::Add(const Alleles& genome, const PixelFractions& fractions) {
  for (double v : genome) Require(std::isfinite(v), "fitness table genomes must be finite");
  Require(fractions.orange >= 0 && fractions.orange <= 1 && fractions.black >= 0 &&
              fractions.black <= 1,
          "pixel fractions must lie in [0, 1]");
  genomes_.insert(genomes_.end(), genome.begin(), genome.end());
  fractions_.push_back(fractions);
}

size_t FitnessTable::Nearest(std::span<const double> genome) const {
  if (empty()) Fail(ErrorCode::kFailedPrecondition, "fitness table is empty");
  Require(genome.size() == kGenomeSize, "genome must have " +
                                            std::to_string(kGenomeSize) + " alleles");
  size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  const double* row = genomes_.data();
  for (size_t i = 0; i < size(); ++i, row += kGenomeSize) {
    double d = 0;
    int j = 0;
    // Abandon a row once its partial distance can no longer win.
    for (; j < kGenomeSize && d < best_d; ++j) {
      const double diff = genome[j] - row[j];
      d += diff * diff;
    }
    if (j == kGenomeSize && d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

double FitnessTable::Lookup(std::span<const double> genome, const FitnessWeights& w) const {
  return CombineFitness(fractions_[Nearest(genome)], w);
}

Alleles FitnessTable::genome(size_t i) const {
  Require(i < size(), "fitness table index out of range");
  Alleles a;
  std::copy_n(genomes_.begin() + static_cast<std::ptrdiff_t>(i * kGenomeSize), kGenomeSize,
              a.begin());
  return a;
}

void FitnessTable::Save(const fs::path& directory, json metadata) const {
  Require(!empty(), "refusing to save an empty fitness table");
  fs::create_directories(directory);
  constexpr int kRow = kGenomeSize + 2;
  std::vector<double> flat;
  flat.reserve(size() * kRow);
  for (size_t i = 0; i < size(); ++i) {
    flat.insert(flat.end(), genomes_.begin() + static_cast<std::ptrdiff_t>(i * kGenomeSize),
                genomes_.begin() + static_cast<std::ptrdiff_t>((i + 1) * kGenomeSize));
    flat.push_back(fractions_[i].orange);
    flat.push_back(fractions_[i].black);
  }
  std::string bytes(flat.size() * sizeof(double), '\0');
  std::memcpy(bytes.data(), flat.data(), bytes.size());
  WriteFile(directory / "table.bin", bytes);
  if (metadata.is_null()) metadata = json::object();
  metadata["entries"] = size();
  metadata["genome_size"] = kGenomeSize;
  metadata["row_layout"] = "alleles..., frac_orange, frac_black (float64)";
  metadata["sha256"] = Sha256Hex(bytes);
  WriteFile(directory / "table.json", metadata.dump(2) + "\n");
}

FitnessTable FitnessTable::Load(const fs::path& directory, json* metadata) {
  if (!fs::exists(directory / "table.json")) {
    Fail(ErrorCode::kNotFound, "fitness table not found: " + directory.string());
  }
  auto meta = json::parse(ReadFile(directory / "table.json"));
  const auto bytes = ReadFile(directory / "table.bin");
  if (Sha256Hex(bytes) != meta.at("sha256").get<std::string>()) {
    Fail(ErrorCode::kIo, "fitness table checksum mismatch in " + directory.string());
  }
  constexpr int kRow = kGenomeSize + 2;
  const size_t n = meta.at("entries").get<size_t>();
  if (meta.at("genome_size").get<int>() != kGenomeSize ||
      bytes.size() != n * kRow * sizeof(double)) {
    Fail(ErrorCode::kIo, "fitness table has an unexpected layout: " + directory.string());
  }
  std::vector<double> flat(n * kRow);
  std::memcpy(flat.data(), bytes.data(), bytes.size());
  FitnessTable table;
  for (size_t i = 0; i < n; ++i) {
    Alleles a;
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(i * kRow), kGenomeSize, a.begin());
    table.Add(a, {flat[i * kRow + kGenomeSize], flat[i * kRow + kGenomeSize + 1], 1});
  }
  if (metadata) *metadata = meta;
  return table;
}

// ---------------------------------------------------------------------------

InitMode ParseInitMode(const std::string& name) {
  if (name == "prior_draw") return InitMode::kPriorDraw;
  if (name == "dataset_embedding") return InitMode::kDatasetEmbedding;
  Fail(ErrorCode::kInvalidArgument, "unknown init mode '" + name +
                                        "' (expected prior_draw or dataset_embedding)");
}

std::string InitModeName(InitMode mode) {
  return mode == InitMode::kPriorDraw ? "prior_draw" : "dataset_embedding";
}

std::vector<Alleles> DrawGenomes(int64_t n, uint64_t seed, InitMode mode,
                                 const std::vector<LatentHierarchy>& embedding) {
  Require(n >= 0, "genome count must be non-negative");
  std::vector<Alleles> out;
  out.reserve(static_cast<size_t>(n));
  if (mode == InitMode::kDatasetEmbedding) {
    Require(!embedding.empty(), "dataset_embedding init needs an encoded dataset");
    for (const auto& z : embedding) {
      if (static_cast<int64_t>(out.size()) == n) break;
      const auto flat = z.FlatMeans();
      Alleles a;
      std::copy(flat.begin(), flat.end(), a.begin());
      out.push_back(a);
    }
  }
  for (auto i = static_cast<int64_t>(out.size()); i < n; ++i) {
    std::mt19937_64 rng(DeriveSeed(seed, kPriorStream, static_cast<uint64_t>(i)));
    std::normal_distribution<double> normal;
    Alleles a;
    for (auto& v : a) v = normal(rng);
    out.push_back(a);
  }
  return out;
}

FitnessTable BuildFitnessTable(VlaeImpl& model, const std::vector<Alleles>& genomes,
                               int64_t batch_size) {
  Require(!genomes.empty(), "a fitness table needs at least one reference genome");
  Require(batch_size >= 1, "batch size must be positive");
  Require(!model.is_training(), "building a fitness table requires a model in eval mode");
  torch::NoGradGuard no_grad;
  FitnessTable table;
  for (size_t start = 0; start < genomes.size(); start += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(genomes.size(), start + static_cast<size_t>(batch_size));
    auto z = torch::empty({static_cast<int64_t>(end - start), kGenomeSize}, torch::kDouble);
    for (size_t i = start; i < end; ++i) {
      std::copy(genomes[i].begin(), genomes[i].end(),
                z.data_ptr<double>() + (i - start) * kGenomeSize);
    }
    auto images = model.DecodeFlat(z.to(torch::kFloat)).permute({0, 2, 3, 1}).contiguous();
    for (size_t i = start; i < end; ++i) {
      table.Add(genomes[i], FractionsOf(images[static_cast<int64_t>(i - start)]));
    }
  }
  return table;
}

FitnessTable BuildFitnessTable(VlaeImpl& model, int64_t n_refs, uint64_t seed,
                               InitMode mode,
                               const std::vector<LatentHierarchy>& embedding) {
  Require(n_refs >= 1, "n_refs must be at least 1");
  return BuildFitnessTable(model, DrawGenomes(n_refs, seed, mode, embedding));
}

// ---------------------------------------------------------------------------

void EvolutionConfig::Validate() const {
  Require(population >= 1, "population must be positive");
  Require(generations >= 0, "generations must be non-negative");
  Require(weighted_parents >= 0 && unweighted_parents >= 0 && offspring >= 0,
          "parent and offspring counts must be non-negative");
  Require(weighted_parents + unweighted_parents + offspring == population,
          "weighted_parents + unweighted_parents + offspring must equal population (" +
              std::to_string(weighted_parents) + " + " +
              std::to_string(unweighted_parents) + " + " + std::to_string(offspring) +
              " != " + std::to_string(population) + ")");
  Require(offspring == 0 || weighted_parents + unweighted_parents >= 2,
          "offspring need at least two parents");
  Require(allele_every >= 1, "allele_every must be positive");
  Require(fixation_threshold >= 0, "fixation threshold must be non-negative");
  weights.Validate();
}

std::vector<size_t> SampleProportional(std::span<const double> weights, int64_t count,
                                       uint64_t seed) {
  Require(!weights.empty(), "cannot sample from an empty population");
  std::vector<double> cumulative(weights.size());
  double total = 0;
  for (size_t i = 0; i < weights.size(); ++i) {
    Require(std::isfinite(weights[i]) && weights[i] >= 0,
            "selection weights must be finite and non-negative");
    total += weights[i];
    cumulative[i] = total;
  }
  std::vector<size_t> out(static_cast<size_t>(std::max<int64_t>(count, 0)));
  for (size_t s = 0; s < out.size(); ++s) {
    std::mt19937_64 rng(DeriveSeed(seed, s));
    if (total > 0) {
      const double u = std::uniform_real_distribution<double>(0, total)(rng);
      auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
      out[s] = std::min<size_t>(static_cast<size_t>(it - cumulative.begin()),
                                weights.size() - 1);
    } else {
      out[s] = std::uniform_int_distribution<size_t>(0, weights.size() - 1)(rng);
    }
  }
  return out;
}

GenerationResult EvolveGeneration(const std::vector<Genome>& population,
                                  const FitnessTable& table, const EvolutionConfig& config,
                                  int64_t generation) {
  if (table.empty()) Fail(ErrorCode::kFailedPrecondition, "fitness table is empty");
  std::vector<double> fitness;
  fitness.reserve(population.size());
  for (const auto& g : population) fitness.push_back(table.Lookup(g.alleles, config.weights));
  return EvolveGeneration(population, fitness, config, generation);
}

GenerationResult EvolveGeneration(const std::vector<Genome>& population,
                                  std::span<const double> fitness,
                                  const EvolutionConfig& config, int64_t generation) {
  config.Validate();
  Require(static_cast<int64_t>(population.size()) == config.population,
          "population has " + std::to_string(population.size()) + " genomes, expected " +
              std::to_string(config.population));
  Require(fitness.size() == population.size(), "one fitness value per genome is required");
  const uint64_t base =
      DeriveSeed(config.seed, kGenerationStream, static_cast<uint64_t>(generation));

  GenerationResult result;
  result.parent_sources =
      SampleProportional(fitness, config.weighted_parents, DeriveSeed(base, kWeightedSlot));
  const std::vector<double> flat(population.size(), 1.0);
  const auto uniform =
      SampleProportional(flat, config.unweighted_parents, DeriveSeed(base, kUniformSlot));
  result.parent_sources.insert(result.parent_sources.end(), uniform.begin(), uniform.end());

  result.population.reserve(population.size());
  for (size_t src : result.parent_sources) {
    result.population.push_back({population[src].alleles, fitness[src]});
  }
  const size_t parents = result.parent_sources.size();
  for (int64_t o = 0; o < config.offspring; ++o) {
    std::mt19937_64 rng(DeriveSeed(base, kOffspringSlot, static_cast<uint64_t>(o)));
    OffspringRecord rec;
    rec.parent_a = std::uniform_int_distribution<size_t>(0, parents - 1)(rng);
    rec.parent_b = std::uniform_int_distribution<size_t>(0, parents - 2)(rng);
    if (rec.parent_b >= rec.parent_a) ++rec.parent_b;
    const auto& a = result.population[rec.parent_a].alleles;
    const auto& b = result.population[rec.parent_b].alleles;
    Genome child;
    for (int j = 0; j < kGenomeSize; ++j) child.alleles[j] = (rng() & 1) ? a[j] : b[j];
    rec.gaussian_index = std::uniform_int_distribution<int>(0, kGenomeSize - 1)(rng);
    rec.zero_index = std::uniform_int_distribution<int>(0, kGenomeSize - 2)(rng);
    if (rec.zero_index >= rec.gaussian_index) ++rec.zero_index;
    rec.gaussian_value = std::normal_distribution<double>()(rng);
    child.alleles[rec.gaussian_index] = rec.gaussian_value;
    child.alleles[rec.zero_index] = 0.0;
    result.population.push_back(child);
    result.offspring.push_back(rec);
  }
  return result;
}

std::vector<double> AlleleVariances(const std::vector<Genome>& population) {
  Require(!population.empty(), "population is empty");
  std::vector<double> mean(kGenomeSize, 0.0), var(kGenomeSize, 0.0);
  const double n = static_cast<double>(population.size());
  for (const auto& g : population) {
    for (int j = 0; j < kGenomeSize; ++j) mean[j] += g.alleles[j] / n;
  }
  for (const auto& g : population) {
    for (int j = 0; j < kGenomeSize; ++j) {
      var[j] += (g.alleles[j] - mean[j]) * (g.alleles[j] - mean[j]) / n;
    }
  }
  return var;
}

std::vector<int> FixedAlleles(const std::vector<Genome>& population, double threshold) {
  const auto var = AlleleVariances(population);
  std::vector<int> out;
  for (int j = 0; j < kGenomeSize; ++j) {
    if (var[j] < threshold) out.push_back(j);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kHistoryHeader[] =
    "generation,mean,median,max,frac_orange,frac_black,w_orange,w_black\n";

std::string HistoryRow(const GenerationStats& s) {
  return std::to_string(s.generation) + "," + Num(s.mean) + "," + Num(s.median) + "," +
         Num(s.max) + "," + Num(s.frac_orange) + "," + Num(s.frac_black) + "," +
         Num(s.weights.orange) + "," + Num(s.weights.black) + "\n";
}

void AppendFile(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) Fail(ErrorCode::kIo, "cannot append to " + path.string());
  out << text;
}

void WriteAlleles(const fs::path& path, const std::vector<Genome>& population) {
  std::string csv;
  for (int l = 0; l < kNumCodes; ++l) {
    for (int j = 0; j < kCodeDim; ++j) {
      csv += "z" + std::to_string(l + 1) + "_" + std::to_string(j);
      csv += (l == kNumCodes - 1 && j == kCodeDim - 1) ? "\n" : ",";
    }
  }
  for (const auto& g : population) {
    for (int j = 0; j < kGenomeSize; ++j) {
      csv += Num(g.alleles[j]);
      csv += j == kGenomeSize - 1 ? "\n" : ",";
    }
  }
  WriteFile(path, csv);
}

}  // namespace

EvolutionRun::EvolutionRun(const EvolutionConfig& config,
                           std::shared_ptr<const FitnessTable> table,
                           fs::path output_dir)
    : config_(config), table_(std::move(table)), output_dir_(std::move(output_dir)) {
  config_.Validate();
  if (!table_ || table_->empty()) {
    Fail(ErrorCode::kFailedPrecondition, "evolution needs a non-empty fitness table");
  }
}

EvolutionRun::EvolutionRun(const EvolutionConfig& config,
                           std::shared_ptr<const FitnessTable> table,
                           const std::vector<Alleles>& initial, fs::path output_dir)
    : EvolutionRun(config, std::move(table), std::move(output_dir)) {
  Require(static_cast<int64_t>(initial.size()) == config_.population,
          "initial population has " + std::to_string(initial.size()) +
              " genomes, expected " + std::to_string(config_.population));
  for (const auto& a : initial) {
    for (double v : a) Require(std::isfinite(v), "initial genomes must be finite");
    population_.push_back({a, std::nullopt});
  }
  if (!output_dir_.empty()) {
    fs::create_directories(output_dir_);
    WriteFile(output_dir_ / "history.csv", kHistoryHeader);
  }
  Score();
  Record();
}

bool EvolutionRun::HasSnapshot(const fs::path& output_dir) {
  return fs::exists(output_dir / "snapshot.json");
}

EvolutionRun EvolutionRun::Resume(const EvolutionConfig& config,
                                  std::shared_ptr<const FitnessTable> table,
                                  const fs::path& output_dir) {
  if (!HasSnapshot(output_dir)) {
    Fail(ErrorCode::kNotFound, "no evolution snapshot in " + output_dir.string());
  }
  EvolutionRun run(config, std::move(table), output_dir);
  const auto snap = json::parse(ReadFile(output_dir / "snapshot.json"));
  run.generation_ = snap.at("generation").get<int64_t>();
  run.config_.weights = {snap.at("w_orange").get<double>(), snap.at("w_black").get<double>()};
  for (const auto& row : snap.at("population")) {
    Genome g;
    Require(row.size() == kGenomeSize, "corrupt evolution snapshot");
    for (int j = 0; j < kGenomeSize; ++j) g.alleles[j] = row[j].get<double>();
    run.population_.push_back(g);
  }
  Require(static_cast<int64_t>(run.population_.size()) == run.config_.population,
          "snapshot population size does not match the config");

  // Keep history rows up to the snapshot; later rows belong to work that was
  // never snapshotted.
  std::string history = kHistoryHeader;
  const auto rows = ReadCsv(output_dir / "history.csv");
  for (size_t r = 1; r < rows.size(); ++r) {
    const auto& c = rows[r];
    if (c.size() != 8) continue;
    GenerationStats s;
    s.generation = std::stoll(c[0]);
    if (s.generation > run.generation_) break;
    s.mean = std::stod(c[1]);
    s.median = std::stod(c[2]);
    s.max = std::stod(c[3]);
    s.frac_orange = std::stod(c[4]);
    s.frac_black = std::stod(c[5]);
    s.weights = {std::stod(c[6]), std::stod(c[7])};
    run.history_.push_back(s);
    history += HistoryRow(s);
  }
  WriteFile(output_dir / "history.csv", history);
  run.Score();
  return run;
}

void EvolutionRun::SetWeights(const FitnessWeights& weights) {
  weights.Validate();
  config_.weights = weights;
  for (size_t i = 0; i < population_.size(); ++i) {
    population_[i].cached_fitness = CombineFitness(table_->fractions(nearest_[i]), weights);
  }
}

void EvolutionRun::Score() {
  nearest_.resize(population_.size(), SIZE_MAX);
  for (size_t i = 0; i < population_.size(); ++i) {
    if (nearest_[i] == SIZE_MAX) nearest_[i] = table_->Nearest(population_[i].alleles);
    population_[i].cached_fitness =
        CombineFitness(table_->fractions(nearest_[i]), config_.weights);
  }
}

void EvolutionRun::Record() {
  GenerationStats s;
  s.generation = generation_;
  s.weights = config_.weights;
  std::vector<double> fitness;
  fitness.reserve(population_.size());
  for (size_t i = 0; i < population_.size(); ++i) {
    fitness.push_back(*population_[i].cached_fitness);
    s.frac_orange += table_->fractions(nearest_[i]).orange;
    s.frac_black += table_->fractions(nearest_[i]).black;
  }
  const double n = static_cast<double>(population_.size());
  s.mean = std::accumulate(fitness.begin(), fitness.end(), 0.0) / n;
  s.max = *std::max_element(fitness.begin(), fitness.end());
  s.median = Median(fitness);
  s.frac_orange /= n;
  s.frac_black /= n;
  history_.push_back(s);

  if (output_dir_.empty()) return;
  AppendFile(output_dir_ / "history.csv", HistoryRow(s));
  if (generation_ % config_.allele_every == 0 || generation_ == config_.generations) {
    WriteAlleles(output_dir_ / ("alleles_" + std::to_string(generation_) + ".csv"),
                 population_);
  }
  json snap = {{"generation", generation_},
               {"w_orange", config_.weights.orange},
               {"w_black", config_.weights.black}};
  json rows = json::array();
  for (const auto& g : population_) rows.push_back(g.alleles);
  snap["population"] = std::move(rows);
  const auto tmp = output_dir_ / "snapshot.json.tmp";
  WriteFile(tmp, snap.dump());
  fs::rename(tmp, output_dir_ / "snapshot.json");
}

const GenerationStats& EvolutionRun::Step() {
  if (finished()) {
    Fail(ErrorCode::kFailedPrecondition,
         "evolution already reached generation " + std::to_string(config_.generations));
  }
  std::vector<double> fitness;
  fitness.reserve(population_.size());
  for (const auto& g : population_) fitness.push_back(*g.cached_fitness);
  auto result = EvolveGeneration(population_, fitness, config_, generation_);

  std::vector<size_t> nearest(result.population.size(), SIZE_MAX);
  for (size_t i = 0; i < result.parent_sources.size(); ++i) {
    nearest[i] = nearest_[result.parent_sources[i]];
  }
  population_ = std::move(result.population);
  nearest_ = std::move(nearest);
  last_offspring_ = std::move(result.offspring);
  ++generation_;
  Score();
  Record();
  return history_.back();
}

std::vector<size_t> EvolutionRun::TopK(size_t k) const {
  std::vector<size_t> idx(population_.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](size_t a, size_t b) {
                      const double fa = *population_[a].cached_fitness;
                      const double fb = *population_[b].cached_fitness;
                      return fa != fb ? fa > fb : a < b;
                    });
  idx.resize(k);
  return idx;
}

std::vector<GenerationStats> RunEvolution(const EvolutionConfig& config,
                                          std::shared_ptr<const FitnessTable> table,
                                          const std::vector<Alleles>& initial,
                                          const fs::path& output_dir) {
  auto run = !output_dir.empty() && EvolutionRun::HasSnapshot(output_dir)
                 ? EvolutionRun::Resume(config, std::move(table), output_dir)
                 : EvolutionRun(config, std::move(table), initial, output_dir);
  while (!run.finished()) run.Step();
  return run.history();
}

}  // namespace dhrl
