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

#ifndef DHRL_EVOLUTION_H_
#define DHRL_EVOLUTION_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dhrl/data_pipeline.h"
#include "dhrl/vlae.h"

namespace dhrl {

struct FitnessWeights {
  double orange = 0.5;
  double black = 0.5;

  // Both non-negative and finite, summing to at most 1 so fitness stays in
  // [0, 1].
  void Validate() const;
};

// Fractions of foreground (alpha > 0.5) pixels inside each color range.
struct PixelFractions {
  double orange = 0;
  double black = 0;
  int64_t foreground = 0;
};

// Orange: r in [0.9, 1], g in [0.55, 0.75], b in [0, 0.1]. Black: every
// channel below 0.2.
PixelFractions MeasurePixelRanges(const ImageSample& image);
double CombineFitness(const PixelFractions& f, const FitnessWeights& w);
// Returns 0 and logs a warning when the image has no foreground.
double Fitness(const ImageSample& image, const FitnessWeights& w = {});

using Alleles = std::array<double, kGenomeSize>;

struct Genome {
  Alleles alleles{};  // (z_1 dims, ..., z_4 dims)
  std::optional<double> cached_fitness;
};

// Reference genomes with their measured color fractions. Fitness for any
// query is that of the nearest entry under Euclidean distance, so weights
// can change without rebuilding.
class FitnessTable {
 public:
  void Add(const Alleles& genome, const PixelFractions& fractions);
  size_t size() const { return fractions_.size(); }
  bool empty() const { return fractions_.empty(); }

  // Exact nearest entry; ties go to the lower index.
  size_t Nearest(std::span<const double> genome) const;
  double Lookup(std::span<const double> genome, const FitnessWeights& w) const;

  Alleles genome(size_t i) const;
  const PixelFractions& fractions(size_t i) const { return fractions_.at(i); }

  // table.bin (little-endian doubles, one row of genome + fractions per
  // entry) and table.json (count, checksum, caller metadata).
  void Save(const std::filesystem::path& directory, nlohmann::json metadata = {}) const;
  static FitnessTable Load(const std::filesystem::path& directory,
                           nlohmann::json* metadata = nullptr);

 private:
  std::vector<double> genomes_;  // size() x kGenomeSize, row-major
  std::vector<PixelFractions> fractions_;
};

enum class InitMode { kPriorDraw, kDatasetEmbedding };
InitMode ParseInitMode(const std::string& name);
std::string InitModeName(InitMode mode);

// Genomes for a table or an initial population: the dataset embedding first
// (when requested, truncated to n), then N(0, I) prior draws up to n.
std::vector<Alleles> DrawGenomes(int64_t n, uint64_t seed, InitMode mode,
                                 const std::vector<LatentHierarchy>& embedding = {});

// Decodes every genome once (in batches) and records its color fractions.
FitnessTable BuildFitnessTable(VlaeImpl& model, const std::vector<Alleles>& genomes,
                               int64_t batch_size = 64);
FitnessTable BuildFitnessTable(VlaeImpl& model, int64_t n_refs, uint64_t seed,
                               InitMode mode,
                               const std::vector<LatentHierarchy>& embedding = {});

struct EvolutionConfig {
  int64_t population = 1000;
  int64_t generations = 500;
  int64_t weighted_parents = 500;
  int64_t unweighted_parents = 200;
  int64_t offspring = 300;
  FitnessWeights weights;
  uint64_t seed = 0;
  int64_t allele_every = 50;  // write alleles_<gen>.csv every this many generations
  double fixation_threshold = 0.01;

  void Validate() const;
};

struct GenerationStats {
  int64_t generation = 0;
  double mean = 0;
  double median = 0;
  double max = 0;
  double frac_orange = 0;  // population means of the nearest entries' fractions
  double frac_black = 0;
  FitnessWeights weights;
};

// Provenance of one offspring, for checking the mutation contract.
struct OffspringRecord {
  size_t parent_a = 0;  // indices into the selected parents (the first
  size_t parent_b = 0;  // weighted + unweighted rows of the next population)
  int gaussian_index = 0;
  double gaussian_value = 0;
  int zero_index = 0;
};

struct GenerationResult {
  std::vector<Genome> population;
  // Index in the previous population of each selected parent row.
  std::vector<size_t> parent_sources;
  std::vector<OffspringRecord> offspring;
};

// One generation: fitness by table lookup, fitness-proportional parents
// (uniform when every fitness is zero), uniform parents, uniform crossover
// between two distinct parents, then two distinct mutated alleles per
// offspring (one redrawn from N(0, 1), one set to 0). Next population is
// the parents followed by the offspring. Randomness comes from per-slot
// streams derived from (seed, generation).
GenerationResult EvolveGeneration(const std::vector<Genome>& population,
                                  const FitnessTable& table, const EvolutionConfig& config,
                                  int64_t generation);
// Same, with the population's fitness already known.
GenerationResult EvolveGeneration(const std::vector<Genome>& population,
                                  std::span<const double> fitness,
                                  const EvolutionConfig& config, int64_t generation);

// `count` indices drawn with replacement, probability proportional to
// `weights` (uniform when they are all zero), from a stream keyed by `seed`.
std::vector<size_t> SampleProportional(std::span<const double> weights, int64_t count,
                                       uint64_t seed);

std::vector<double> AlleleVariances(const std::vector<Genome>& population);
// Allele positions whose population variance is below `threshold`.
std::vector<int> FixedAlleles(const std::vector<Genome>& population, double threshold);

// Stateful run used by the CLI and the service. With an output directory,
// history.csv, alleles_<gen>.csv and a resumable population snapshot are
// written at every generation boundary.
class EvolutionRun {
 public:
  EvolutionRun(const EvolutionConfig& config, std::shared_ptr<const FitnessTable> table,
               const std::vector<Alleles>& initial,
               std::filesystem::path output_dir = {});

  // Continues a run from the snapshot in `output_dir`.
  static EvolutionRun Resume(const EvolutionConfig& config,
                             std::shared_ptr<const FitnessTable> table,
                             const std::filesystem::path& output_dir);
  static bool HasSnapshot(const std::filesystem::path& output_dir);

  // Advances one generation and returns its statistics.
  const GenerationStats& Step();
  bool finished() const { return generation_ >= config_.generations; }
  // Takes effect at the next generation boundary.
  void SetWeights(const FitnessWeights& weights);

  int64_t generation() const { return generation_; }
  const EvolutionConfig& config() const { return config_; }
  const std::vector<Genome>& population() const { return population_; }
  const std::vector<GenerationStats>& history() const { return history_; }
  const std::vector<OffspringRecord>& last_offspring() const { return last_offspring_; }
  // Population indices ordered by fitness, best first.
  std::vector<size_t> TopK(size_t k) const;

 private:
  EvolutionRun(const EvolutionConfig& config, std::shared_ptr<const FitnessTable> table,
               std::filesystem::path output_dir);
  void Score();
  void Record();

  EvolutionConfig config_;
  std::shared_ptr<const FitnessTable> table_;
  std::filesystem::path output_dir_;
  std::vector<Genome> population_;
  std::vector<size_t> nearest_;
  std::vector<GenerationStats> history_;
  std::vector<OffspringRecord> last_offspring_;
  int64_t generation_ = 0;
};

// Runs (or resumes) to config.generations and returns the full history.
std::vector<GenerationStats> RunEvolution(const EvolutionConfig& config,
                                          std::shared_ptr<const FitnessTable> table,
                                          const std::vector<Alleles>& initial,
                                          const std::filesystem::path& output_dir = {});

}  // namespace dhrl

#endif  // DHRL_EVOLUTION_H_
