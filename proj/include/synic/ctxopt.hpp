#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "synic/dataset.hpp"
#include "synic/train.hpp"
#include "synic/types.hpp"
#include "synic/vocab.hpp"

namespace synic {

// Candidate genes per held-out entity: positions into `split.context_bank`
// whose tuple contains that entity. Built once, shared by every optimizer.
class GeneSpace {
  public:
    GeneSpace(const std::vector<SynergyTuple>& pool, const SplitBundle& split,
              const EntityVocab& vocab, int genes_per_entity);

    const std::vector<EntityId>& entities() const { return entities_; }
    int genes_per_entity() const { return n_; }
    size_t num_blocks() const { return entities_.size(); }
    size_t flat_length() const { return entities_.size() * static_cast<size_t>(n_); }
    const std::vector<uint32_t>& candidates(size_t block) const;
    const SplitBundle& split() const { return *split_; }

    // Uniform draw from a block's candidates.
    uint32_t random_gene(size_t block, RngStream& rng) const;

  private:
    const SplitBundle* split_;
    std::vector<EntityId> entities_;                   // sorted held-out ids
    std::vector<std::vector<uint32_t>> candidates_;    // per block, ascending
    int n_;
};

// One candidate context per held-out entity: for block b, an ordered run of
// `n` distinct bank positions at genes[b*n .. (b+1)*n). Gene order is prompt
// order.
struct Chromosome {
    int genes_per_entity = 0;
    std::vector<uint32_t> genes;  // flat blocks, positions into context_bank

    uint64_t hash() const;
    bool operator==(const Chromosome&) const = default;

    // Pool-index form consumed by evaluate_with_contexts and the eval CLI.
    ContextAssignment to_assignment(const GeneSpace& space) const;
};

// Uniform valid chromosome: per block, a random ordered n-subset of the
// block's candidates.
Chromosome random_chromosome(const GeneSpace& space, RngStream& rng);

struct GAConfig {
    int population = 8;
    int epochs = 50;
    int parents = 4;
    double mutation_rate = 0.10;  // per gene
    uint64_t seed = 0;

    void validate() const;  // population >= parents >= 2, rate in [0,1]
};

struct FitnessTraceEntry {
    size_t index = 0;         // 0-based evaluation counter
    uint64_t chromosome_hash = 0;
    double fitness = 0.0;     // validation ROC-AUC
    double running_best = 0.0;

    nlohmann::json to_json() const;
};

// Scores chromosomes by validation ROC-AUC with each block as the full
// prompt context. Results are cached by exact genome, so revisited genomes
// cost nothing and the recorded trace counts distinct evaluations only.
class FitnessEvaluator {
  public:
    FitnessEvaluator(PromptScorer& scorer, const std::vector<SynergyTuple>& pool,
                     const GeneSpace& space, const EntityVocab& vocab, double threshold = 0.5);

    double evaluate(const Chromosome& c);

    // Uncached score of a chromosome on the test part; never traced.
    double evaluate_on_test(const Chromosome& c) const;

    size_t evaluations() const { return trace_.size(); }
    const std::vector<FitnessTraceEntry>& trace() const { return trace_; }

  private:
    PromptScorer* scorer_;
    const std::vector<SynergyTuple>* pool_;
    const GeneSpace* space_;
    const EntityVocab* vocab_;
    double threshold_;
    std::map<std::vector<uint32_t>, double> cache_;
    std::vector<FitnessTraceEntry> trace_;
};

struct GAResult {
    Chromosome best;
    double best_fitness = 0.0;
    size_t evaluations = 0;               // distinct genomes scored
    std::vector<double> generation_best;  // population best per generation
};

// Steady-state GA: each generation the top `parents` survive unchanged and
// the rest are replaced by mutated single-point crossovers of two distinct
// parents; a repair pass restores in-block distinctness. Returns the argmax
// over everything evaluated.
GAResult run_ga(FitnessEvaluator& evaluator, const GeneSpace& space, const GAConfig& cfg);

struct RandomBaselineResult {
    Chromosome best;
    double best_fitness = 0.0;
    double mean_fitness = 0.0;
    size_t evaluations = 0;
};

// Draws `budget` random chromosomes and keeps the best; the equal-cost
// yardstick for the GA.
RandomBaselineResult best_of_budget_random(FitnessEvaluator& evaluator, const GeneSpace& space,
                                           size_t budget, uint64_t seed);

// Per-example credit assignment: runs `budget` passes over the validation
// part, each query scored with a freshly sampled context of its entity's
// candidates, attributing the query's absolute error to every bank position
// used. Picks the n lowest-mean positions per block; ties break toward the
// lower position, and never-sampled positions only backfill (lowest first)
// when fewer than n were seen.
Chromosome error_reduction(PromptScorer& scorer, const std::vector<SynergyTuple>& pool,
                           const GeneSpace& space, const EntityVocab& vocab, size_t budget,
                           uint64_t seed);

}  // namespace synic
