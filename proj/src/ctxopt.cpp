#include "synic/ctxopt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <unordered_set>

#include "synic/prompt.hpp"
#include "synic/rng.hpp"

namespace synic {

// --- GeneSpace --------------------------------------------------------

GeneSpace::GeneSpace(const std::vector<SynergyTuple>& pool, const SplitBundle& split,
                     const EntityVocab& vocab, int genes_per_entity)
    : split_(&split), entities_(split.held_out), n_(genes_per_entity) {
    if (n_ < 1) throw ConfigError("context optimization: genes_per_entity must be >= 1");
    if (entities_.empty()) throw ConfigError("context optimization: split has no held-out entities");

    candidates_.resize(entities_.size());
    for (size_t b = 0; b < entities_.size(); ++b) {
        const EntityId h = entities_[b];
        for (uint32_t pos = 0; pos < split.context_bank.size(); ++pos) {
            const SynergyTuple& t = pool.at(split.context_bank[pos]);
            if (t.drug_a == h || t.drug_b == h || t.cell == h) candidates_[b].push_back(pos);
        }
        if (candidates_[b].size() < static_cast<size_t>(n_))
            throw ConfigError("context optimization: entity '" + std::string(vocab.name(h)) +
                              "' has only " + std::to_string(candidates_[b].size()) +
                              " bank tuples, need " + std::to_string(n_));
    }
}

const std::vector<uint32_t>& GeneSpace::candidates(size_t block) const {
    if (block >= candidates_.size())
        throw ContractError("GeneSpace::candidates: block out of range");
    return candidates_[block];
}

uint32_t GeneSpace::random_gene(size_t block, RngStream& rng) const {
    const std::vector<uint32_t>& c = candidates(block);
    return c[static_cast<size_t>(rng.below(c.size()))];
}

// --- Chromosome -------------------------------------------------------

uint64_t Chromosome::hash() const {
    uint64_t h = fnv1a(&genes_per_entity, sizeof genes_per_entity);
    if (!genes.empty()) h = fnv1a(genes.data(), genes.size() * sizeof genes[0], h);
    return h;
}

ContextAssignment Chromosome::to_assignment(const GeneSpace& space) const {
    const size_t n = static_cast<size_t>(genes_per_entity);
    if (genes.size() != space.num_blocks() * n)
        throw ContractError("chromosome length does not match the gene space");
    const std::vector<uint32_t>& bank = space.split().context_bank;
    ContextAssignment asg;
    for (size_t b = 0; b < space.num_blocks(); ++b) {
        std::vector<uint32_t>& ctx = asg[space.entities()[b]];
        ctx.reserve(n);
        for (size_t g = 0; g < n; ++g) ctx.push_back(bank.at(genes[b * n + g]));
    }
    return asg;
}

Chromosome random_chromosome(const GeneSpace& space, RngStream& rng) {
    Chromosome c;
    c.genes_per_entity = space.genes_per_entity();
    c.genes.reserve(space.flat_length());
    for (size_t b = 0; b < space.num_blocks(); ++b) {
        const std::vector<uint32_t>& cand = space.candidates(b);
        for (size_t i : rng.sample_indices(cand.size(), static_cast<size_t>(space.genes_per_entity())))
            c.genes.push_back(cand[i]);
    }
    return c;
}

// --- GAConfig ---------------------------------------------------------

void GAConfig::validate() const {
    if (parents < 2) throw ConfigError("ga: parents must be >= 2");
    if (population < parents) throw ConfigError("ga: population must be >= parents");
    if (epochs < 0) throw ConfigError("ga: epochs must be >= 0");
    if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0))
        throw ConfigError("ga: mutation_rate must be in [0, 1]");
}

// --- FitnessEvaluator -------------------------------------------------

nlohmann::json FitnessTraceEntry::to_json() const {
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(chromosome_hash));
    return {{"index", index},
            {"chromosome", std::string(hex)},
            {"fitness", fitness},
            {"running_best", running_best}};
}

FitnessEvaluator::FitnessEvaluator(PromptScorer& scorer, const std::vector<SynergyTuple>& pool,
                                   const GeneSpace& space, const EntityVocab& vocab,
                                   double threshold)
    : scorer_(&scorer), pool_(&pool), space_(&space), vocab_(&vocab), threshold_(threshold) {}

double FitnessEvaluator::evaluate(const Chromosome& c) {
    auto it = cache_.find(c.genes);
    if (it != cache_.end()) return it->second;

    const EvalReport report =
        evaluate_with_contexts(*scorer_, *pool_, space_->split(), *vocab_, c.to_assignment(*space_),
                               SplitPart::validation, threshold_);
    const double f = report.overall.roc_auc;
    FitnessTraceEntry entry;
    entry.index = trace_.size();
    entry.chromosome_hash = c.hash();
    entry.fitness = f;
    entry.running_best = trace_.empty() ? f : std::max(f, trace_.back().running_best);
    trace_.push_back(entry);
    cache_.emplace(c.genes, f);
    return f;
}

double FitnessEvaluator::evaluate_on_test(const Chromosome& c) const {
    const EvalReport report =
        evaluate_with_contexts(*scorer_, *pool_, space_->split(), *vocab_, c.to_assignment(*space_),
                               SplitPart::test, threshold_);
    return report.overall.roc_auc;
}

// --- run_ga -----------------------------------------------------------

namespace {

// In-block duplicates can appear after crossover or mutation; every gene is
// already valid for its block, so repair only restores distinctness.
void repair(Chromosome& c, const GeneSpace& space, RngStream& rng) {
    const size_t n = static_cast<size_t>(c.genes_per_entity);
    for (size_t b = 0; b < space.num_blocks(); ++b) {
        std::unordered_set<uint32_t> seen;
        for (size_t g = 0; g < n; ++g) {
            uint32_t& gene = c.genes[b * n + g];
            if (seen.count(gene)) {
                std::vector<uint32_t> fresh;
                for (uint32_t cand : space.candidates(b))
                    if (!seen.count(cand)) fresh.push_back(cand);
                gene = fresh[static_cast<size_t>(rng.below(fresh.size()))];
            }
            seen.insert(gene);
        }
    }
}

}  // namespace

GAResult run_ga(FitnessEvaluator& evaluator, const GeneSpace& space, const GAConfig& cfg) {
    cfg.validate();
    RngStream rng(derive_seed(cfg.seed, "ctxopt.ga"));
    const size_t flat = space.flat_length();
    const size_t eval_before = evaluator.evaluations();

    GAResult result;
    result.best_fitness = -1.0;
    auto consider = [&](const Chromosome& c, double f) {
        if (f > result.best_fitness) {
            result.best_fitness = f;
            result.best = c;
        }
    };

    std::vector<Chromosome> population;
    std::vector<double> fitness;
    population.reserve(static_cast<size_t>(cfg.population));
    for (int i = 0; i < cfg.population; ++i) {
        population.push_back(random_chromosome(space, rng));
        fitness.push_back(evaluator.evaluate(population.back()));
        consider(population.back(), fitness.back());
    }

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Rank by fitness, ties toward the earlier genome.
        std::vector<size_t> order(population.size());
        std::iota(order.begin(), order.end(), size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](size_t a, size_t b) { return fitness[a] > fitness[b]; });

        std::vector<Chromosome> next;
        std::vector<double> next_fit;
        for (int p = 0; p < cfg.parents; ++p) {
            next.push_back(population[order[p]]);
            next_fit.push_back(fitness[order[p]]);
        }

        for (int child_i = 0; child_i < cfg.population - cfg.parents; ++child_i) {
            // Two distinct parents with a fixed number of draws.
            const size_t pa = static_cast<size_t>(rng.below(cfg.parents));
            size_t pb = static_cast<size_t>(rng.below(cfg.parents - 1));
            if (pb >= pa) ++pb;

            Chromosome child = next[pa];
            if (flat >= 2) {
                const size_t cut = 1 + static_cast<size_t>(rng.below(flat - 1));
                for (size_t g = cut; g < flat; ++g) child.genes[g] = next[pb].genes[g];
            }
            for (size_t g = 0; g < flat; ++g)
                if (rng.bernoulli(cfg.mutation_rate))
                    child.genes[g] =
                        space.random_gene(g / static_cast<size_t>(child.genes_per_entity), rng);
            repair(child, space, rng);

            next_fit.push_back(evaluator.evaluate(child));
            next.push_back(std::move(child));
            consider(next.back(), next_fit.back());
        }

        population = std::move(next);
        fitness = std::move(next_fit);
        result.generation_best.push_back(*std::max_element(fitness.begin(), fitness.end()));
    }

    result.evaluations = evaluator.evaluations() - eval_before;
    return result;
}

// --- best_of_budget_random --------------------------------------------

RandomBaselineResult best_of_budget_random(FitnessEvaluator& evaluator, const GeneSpace& space,
                                           size_t budget, uint64_t seed) {
    if (budget == 0) throw ConfigError("random baseline: budget must be >= 1");
    RngStream rng(derive_seed(seed, "ctxopt.random"));

    RandomBaselineResult result;
    result.best_fitness = -1.0;
    result.evaluations = budget;
    double sum = 0.0;
    for (size_t i = 0; i < budget; ++i) {
        Chromosome c = random_chromosome(space, rng);
        const double f = evaluator.evaluate(c);
        sum += f;
        if (f > result.best_fitness) {
            result.best_fitness = f;
            result.best = std::move(c);
        }
    }
    result.mean_fitness = sum / static_cast<double>(budget);
    return result;
}

// --- error_reduction --------------------------------------------------

Chromosome error_reduction(PromptScorer& scorer, const std::vector<SynergyTuple>& pool,
                           const GeneSpace& space, const EntityVocab& vocab, size_t budget,
                           uint64_t seed) {
    if (budget == 0) throw ConfigError("error reduction: budget must be >= 1");
    const SplitBundle& split = space.split();
    if (split.validation.empty())
        throw ContractError("error reduction: split has no validation part");
    RngStream rng(derive_seed(seed, "ctxopt.errred"));

    const IdSet held = split.held_out_set();
    const size_t n = static_cast<size_t>(space.genes_per_entity());
    std::map<EntityId, size_t> block_of;
    for (size_t b = 0; b < space.num_blocks(); ++b) block_of[space.entities()[b]] = b;

    // sums/counts of absolute error per (block, bank position)
    std::vector<std::map<uint32_t, std::pair<double, size_t>>> stats(space.num_blocks());

    const std::vector<SynergyTuple> queries = gather(pool, split.validation);
    for (size_t pass = 0; pass < budget; ++pass) {
        std::vector<PromptSequence> prompts;
        std::vector<size_t> blocks;
        std::vector<std::vector<uint32_t>> used;
        prompts.reserve(queries.size());
        for (const SynergyTuple& q : queries) {
            const EntityId h = designated_unknown(q, held);
            const size_t b = block_of.at(h);
            const std::vector<uint32_t>& cand = space.candidates(b);
            std::vector<uint32_t> picks;
            picks.reserve(n);
            std::vector<SynergyTuple> ctx;
            ctx.reserve(n);
            for (size_t i : rng.sample_indices(cand.size(), n)) {
                picks.push_back(cand[i]);
                ctx.push_back(pool.at(split.context_bank[cand[i]]));
            }
            prompts.push_back(mask_and_assemble(ctx, q, MaskSpec{h, held}, vocab));
            blocks.push_back(b);
            used.push_back(std::move(picks));
        }

        std::vector<double> scores;
        scores.reserve(queries.size());
        for (size_t start = 0; start < prompts.size(); start += 64) {
            const size_t len = std::min<size_t>(64, prompts.size() - start);
            const std::vector<PromptSequence> bp(prompts.begin() + start,
                                                 prompts.begin() + start + len);
            const std::vector<SynergyTuple> bq(queries.begin() + start,
                                               queries.begin() + start + len);
            const std::vector<double> s = scorer.score_batch(bp, bq);
            if (s.size() != len) throw ContractError("scorer returned a wrong-sized batch");
            scores.insert(scores.end(), s.begin(), s.end());
        }

        for (size_t qi = 0; qi < queries.size(); ++qi) {
            const double err = std::fabs(scores[qi] - static_cast<double>(queries[qi].label));
            for (uint32_t pos : used[qi]) {
                auto& cell = stats[blocks[qi]][pos];
                cell.first += err;
                cell.second += 1;
            }
        }
    }

    Chromosome out;
    out.genes_per_entity = space.genes_per_entity();
    out.genes.reserve(space.flat_length());
    for (size_t b = 0; b < space.num_blocks(); ++b) {
        std::vector<std::pair<double, uint32_t>> ranked;  // (mean error, position)
        for (const auto& [pos, acc] : stats[b])
            ranked.emplace_back(acc.first / static_cast<double>(acc.second), pos);
        std::sort(ranked.begin(), ranked.end());  // mean asc, then position asc
        std::unordered_set<uint32_t> chosen;
        for (const auto& [mean, pos] : ranked) {
            if (chosen.size() == n) break;
            chosen.insert(pos);
            out.genes.push_back(pos);
        }
        // Blocks can come up short only when sampling never touched enough
        // candidates; backfill deterministically from the low positions.
        for (uint32_t cand : space.candidates(b)) {
            if (chosen.size() == n) break;
            if (!chosen.count(cand)) {
                chosen.insert(cand);
                out.genes.push_back(cand);
            }
        }
    }
    return out;
}

}  // namespace synic
