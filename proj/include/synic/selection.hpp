#pragma once

#include <string_view>
#include <vector>

#include "synic/dataset.hpp"
#include "synic/graph.hpp"
#include "synic/rng.hpp"
#include "synic/types.hpp"

namespace synic {

enum class Strategy { random, graph, unknown_first };

std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view s);

// Ordered context selection with hierarchical fallback. Unknown-First draws
// from pool tuples containing h, then from tuples sharing any entity with the
// query, then from the whole pool; Graph starts at the second tier, Random at
// the third. The returned ordering puts lower-priority tiers first, so the
// highest-priority picks sit closest to the query. Tuples content-identical
// to the query are never selected; short pools yield short contexts.
std::vector<uint32_t> select_context_indices(const ContextGraph& graph, const SynergyTuple& query,
                                             EntityId h, size_t n_ctx, Strategy strategy,
                                             RngStream& rng);

std::vector<SynergyTuple> select_context(const ContextGraph& graph, const SynergyTuple& query,
                                         EntityId h, size_t n_ctx, Strategy strategy,
                                         uint64_t seed);

// Which entity of a training tuple is hidden: either drug with probability
// 1/2 in unknown-drug mode, always the cell in unknown-cell mode.
EntityId training_mask_choice(const SynergyTuple& t, SplitMode mode, RngStream& rng);
EntityId training_mask_choice(const SynergyTuple& t, SplitMode mode, uint64_t seed);

// Probability of picking Random over Unknown-First while annealing from
// all-Random to mostly-Unknown-First across training: max(0.25, 1 - e/E).
double random_strategy_probability(size_t epoch, size_t total_epochs);

Strategy interpolate_strategy(size_t epoch, size_t total_epochs, RngStream& rng);
Strategy interpolate_strategy(size_t epoch, size_t total_epochs, uint64_t seed);

}  // namespace synic
