#include "synic/selection.hpp"

#include <algorithm>

#include "synic/errors.hpp"

namespace synic {

std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::random: return "random";
        case Strategy::graph: return "graph";
        case Strategy::unknown_first: return "unknown-first";
    }
    throw ContractError("to_string: bad strategy value");
}

Strategy strategy_from_string(std::string_view s) {
    if (s == "random") return Strategy::random;
    if (s == "graph") return Strategy::graph;
    if (s == "unknown-first") return Strategy::unknown_first;
    throw ConfigError("unknown strategy '" + std::string(s) +
                      "' (expected random, graph or unknown-first)");
}

namespace {

bool same_measurement(const SynergyTuple& t, const SynergyTuple& q) {
    if (t.cell != q.cell || t.label != q.label) return false;
    return (t.drug_a == q.drug_a && t.drug_b == q.drug_b) ||
           (t.drug_a == q.drug_b && t.drug_b == q.drug_a);
}

std::vector<uint32_t> sample_from(const std::vector<uint32_t>& candidates, size_t take,
                                  RngStream& rng) {
    std::vector<uint32_t> out;
    out.reserve(take);
    for (size_t idx : rng.sample_indices(candidates.size(), take)) out.push_back(candidates[idx]);
    return out;
}

}  // namespace

std::vector<uint32_t> select_context_indices(const ContextGraph& graph, const SynergyTuple& query,
                                             EntityId h, size_t n_ctx, Strategy strategy,
                                             RngStream& rng) {
    if (!query.mentions(h))
        throw ContractError("select_context: h is not an entity of the query tuple");

    std::vector<char> taken(graph.size(), 0);
    auto filter = [&](const std::vector<uint32_t>& in) {
        std::vector<uint32_t> out;
        out.reserve(in.size());
        for (uint32_t i : in)
            if (!taken[i] && !same_measurement(graph.node(i), query)) out.push_back(i);
        return out;
    };
    auto mark = [&](const std::vector<uint32_t>& picks) {
        for (uint32_t i : picks) taken[i] = 1;
    };

    size_t remaining = n_ctx;
    std::vector<uint32_t> uf_picks, graph_picks, random_picks;

    if (strategy == Strategy::unknown_first && remaining > 0) {
        const auto cands = filter(graph.nodes_with(h));
        uf_picks = sample_from(cands, std::min(remaining, cands.size()), rng);
        mark(uf_picks);
        remaining -= uf_picks.size();
    }
    if (strategy != Strategy::random && remaining > 0) {
        const auto cands = filter(graph.nodes_sharing_entity(query));
        graph_picks = sample_from(cands, std::min(remaining, cands.size()), rng);
        mark(graph_picks);
        remaining -= graph_picks.size();
    }
    if (remaining > 0) {
        std::vector<uint32_t> all(graph.size());
        for (uint32_t i = 0; i < graph.size(); ++i) all[i] = i;
        const auto cands = filter(all);
        random_picks = sample_from(cands, std::min(remaining, cands.size()), rng);
    }

    // Highest-priority picks go last, i.e. nearest the query.
    std::vector<uint32_t> out;
    out.reserve(random_picks.size() + graph_picks.size() + uf_picks.size());
    out.insert(out.end(), random_picks.begin(), random_picks.end());
    out.insert(out.end(), graph_picks.begin(), graph_picks.end());
    out.insert(out.end(), uf_picks.begin(), uf_picks.end());
    return out;
}

std::vector<SynergyTuple> select_context(const ContextGraph& graph, const SynergyTuple& query,
                                         EntityId h, size_t n_ctx, Strategy strategy,
                                         uint64_t seed) {
    RngStream rng(seed);
    std::vector<SynergyTuple> out;
    for (uint32_t i : select_context_indices(graph, query, h, n_ctx, strategy, rng))
        out.push_back(graph.node(i));
    return out;
}

EntityId training_mask_choice(const SynergyTuple& t, SplitMode mode, RngStream& rng) {
    if (mode == SplitMode::unknown_cell) return t.cell;
    if (t.drug_a == t.drug_b) return t.drug_a;
    return rng.bernoulli(0.5) ? t.drug_a : t.drug_b;
}

EntityId training_mask_choice(const SynergyTuple& t, SplitMode mode, uint64_t seed) {
    RngStream rng(seed);
    return training_mask_choice(t, mode, rng);
}

double random_strategy_probability(size_t epoch, size_t total_epochs) {
    if (total_epochs == 0 || epoch >= total_epochs)
        throw ContractError("interpolate_strategy: need 0 <= epoch < total_epochs");
    const double p = 1.0 - static_cast<double>(epoch) / static_cast<double>(total_epochs);
    return std::max(0.25, p);
}

Strategy interpolate_strategy(size_t epoch, size_t total_epochs, RngStream& rng) {
    return rng.bernoulli(random_strategy_probability(epoch, total_epochs))
               ? Strategy::random
               : Strategy::unknown_first;
}

Strategy interpolate_strategy(size_t epoch, size_t total_epochs, uint64_t seed) {
    RngStream rng(seed);
    return interpolate_strategy(epoch, total_epochs, rng);
}

}  // namespace synic
