#include "synic/graph.hpp"

#include <algorithm>

#include "synic/errors.hpp"

namespace synic {

namespace {

void merge_sorted_unique(std::vector<uint32_t>& dst, const std::vector<uint32_t>& src) {
    std::vector<uint32_t> out;
    out.reserve(dst.size() + src.size());
    std::set_union(dst.begin(), dst.end(), src.begin(), src.end(), std::back_inserter(out));
    dst = std::move(out);
}

}  // namespace

ContextGraph::ContextGraph(std::vector<SynergyTuple> pool) : nodes_(std::move(pool)) {
    if (nodes_.empty()) throw ContractError("ContextGraph: empty pool");
    for (uint32_t i = 0; i < nodes_.size(); ++i) {
        const auto& t = nodes_[i];
        entity_index_[t.drug_a].push_back(i);
        if (t.drug_b != t.drug_a) entity_index_[t.drug_b].push_back(i);
        entity_index_[t.cell].push_back(i);
    }

    drug_adj_.resize(nodes_.size());
    cell_adj_.resize(nodes_.size());
    for (uint32_t i = 0; i < nodes_.size(); ++i) {
        const auto& t = nodes_[i];
        auto collect = [&](EntityId e, std::vector<uint32_t>& adj) {
            std::vector<uint32_t> peers = entity_index_.at(e);
            peers.erase(std::remove(peers.begin(), peers.end(), i), peers.end());
            merge_sorted_unique(adj, peers);
        };
        collect(t.drug_a, drug_adj_[i]);
        if (t.drug_b != t.drug_a) collect(t.drug_b, drug_adj_[i]);
        collect(t.cell, cell_adj_[i]);
    }
}

std::vector<uint32_t> ContextGraph::neighbors(size_t i) const {
    std::vector<uint32_t> out = drug_adj_[i];
    merge_sorted_unique(out, cell_adj_[i]);
    return out;
}

const std::vector<uint32_t>& ContextGraph::nodes_with(EntityId e) const {
    static const std::vector<uint32_t> empty;
    const auto it = entity_index_.find(e);
    return it == entity_index_.end() ? empty : it->second;
}

std::vector<uint32_t> ContextGraph::nodes_sharing_entity(const SynergyTuple& t) const {
    std::vector<uint32_t> out = nodes_with(t.drug_a);
    if (t.drug_b != t.drug_a) merge_sorted_unique(out, nodes_with(t.drug_b));
    merge_sorted_unique(out, nodes_with(t.cell));
    return out;
}

}  // namespace synic
