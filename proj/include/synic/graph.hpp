#pragma once

#include <unordered_map>
#include <vector>

#include "synic/types.hpp"

namespace synic {

// Graph over a tuple pool: one node per tuple, typed edges between nodes that
// share a drug (drug edge) or a cell line (cell edge). Immutable once built.
class ContextGraph {
  public:
    explicit ContextGraph(std::vector<SynergyTuple> pool);

    size_t size() const { return nodes_.size(); }
    const SynergyTuple& node(size_t i) const { return nodes_[i]; }
    const std::vector<SynergyTuple>& nodes() const { return nodes_; }

    // Sorted ascending; a node is never its own neighbor.
    const std::vector<uint32_t>& drug_neighbors(size_t i) const { return drug_adj_[i]; }
    const std::vector<uint32_t>& cell_neighbors(size_t i) const { return cell_adj_[i]; }

    // Sorted union of both edge types.
    std::vector<uint32_t> neighbors(size_t i) const;

    // Nodes whose tuple mentions the entity; sorted, empty if none.
    const std::vector<uint32_t>& nodes_with(EntityId e) const;

    // Nodes sharing at least one entity with an arbitrary tuple (which need
    // not be a pool member); sorted.
    std::vector<uint32_t> nodes_sharing_entity(const SynergyTuple& t) const;

  private:
    std::vector<SynergyTuple> nodes_;
    std::vector<std::vector<uint32_t>> drug_adj_;
    std::vector<std::vector<uint32_t>> cell_adj_;
    std::unordered_map<EntityId, std::vector<uint32_t>> entity_index_;
};

}  // namespace synic
