#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "synic/rng.hpp"

namespace synic {

using EntityId = uint32_t;

// One labelled measurement: an unordered drug pair on a cell line.
struct SynergyTuple {
    EntityId drug_a = 0;
    EntityId drug_b = 0;
    EntityId cell = 0;
    uint8_t label = 0;
    std::string group;  // optional stratum tag; empty = untagged

    bool mentions(EntityId e) const { return drug_a == e || drug_b == e || cell == e; }

    bool operator==(const SynergyTuple&) const = default;
};

// Order-insensitive in the drug pair, so (a,b,c) and (b,a,c) hash alike.
inline uint64_t content_hash(const SynergyTuple& t) {
    const uint64_t lo = std::min(t.drug_a, t.drug_b);
    const uint64_t hi = std::max(t.drug_a, t.drug_b);
    uint64_t h = mix64(0x5315ull ^ lo);
    h = mix64(h ^ hi);
    h = mix64(h ^ t.cell);
    h = mix64(h ^ t.label);
    return h;
}

// Small sorted-unique set of entity ids.
class IdSet {
  public:
    IdSet() = default;
    explicit IdSet(std::vector<EntityId> ids) : ids_(std::move(ids)) {
        std::sort(ids_.begin(), ids_.end());
        ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
    }

    bool contains(EntityId e) const {
        return std::binary_search(ids_.begin(), ids_.end(), e);
    }

    bool empty() const { return ids_.empty(); }
    size_t size() const { return ids_.size(); }
    const std::vector<EntityId>& ids() const { return ids_; }

    auto begin() const { return ids_.begin(); }
    auto end() const { return ids_.end(); }

  private:
    std::vector<EntityId> ids_;
};

}  // namespace synic
