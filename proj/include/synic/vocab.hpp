#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "synic/types.hpp"

namespace synic {

// Maps drug / cell-line names to dense entity ids. Ids are assigned in first
// appearance order across both kinds, so they are stable for a given input
// stream. Two reserved ids follow the real entities: one for the designated
// masked entity and one for any other withheld entity.
class EntityVocab {
  public:
    enum class Kind : uint8_t { drug = 0, cell = 1 };

    EntityId intern(Kind kind, std::string name);

    std::optional<EntityId> find(Kind kind, std::string_view name) const;

    Kind kind(EntityId id) const;
    const std::string& name(EntityId id) const;
    bool is_drug(EntityId id) const { return kind(id) == Kind::drug; }
    bool is_cell(EntityId id) const { return kind(id) == Kind::cell; }

    size_t num_drugs() const { return num_drugs_; }
    size_t num_cells() const { return num_cells_; }
    size_t num_entities() const { return entries_.size(); }

    // Reserved ids sit immediately after the real entities.
    EntityId unknown_id() const { return static_cast<EntityId>(entries_.size()); }
    EntityId unknown2_id() const { return static_cast<EntityId>(entries_.size() + 1); }
    bool is_reserved(EntityId id) const { return id >= entries_.size(); }

    std::vector<EntityId> drug_ids() const;
    std::vector<EntityId> cell_ids() const;

    // Order-sensitive digest of (kind, name) pairs; ties checkpoints to the
    // exact vocabulary they were trained with.
    uint64_t fingerprint() const;

    nlohmann::json to_json() const;
    static EntityVocab from_json(const nlohmann::json& j);

  private:
    struct Entry {
        std::string name;
        Kind kind;
    };
    std::vector<Entry> entries_;
    std::unordered_map<std::string, EntityId> drug_by_name_;
    std::unordered_map<std::string, EntityId> cell_by_name_;
    size_t num_drugs_ = 0;
    size_t num_cells_ = 0;
};

}  // namespace synic
