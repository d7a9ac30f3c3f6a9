#pragma once

#include <cstdint>
#include <vector>

#include "synic/types.hpp"
#include "synic/vocab.hpp"

namespace synic {

enum class Slot : uint8_t { drug_a = 0, drug_b = 1, cell = 2, label = 3 };

struct PromptToken {
    Slot slot;
    uint32_t value;  // entity id (possibly a reserved unknown id) or 0/1 for labels

    bool operator==(const PromptToken&) const = default;
};

// Masking rule applied during prompt assembly: the designated entity becomes
// the primary unknown token; any other withheld entity becomes the secondary
// unknown token, so no withheld id ever reaches the model.
struct MaskSpec {
    EntityId designated;
    IdSet withheld;  // may or may not contain `designated`
};

// Flat token sequence [d1 d2 c y] * n_ctx + [d1 d2 c]; predictions are read
// at the cell-slot positions listed in query_positions (one per example group
// plus the final query).
struct PromptSequence {
    std::vector<PromptToken> tokens;
    std::vector<int> query_positions;

    int length() const { return static_cast<int>(tokens.size()); }
    size_t n_ctx() const { return query_positions.empty() ? 0 : query_positions.size() - 1; }

    // First position inside example group g (groups of 4 tokens, query last)
    // whose value equals `unknown_value`; -1 if the group has none.
    int first_unknown_in_group(size_t g, uint32_t unknown_value) const;

    // All positions holding `unknown_value`, ascending.
    std::vector<int> positions_of(uint32_t unknown_value) const;

    static size_t group_of(int position) { return static_cast<size_t>(position) / 4; }
};

// Builds the prompt from an ordered context plus the unlabelled query,
// applying the mask to every token. Throws ContractError if a withheld id
// would survive assembly (it cannot, by construction, but the scan is cheap).
PromptSequence mask_and_assemble(const std::vector<SynergyTuple>& context,
                                 const SynergyTuple& query, const MaskSpec& mask,
                                 const EntityVocab& vocab);

}  // namespace synic
