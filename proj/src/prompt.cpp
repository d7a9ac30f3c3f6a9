#include "synic/prompt.hpp"

#include "synic/errors.hpp"

namespace synic {

int PromptSequence::first_unknown_in_group(size_t g, uint32_t unknown_value) const {
    const size_t begin = 4 * g;
    const size_t end = std::min(begin + 4, tokens.size());
    for (size_t p = begin; p < end; ++p)
        if (tokens[p].slot != Slot::label && tokens[p].value == unknown_value)
            return static_cast<int>(p);
    return -1;
}

std::vector<int> PromptSequence::positions_of(uint32_t unknown_value) const {
    std::vector<int> out;
    for (size_t p = 0; p < tokens.size(); ++p)
        if (tokens[p].slot != Slot::label && tokens[p].value == unknown_value)
            out.push_back(static_cast<int>(p));
    return out;
}

PromptSequence mask_and_assemble(const std::vector<SynergyTuple>& context,
                                 const SynergyTuple& query, const MaskSpec& mask,
                                 const EntityVocab& vocab) {
    const uint32_t unknown = vocab.unknown_id();
    const uint32_t unknown2 = vocab.unknown2_id();
    auto masked = [&](EntityId e) -> uint32_t {
        if (e == mask.designated) return unknown;
        if (mask.withheld.contains(e)) return unknown2;
        return e;
    };

    PromptSequence seq;
    seq.tokens.reserve(4 * context.size() + 3);
    auto push_entity = [&](Slot slot, EntityId e) {
        if (e >= vocab.num_entities())
            throw ContractError("mask_and_assemble: tuple carries a reserved or invalid id");
        seq.tokens.push_back({slot, masked(e)});
    };
    for (const auto& t : context) {
        push_entity(Slot::drug_a, t.drug_a);
        push_entity(Slot::drug_b, t.drug_b);
        push_entity(Slot::cell, t.cell);
        seq.tokens.push_back({Slot::label, t.label ? 1u : 0u});
        seq.query_positions.push_back(static_cast<int>(seq.tokens.size()) - 2);
    }
    push_entity(Slot::drug_a, query.drug_a);
    push_entity(Slot::drug_b, query.drug_b);
    push_entity(Slot::cell, query.cell);
    seq.query_positions.push_back(static_cast<int>(seq.tokens.size()) - 1);

    // Masking totality: no withheld id may survive in any entity slot.
    for (const auto& tok : seq.tokens) {
        if (tok.slot == Slot::label) continue;
        if (tok.value == mask.designated || mask.withheld.contains(tok.value))
            throw ContractError("mask_and_assemble: withheld id survived masking");
    }
    return seq;
}

}  // namespace synic
