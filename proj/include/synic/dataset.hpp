#pragma once

#include <filesystem>
#include <istream>
#include <ostream>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "synic/types.hpp"
#include "synic/vocab.hpp"

namespace synic {

struct IngestOptions {
    // Fractional labels are binarised as (value >= threshold).
    double label_threshold = 0.5;
};

struct Dataset {
    EntityVocab vocab;
    std::vector<SynergyTuple> tuples;
};

// Reads `drug_1,drug_2,cell_line,label[,group]` CSV. Throws DataError with a
// line number on malformed rows; duplicate rows are kept.
Dataset ingest_csv(std::istream& in, const IngestOptions& opts = {});
Dataset ingest_csv(const std::filesystem::path& path, const IngestOptions& opts = {});

void write_csv(std::ostream& out, const EntityVocab& vocab, const std::vector<SynergyTuple>& tuples);
void write_csv(const std::filesystem::path& path, const EntityVocab& vocab,
               const std::vector<SynergyTuple>& tuples);

// Which entity slot is withheld from the model.
enum class SplitMode { unknown_drug, unknown_cell };

std::string_view to_string(SplitMode mode);
SplitMode split_mode_from_string(std::string_view s);

// Index-based partition of a tuple pool around a set of held-out entities.
// `train` never mentions a held-out entity. The other parts hold the tuples
// that do: a per-entity context bank, and validation / test pools.
struct SplitBundle {
    SplitMode mode = SplitMode::unknown_drug;
    uint64_t seed = 0;
    size_t bank_per_entity = 0;  // n for the few-shot regime, 0 otherwise
    std::vector<EntityId> held_out;  // sorted
    std::vector<uint32_t> train;
    std::vector<uint32_t> context_bank;
    std::vector<uint32_t> validation;
    std::vector<uint32_t> test;

    IdSet held_out_set() const { return IdSet(held_out); }

    nlohmann::json to_json() const;
    static SplitBundle from_json(const nlohmann::json& j);
};

// Few-shot regime: hold out m entities, bank exactly n tuples per held-out
// entity, remaining held-out tuples go to test; validation stays empty.
SplitBundle make_fewshot_split(const std::vector<SynergyTuple>& tuples, const EntityVocab& vocab,
                               size_t m, size_t n, SplitMode mode, uint64_t seed);

// Optimisation regime: hold out m entities, then split their tuples into
// near-equal thirds (bank / validation / test).
SplitBundle make_optimization_split(const std::vector<SynergyTuple>& tuples,
                                    const EntityVocab& vocab, size_t m, SplitMode mode,
                                    uint64_t seed);

// Same as above but with a caller-chosen held-out set, so different split
// regimes can share one trained model.
SplitBundle make_optimization_split_for(const std::vector<SynergyTuple>& tuples,
                                        const EntityVocab& vocab, std::vector<EntityId> held_out,
                                        SplitMode mode, uint64_t seed);

std::vector<SynergyTuple> gather(const std::vector<SynergyTuple>& tuples,
                                 const std::vector<uint32_t>& indices);

// Checks the partition invariants against the pool; throws ContractError.
void validate_split(const std::vector<SynergyTuple>& tuples, const EntityVocab& vocab,
                    const SplitBundle& split);

void save_split(const std::filesystem::path& path, const SplitBundle& split);
SplitBundle load_split(const std::filesystem::path& path);

}  // namespace synic
