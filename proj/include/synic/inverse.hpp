#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "synic/dataset.hpp"
#include "synic/embedding_bank.hpp"
#include "synic/model.hpp"
#include "synic/prompt.hpp"
#include "synic/train.hpp"
#include "synic/types.hpp"
#include "synic/vocab.hpp"

namespace synic {

// Which drugs compete in the ranking.
enum class CandidatePool { all, held_out, seen };

std::string_view to_string(CandidatePool p);
CandidatePool candidate_pool_from_string(std::string_view s);

// Retrieval-head output at the query's masked-drug position; raw, not yet
// normalized. Throws ContractError when the query group hides no entity.
Eigen::VectorXd predict_embedding(const TransformerF& model, const PromptSequence& prompt,
                                  const EntityVocab& vocab);

struct RetrievalRanking {
    std::vector<EntityId> ranked;  // candidates, best first
    std::vector<double> cosines;   // aligned with `ranked`
    size_t true_rank = 0;          // 1-based position of the target drug
};

// Candidate drug ids for a pool choice, ascending.
std::vector<EntityId> candidate_drugs(const EntityVocab& vocab, const IdSet& held_out,
                                      CandidatePool pool);

// Cosine ranking of a predicted vector against the bank rows of each
// candidate (max over rows for multi-row drugs). Descending score, ties by
// lower drug id; scale of `predicted` does not matter.
RetrievalRanking rank_against_bank(const Eigen::VectorXd& predicted,
                                   const DrugEmbeddingBank& bank, const EntityVocab& vocab,
                                   const std::vector<EntityId>& candidates, EntityId target);

// End to end: embed the prompt's hidden drug and rank the pool against it.
RetrievalRanking retrieve(const TransformerF& model, const PromptSequence& prompt,
                          const DrugEmbeddingBank& bank, const EntityVocab& vocab,
                          const std::vector<EntityId>& candidates, EntityId target);

struct RankCurveOptions {
    int n_ctx_max = 20;
    CandidatePool pool = CandidatePool::all;
    SplitPart part = SplitPart::test;
    uint64_t seed = 0;
    int batch_size = 64;
    // Optional fixed per-entity context; entry order is the prefix order.
    const ContextAssignment* contexts = nullptr;
};

struct RankCurveReport {
    std::vector<double> mean_rank;                // [n_ctx 0..max]
    std::vector<std::vector<size_t>> query_ranks; // [n_ctx][query], 1-based
    size_t num_candidates = 0;

    nlohmann::json to_json() const;
};

// Ground-truth rank per query at every context prefix 0..n_ctx_max: context
// i uses the first i tuples of the query's selected (or assigned) context.
RankCurveReport rank_curve(const TransformerF& model, const std::vector<SynergyTuple>& pool,
                           const SplitBundle& split, const EntityVocab& vocab,
                           const DrugEmbeddingBank& bank, const RankCurveOptions& opts);

}  // namespace synic
