#include "synic/inverse.hpp"

#include <algorithm>
#include <optional>
#include <unordered_set>

#include "synic/graph.hpp"
#include "synic/rng.hpp"
#include "synic/selection.hpp"

namespace synic {

std::string_view to_string(CandidatePool p) {
    switch (p) {
        case CandidatePool::all: return "all";
        case CandidatePool::held_out: return "held-out";
        case CandidatePool::seen: return "seen";
    }
    throw ContractError("unknown candidate pool");
}

CandidatePool candidate_pool_from_string(std::string_view s) {
    if (s == "all") return CandidatePool::all;
    if (s == "held-out") return CandidatePool::held_out;
    if (s == "seen") return CandidatePool::seen;
    throw ConfigError("unknown candidate pool '" + std::string(s) + "'");
}

Eigen::VectorXd predict_embedding(const TransformerF& model, const PromptSequence& prompt,
                                  const EntityVocab& vocab) {
    const size_t g = prompt.n_ctx();
    const int pos = prompt.first_unknown_in_group(g, vocab.unknown_id());
    if (pos < 0) throw ContractError("predict_embedding: query group hides no entity");
    BatchOutput<float> out = model.forward_batch({prompt}, nullptr);
    return out.retrieval[0].row(pos).cast<double>();
}

std::vector<EntityId> candidate_drugs(const EntityVocab& vocab, const IdSet& held_out,
                                      CandidatePool pool) {
    std::vector<EntityId> out;
    for (EntityId id : vocab.drug_ids()) {
        const bool held = held_out.contains(id);
        if (pool == CandidatePool::all || (pool == CandidatePool::held_out && held) ||
            (pool == CandidatePool::seen && !held))
            out.push_back(id);
    }
    return out;
}

RetrievalRanking rank_against_bank(const Eigen::VectorXd& predicted,
                                   const DrugEmbeddingBank& bank, const EntityVocab& vocab,
                                   const std::vector<EntityId>& candidates, EntityId target) {
    if (candidates.empty()) throw ConfigError("retrieval: candidate pool is empty");

    std::vector<std::pair<double, EntityId>> scored;
    scored.reserve(candidates.size());
    for (EntityId id : candidates) {
        const std::string& name = vocab.name(id);
        if (!bank.has(name)) throw DataError("retrieval: bank has no vector for drug '" + name + "'");
        scored.emplace_back(bank.max_cosine(name, predicted), id);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;  // higher cosine first
        return a.second < b.second;                        // then lower drug id
    });

    RetrievalRanking r;
    r.ranked.reserve(scored.size());
    r.cosines.reserve(scored.size());
    for (const auto& [cos, id] : scored) {
        r.ranked.push_back(id);
        r.cosines.push_back(cos);
    }
    const auto it = std::find(r.ranked.begin(), r.ranked.end(), target);
    if (it == r.ranked.end())
        throw ContractError("retrieval: target drug '" + std::string(vocab.name(target)) +
                            "' is not in the candidate pool");
    r.true_rank = static_cast<size_t>(it - r.ranked.begin()) + 1;
    return r;
}

RetrievalRanking retrieve(const TransformerF& model, const PromptSequence& prompt,
                          const DrugEmbeddingBank& bank, const EntityVocab& vocab,
                          const std::vector<EntityId>& candidates, EntityId target) {
    return rank_against_bank(predict_embedding(model, prompt, vocab), bank, vocab, candidates,
                             target);
}

nlohmann::json RankCurveReport::to_json() const {
    nlohmann::json mean = nlohmann::json::object();
    nlohmann::json per_query = nlohmann::json::object();
    for (size_t i = 0; i < mean_rank.size(); ++i) {
        mean[std::to_string(i)] = mean_rank[i];
        per_query[std::to_string(i)] = query_ranks[i];
    }
    return {{"num_candidates", num_candidates},
            {"mean_rank", mean},
            {"per_query_ranks", per_query}};
}

RankCurveReport rank_curve(const TransformerF& model, const std::vector<SynergyTuple>& pool,
                           const SplitBundle& split, const EntityVocab& vocab,
                           const DrugEmbeddingBank& bank, const RankCurveOptions& opts) {
    if (split.mode != SplitMode::unknown_drug)
        throw ConfigError("rank_curve: needs an unknown-drug split");
    if (opts.n_ctx_max < 0) throw ConfigError("rank_curve: n_ctx_max must be >= 0");
    if (opts.n_ctx_max > model.config().max_ctx_examples)
        throw ConfigError("rank_curve: n_ctx_max exceeds the model's context capacity");
    if (opts.batch_size < 1) throw ConfigError("rank_curve: batch_size must be >= 1");

    const std::vector<uint32_t>& part_idx =
        opts.part == SplitPart::test ? split.test : split.validation;
    if (part_idx.empty()) throw ContractError("rank_curve: selected split part is empty");
    const std::vector<SynergyTuple> queries = gather(pool, part_idx);
    const IdSet held = split.held_out_set();
    const std::vector<EntityId> candidates = candidate_drugs(vocab, held, opts.pool);
    if (candidates.empty()) throw ConfigError("rank_curve: candidate pool is empty");

    const size_t n_lens = static_cast<size_t>(opts.n_ctx_max) + 1;
    std::vector<SynergyTuple> bank_tuples;
    std::optional<ContextGraph> graph;
    std::unordered_set<uint32_t> bank_members(split.context_bank.begin(),
                                              split.context_bank.end());
    if (!opts.contexts) {
        if (opts.n_ctx_max > 0 && split.context_bank.empty())
            throw ContractError("rank_curve: context bank is empty");
        bank_tuples = gather(pool, split.context_bank);
        graph.emplace(bank_tuples);
    }

    // One prompt per (query, context length), built then scored in batches.
    std::vector<PromptSequence> prompts;
    std::vector<EntityId> targets;  // per query
    prompts.reserve(queries.size() * n_lens);
    targets.reserve(queries.size());
    for (const SynergyTuple& q : queries) {
        const EntityId h = designated_unknown(q, held);
        if (!vocab.is_drug(h)) throw ContractError("rank_curve: designated unknown is not a drug");
        targets.push_back(h);

        std::vector<SynergyTuple> assigned;
        if (opts.contexts) {
            const auto it = opts.contexts->find(h);
            if (it == opts.contexts->end())
                throw ConfigError("rank_curve: no assigned context for entity id " +
                                  std::to_string(h));
            if (it->second.size() < static_cast<size_t>(opts.n_ctx_max))
                throw ConfigError("rank_curve: assigned context for entity id " +
                                  std::to_string(h) + " is shorter than n_ctx_max");
            for (uint32_t idx : it->second) {
                if (!bank_members.count(idx))
                    throw ConfigError("rank_curve: assigned index " + std::to_string(idx) +
                                      " is not in the context bank");
                assigned.push_back(pool.at(idx));
            }
        }

        for (size_t len = 0; len < n_lens; ++len) {
            std::vector<SynergyTuple> ctx;
            if (opts.contexts) {
                // Assignments are explicit prompt orders; length-i keeps the
                // first i entries.
                ctx.assign(assigned.begin(), assigned.begin() + len);
            } else {
                // The context the selector would hand the model at budget i:
                // re-select with the same per-query stream each time.
                RngStream rng(derive_seed(opts.seed, "rank.ctx", content_hash(q)));
                for (uint32_t idx :
                     select_context_indices(*graph, q, h, len, Strategy::unknown_first, rng))
                    ctx.push_back(bank_tuples[idx]);
            }
            prompts.push_back(mask_and_assemble(ctx, q, MaskSpec{h, held}, vocab));
        }
    }

    RankCurveReport report;
    report.num_candidates = candidates.size();
    report.mean_rank.assign(n_lens, 0.0);
    report.query_ranks.assign(n_lens, {});
    for (auto& v : report.query_ranks) v.reserve(queries.size());

    const size_t batch = static_cast<size_t>(opts.batch_size);
    std::vector<size_t> flat_ranks(prompts.size());
    for (size_t start = 0; start < prompts.size(); start += batch) {
        const size_t len = std::min(batch, prompts.size() - start);
        const std::vector<PromptSequence> bp(prompts.begin() + start,
                                             prompts.begin() + start + len);
        BatchOutput<float> out = model.forward_batch(bp, nullptr);
        for (size_t p = 0; p < len; ++p) {
            const size_t flat = start + p;
            const size_t qi = flat / n_lens;
            const int pos = bp[p].first_unknown_in_group(bp[p].n_ctx(), vocab.unknown_id());
            if (pos < 0) throw ContractError("rank_curve: query group hides no entity");
            const Eigen::VectorXd pred = out.retrieval[p].row(pos).cast<double>();
            flat_ranks[flat] =
                rank_against_bank(pred, bank, vocab, candidates, targets[qi]).true_rank;
        }
    }

    for (size_t qi = 0; qi < queries.size(); ++qi)
        for (size_t len = 0; len < n_lens; ++len) {
            const size_t r = flat_ranks[qi * n_lens + len];
            report.query_ranks[len].push_back(r);
            report.mean_rank[len] += static_cast<double>(r);
        }
    for (double& m : report.mean_rank) m /= static_cast<double>(queries.size());
    return report;
}

}  // namespace synic
