#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "synic/dataset.hpp"
#include "synic/embedding_bank.hpp"
#include "synic/metrics.hpp"
#include "synic/model.hpp"
#include "synic/selection.hpp"
#include "synic/synthgen.hpp"

namespace synic {

enum class Objective { synergy, retrieval };

std::string_view to_string(Objective o);
Objective objective_from_string(std::string_view s);

// Context-sampling policy across a whole run. The first three map straight
// onto the per-prompt strategies; interpolate anneals from Random toward
// Unknown-First over the epochs.
enum class TrainStrategy { random, graph, unknown_first, interpolate };

std::string_view to_string(TrainStrategy s);
TrainStrategy train_strategy_from_string(std::string_view s);

struct TrainConfig {
    int epochs = 10;
    int batch_size = 64;
    double lr = 3e-4;
    int warmup_steps = -1;  // < 0: 5% of total steps
    double clip_norm = 1.0;
    TrainStrategy strategy = TrainStrategy::unknown_first;
    int n_ctx = 20;
    SplitMode mode = SplitMode::unknown_drug;
    Objective objective = Objective::synergy;
    uint64_t seed = 0;

    // Throws ConfigError on contradictions (n_ctx beyond the model, retrieval
    // with batches that make the contrastive loss degenerate, ...).
    void validate(const ModelConfig& model) const;

    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

struct HistoryEntry {
    int epoch = 0;
    int64_t step = 0;
    double loss = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    TransformerF model;
    std::vector<HistoryEntry> history;
};

// Runs the prefix-weighted training loop over the split's train tuples:
// every query draws a fresh artificial unknown and a strategy-selected
// context from the train pool, prompts are masked and batched, and the
// summed per-prefix loss (BCE for synergy, the contrastive loss with ramp
// weights for retrieval) is optimized with Adam under a warmup/decay
// schedule. `bank` supplies retrieval targets and is required for that
// objective. History is appended per optimizer step and streamed as JSON
// lines when a sink is given. Throws TrainDivergedError on non-finite loss.
TrainResult train_model(const ModelConfig& model_cfg, const std::vector<SynergyTuple>& pool,
                        const SplitBundle& split, const EntityVocab& vocab,
                        const TrainConfig& cfg, const DrugEmbeddingBank* bank = nullptr,
                        std::ostream* history_jsonl = nullptr);

// Scores a batch of assembled prompts; `queries` holds the unmasked tuples
// the prompts were built from, for scorers that bypass the model.
class PromptScorer {
  public:
    virtual ~PromptScorer() = default;
    virtual std::vector<double> score_batch(const std::vector<PromptSequence>& prompts,
                                            const std::vector<SynergyTuple>& queries) = 0;
};

// Sigmoid of the model's query logit, so scores live in [0,1] and the 0.5
// decision threshold coincides with logit zero.
class ModelScorer : public PromptScorer {
  public:
    explicit ModelScorer(const TransformerF& model) : model_(&model) {}
    std::vector<double> score_batch(const std::vector<PromptSequence>& prompts,
                                    const std::vector<SynergyTuple>& queries) override;

  private:
    const TransformerF* model_;
};

// Ground-truth scorer: sigmoid of (latent score - threshold). Monotone in
// the true score, so it upper-bounds every model on noise-free data.
class OracleScorer : public PromptScorer {
  public:
    OracleScorer(const LatentWorld& world, const EntityVocab& vocab);
    std::vector<double> score_batch(const std::vector<PromptSequence>& prompts,
                                    const std::vector<SynergyTuple>& queries) override;

  private:
    const LatentWorld* world_;
    std::vector<int> widx_;
};

enum class SplitPart { validation, test };

struct EvalOptions {
    Strategy strategy = Strategy::unknown_first;
    int n_ctx = 20;
    uint64_t seed = 0;
    double threshold = 0.5;
    int batch_size = 64;
    SplitPart part = SplitPart::test;
};

// Per-group-tag slice of an evaluation; metrics are absent when the group
// has only one class.
struct GroupReport {
    size_t n = 0;
    size_t positives = 0;
    std::optional<MetricsReport> metrics;
};

struct EvalReport {
    MetricsReport overall;
    std::map<std::string, GroupReport> per_group;

    nlohmann::json to_json() const;
};

// Few-shot/zero-shot protocol: for each evaluated tuple, the designated
// unknown is its first held-out entity, context comes from the context bank
// (selection seeded per query content, so tuple order cannot matter), every
// held-out id is masked, and the scorer sees the assembled prompts.
EvalReport evaluate_split(PromptScorer& scorer, const std::vector<SynergyTuple>& pool,
                          const SplitBundle& split, const EntityVocab& vocab,
                          const EvalOptions& opts);

// Fixed per-unknown contexts: pool indices into the context bank, in prompt
// order. The map key is the designated unknown entity.
using ContextAssignment = std::map<EntityId, std::vector<uint32_t>>;

nlohmann::json context_assignment_to_json(const ContextAssignment& a);
ContextAssignment context_assignment_from_json(const nlohmann::json& j);

// Like evaluate_split but each query's whole context is its unknown's
// assigned example list (optionally truncated to the first `n_ctx` entries;
// n_ctx < 0 keeps all). Queries whose unknown has no assignment raise
// ConfigError.
EvalReport evaluate_with_contexts(PromptScorer& scorer, const std::vector<SynergyTuple>& pool,
                                  const SplitBundle& split, const EntityVocab& vocab,
                                  const ContextAssignment& contexts, SplitPart part,
                                  double threshold = 0.5, int n_ctx = -1);

// The tuple's first held-out entity in slot order (drug_a, drug_b, cell).
// Throws ContractError if the tuple mentions none.
EntityId designated_unknown(const SynergyTuple& t, const IdSet& held_out);

}  // namespace synic
