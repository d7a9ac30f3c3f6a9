#include "synic/train.hpp"

#include <cmath>
#include <ostream>
#include <unordered_set>

#include "synic/errors.hpp"
#include "synic/graph.hpp"
#include "synic/losses.hpp"
#include "synic/optimizer.hpp"
#include "synic/prompt.hpp"
#include "synic/rng.hpp"

namespace synic {

std::string_view to_string(Objective o) {
    return o == Objective::synergy ? "synergy" : "retrieval";
}

Objective objective_from_string(std::string_view s) {
    if (s == "synergy") return Objective::synergy;
    if (s == "retrieval") return Objective::retrieval;
    throw ConfigError("unknown objective '" + std::string(s) + "'");
}

std::string_view to_string(TrainStrategy s) {
    switch (s) {
        case TrainStrategy::random: return "random";
        case TrainStrategy::graph: return "graph";
        case TrainStrategy::unknown_first: return "unknown-first";
        case TrainStrategy::interpolate: return "interpolate";
    }
    throw ContractError("bad TrainStrategy value");
}

TrainStrategy train_strategy_from_string(std::string_view s) {
    if (s == "random") return TrainStrategy::random;
    if (s == "graph") return TrainStrategy::graph;
    if (s == "unknown-first") return TrainStrategy::unknown_first;
    if (s == "interpolate") return TrainStrategy::interpolate;
    throw ConfigError("unknown training strategy '" + std::string(s) + "'");
}

void TrainConfig::validate(const ModelConfig& model) const {
    if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
    if (!(lr > 0)) throw ConfigError("train config: lr must be positive");
    if (n_ctx < 0) throw ConfigError("train config: n_ctx must be >= 0");
    if (n_ctx > model.max_ctx_examples)
        throw ConfigError("train config: n_ctx " + std::to_string(n_ctx) +
                          " exceeds the model's max_ctx_examples " +
                          std::to_string(model.max_ctx_examples));
    if (objective == Objective::retrieval) {
        if (batch_size < 2)
            throw ConfigError(
                "train config: the contrastive loss is identically zero on batches of one; "
                "batch_size must be >= 2 for the retrieval objective");
        if (mode != SplitMode::unknown_drug)
            throw ConfigError("train config: the retrieval objective requires unknown-drug mode");
    }
}

nlohmann::json TrainConfig::to_json() const {
    return {{"epochs", epochs},
            {"batch_size", batch_size},
            {"lr", lr},
            {"warmup_steps", warmup_steps},
            {"clip_norm", clip_norm},
            {"strategy", std::string(to_string(strategy))},
            {"n_ctx", n_ctx},
            {"mode", std::string(to_string(mode))},
            {"objective", std::string(to_string(objective))},
            {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    static const char* known[] = {"epochs", "batch_size", "lr",        "warmup_steps", "clip_norm",
                                  "strategy", "n_ctx",    "mode",      "objective",    "seed"};
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw ConfigError("train config: unknown key '" + key + "'");
    }
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    if (j.contains("strategy"))
        c.strategy = train_strategy_from_string(j.at("strategy").get<std::string>());
    c.n_ctx = j.value("n_ctx", c.n_ctx);
    if (j.contains("mode")) c.mode = split_mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("objective"))
        c.objective = objective_from_string(j.at("objective").get<std::string>());
    c.seed = j.value("seed", c.seed);
    return c;
}

namespace {

// Entities of an assembled prompt must never include a held-out id; the
// masking step guarantees this, so a survivor means a wiring bug upstream.
void assert_hygiene(const PromptSequence& prompt, const IdSet& held_out) {
    for (const auto& tok : prompt.tokens) {
        if (tok.slot == Slot::label) continue;
        if (held_out.contains(tok.value))
            throw ContractError("held-out entity id " + std::to_string(tok.value) +
                                " survived prompt assembly");
    }
}

Strategy per_prompt_strategy(TrainStrategy s, size_t epoch, size_t total_epochs, RngStream& rng) {
    switch (s) {
        case TrainStrategy::random: return Strategy::random;
        case TrainStrategy::graph: return Strategy::graph;
        case TrainStrategy::unknown_first: return Strategy::unknown_first;
        case TrainStrategy::interpolate:
            return rng.bernoulli(random_strategy_probability(epoch, total_epochs))
                       ? Strategy::random
                       : Strategy::unknown_first;
    }
    throw ContractError("bad TrainStrategy value");
}

// Where a prompt's prediction for example group g is read in retrieval mode:
// the group's unknown token if it has one, otherwise its cell slot (whose
// target is the zero vector).
int retrieval_read_position(const PromptSequence& prompt, size_t g, uint32_t unknown_value) {
    const int pos = prompt.first_unknown_in_group(g, unknown_value);
    if (pos >= 0) return pos;
    return prompt.query_positions[g];
}

}  // namespace

TrainResult train_model(const ModelConfig& model_cfg, const std::vector<SynergyTuple>& pool,
                        const SplitBundle& split, const EntityVocab& vocab,
                        const TrainConfig& cfg, const DrugEmbeddingBank* bank,
                        std::ostream* history_jsonl) {
    model_cfg.validate();
    cfg.validate(model_cfg);
    if (split.mode != cfg.mode)
        throw ConfigError("train config mode does not match the split's mode");
    if (model_cfg.num_drugs != static_cast<int>(vocab.num_drugs()) ||
        model_cfg.num_cells != static_cast<int>(vocab.num_cells()))
        throw ConfigError("model vocabulary sizes do not match the entity vocab");

    std::vector<int> bank_index;
    if (cfg.objective == Objective::retrieval) {
        if (!bank) throw ConfigError("retrieval training requires a drug embedding bank");
        if (bank->dim() != model_cfg.retrieval_dim)
            throw ConfigError("embedding bank dimension " + std::to_string(bank->dim()) +
                              " does not match the model's retrieval_dim " +
                              std::to_string(model_cfg.retrieval_dim));
        bank_index = bank->index_for_vocab(vocab);
        for (EntityId id : vocab.drug_ids())
            if (bank_index[id] < 0)
                throw ConfigError("embedding bank has no vector for drug " + vocab.name(id));
    }

    const std::vector<SynergyTuple> train_tuples = gather(pool, split.train);
    if (train_tuples.empty()) throw DataError("train split is empty");
    const IdSet held = split.held_out_set();
    const ContextGraph graph(train_tuples);

    const size_t n_train = train_tuples.size();
    const size_t b = static_cast<size_t>(cfg.batch_size);
    size_t steps_per_epoch = (n_train + b - 1) / b;
    // A trailing batch of one is useless to the contrastive loss; skip it.
    const bool drop_trailing = cfg.objective == Objective::retrieval && n_train % b == 1;
    if (drop_trailing) --steps_per_epoch;
    if (steps_per_epoch == 0)
        throw ConfigError("train config: no usable batches (train split too small)");

    const int64_t total_steps = int64_t(cfg.epochs) * int64_t(steps_per_epoch);
    OptimConfig ocfg;
    ocfg.lr = cfg.lr;
    ocfg.clip_norm = cfg.clip_norm;
    ocfg.total_steps = total_steps;
    ocfg.warmup_steps = cfg.warmup_steps < 0 ? total_steps / 20 : cfg.warmup_steps;
    if (ocfg.warmup_steps >= total_steps)
        throw ConfigError("train config: warmup_steps must stay below total steps (" +
                          std::to_string(total_steps) + ")");

    TrainResult out{TransformerF::random_init(model_cfg, derive_seed(cfg.seed, "train.model")),
                    {}};
    TransformerF& model = out.model;
    AdamOptimizer<float> opt(ocfg);
    ParamSet<float> grads = model.params().zeros_like();

    Cache<float> cache;
    std::vector<PromptSequence> prompts;
    std::vector<std::vector<uint8_t>> labels;
    std::vector<EntityId> masked;
    std::vector<PromptGrads<float>> gin;
    int64_t global_step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<uint32_t> order(n_train);
        for (size_t i = 0; i < n_train; ++i) order[i] = static_cast<uint32_t>(i);
        RngStream order_rng(derive_seed(cfg.seed, "train.order", uint64_t(epoch)));
        order_rng.shuffle(order);
        RngStream rng(derive_seed(cfg.seed, "train.sample", uint64_t(epoch)));

        for (size_t start = 0; start < n_train; start += b) {
            const size_t bsz = std::min(b, n_train - start);
            if (cfg.objective == Objective::retrieval && bsz < 2) break;

            prompts.clear();
            labels.clear();
            masked.clear();
            for (size_t k = 0; k < bsz; ++k) {
                const SynergyTuple& q = train_tuples[order[start + k]];
                const EntityId h = training_mask_choice(q, cfg.mode, rng);
                const Strategy strat =
                    per_prompt_strategy(cfg.strategy, size_t(epoch), size_t(cfg.epochs), rng);
                const std::vector<uint32_t> ctx_idx = select_context_indices(
                    graph, q, h, static_cast<size_t>(cfg.n_ctx), strat, rng);
                std::vector<SynergyTuple> context;
                context.reserve(ctx_idx.size());
                std::vector<uint8_t> lab;
                for (uint32_t ci : ctx_idx) {
                    context.push_back(train_tuples[ci]);
                    lab.push_back(train_tuples[ci].label);
                }
                lab.push_back(q.label);
                PromptSequence prompt = mask_and_assemble(context, q, MaskSpec{h, IdSet({h})},
                                                          vocab);
                assert_hygiene(prompt, held);
                prompts.push_back(std::move(prompt));
                labels.push_back(std::move(lab));
                masked.push_back(h);
            }

            auto fwd = model.forward_batch(prompts, &cache);

            double batch_loss = 0.0;
            float tau_grad = 0.0f;
            gin.assign(bsz, {});
            if (cfg.objective == Objective::synergy) {
                const float inv_b = 1.0f / float(bsz);
                for (size_t p = 0; p < bsz; ++p) {
                    auto sl = synergy_prefix_loss<float>(fwd.cell_logits[p], labels[p]);
                    batch_loss += double(sl.value) / double(bsz);
                    for (float& g : sl.d_logits) g *= inv_b;
                    gin[p].d_cell_logits = std::move(sl.d_logits);
                }
            } else {
                // One contrastive term per prefix: predictions are read at
                // each group's unknown (or cell) slot across the batch, the
                // targets are the masked drugs' bank rows (zero where the
                // group hides nothing), and terms ramp with i/k.
                const size_t n_groups = prompts[0].query_positions.size();
                for (size_t p = 0; p < bsz; ++p) {
                    if (prompts[p].query_positions.size() != n_groups)
                        throw ContractError("retrieval training needs uniform context lengths");
                    gin[p].d_retrieval =
                        MatX<float>::Zero(prompts[p].length(), model_cfg.retrieval_dim);
                }
                const size_t k = prompts[0].n_ctx();
                const float inv_terms = 1.0f / float(n_groups);
                const uint32_t unk = vocab.unknown_id();
                MatX<float> pred(bsz, model_cfg.retrieval_dim);
                MatX<float> targets(bsz, model_cfg.retrieval_dim);
                for (size_t g = 0; g < n_groups; ++g) {
                    std::vector<int> read_pos(bsz);
                    for (size_t p = 0; p < bsz; ++p) {
                        read_pos[p] = retrieval_read_position(prompts[p], g, unk);
                        pred.row(p) = fwd.retrieval[p].row(read_pos[p]);
                        if (prompts[p].first_unknown_in_group(g, unk) >= 0)
                            targets.row(p) = bank->vector_for(vocab.name(masked[p]))
                                                 .cast<float>()
                                                 .transpose();
                        else
                            targets.row(p).setZero();
                    }
                    const float w = prefix_weight<float>(g, k);
                    auto cl = clip_contrastive_loss<float>(pred, targets,
                                                           model.params().at("tau")(0, 0));
                    const float scale = w * inv_terms;
                    batch_loss += double(scale) * double(cl.value);
                    tau_grad += scale * cl.d_tau;
                    for (size_t p = 0; p < bsz; ++p)
                        gin[p].d_retrieval.row(read_pos[p]) += scale * cl.d_pred.row(p);
                }
            }

            if (!std::isfinite(batch_loss))
                throw TrainDivergedError("loss became non-finite at epoch " +
                                         std::to_string(epoch) + ", step " +
                                         std::to_string(global_step));

            grads.set_zero();
            model.backward_batch(prompts, cache, gin, grads);
            if (cfg.objective == Objective::retrieval) grads.at("tau")(0, 0) += tau_grad;

            const double lr_now = ocfg.lr_at(global_step);
            opt.step(model.params(), grads);

            out.history.push_back({epoch, global_step, batch_loss, lr_now});
            if (history_jsonl) {
                nlohmann::json line{{"epoch", epoch},
                                    {"step", global_step},
                                    {"loss", batch_loss},
                                    {"lr", lr_now}};
                (*history_jsonl) << line.dump() << "\n";
            }
            ++global_step;
        }
    }
    return out;
}

std::vector<double> ModelScorer::score_batch(const std::vector<PromptSequence>& prompts,
                                             const std::vector<SynergyTuple>&) {
    BatchOutput<float> out = model_->forward_batch(prompts, nullptr);
    std::vector<double> scores;
    scores.reserve(prompts.size());
    for (size_t p = 0; p < prompts.size(); ++p)
        scores.push_back(stable_sigmoid(double(out.cell_logits[p].back())));
    return scores;
}

OracleScorer::OracleScorer(const LatentWorld& world, const EntityVocab& vocab)
    : world_(&world), widx_(world_index_of(world, vocab)) {}

std::vector<double> OracleScorer::score_batch(const std::vector<PromptSequence>&,
                                              const std::vector<SynergyTuple>& queries) {
    std::vector<double> scores;
    scores.reserve(queries.size());
    for (const auto& q : queries) {
        const int ia = widx_[q.drug_a], ib = widx_[q.drug_b], ic = widx_[q.cell];
        if (ia < 0 || ib < 0 || ic < 0)
            throw DataError("oracle scorer: query entity missing from the latent world");
        scores.push_back(stable_sigmoid(synergy_score(*world_, ia, ib, ic) - world_->threshold));
    }
    return scores;
}

EntityId designated_unknown(const SynergyTuple& t, const IdSet& held_out) {
    if (held_out.contains(t.drug_a)) return t.drug_a;
    if (held_out.contains(t.drug_b)) return t.drug_b;
    if (held_out.contains(t.cell)) return t.cell;
    throw ContractError("tuple mentions no held-out entity");
}

namespace {

std::vector<double> score_all(PromptScorer& scorer, const std::vector<PromptSequence>& prompts,
                              const std::vector<SynergyTuple>& queries, size_t batch_size) {
    std::vector<double> scores;
    scores.reserve(prompts.size());
    for (size_t start = 0; start < prompts.size(); start += batch_size) {
        const size_t n = std::min(batch_size, prompts.size() - start);
        const std::vector<PromptSequence> bp(prompts.begin() + start,
                                             prompts.begin() + start + n);
        const std::vector<SynergyTuple> bq(queries.begin() + start, queries.begin() + start + n);
        const std::vector<double> s = scorer.score_batch(bp, bq);
        if (s.size() != n) throw ContractError("scorer returned a wrong-sized batch");
        scores.insert(scores.end(), s.begin(), s.end());
    }
    return scores;
}

EvalReport finish_report(const std::vector<double>& scores, const std::vector<uint8_t>& labels,
                         const std::vector<SynergyTuple>& queries, double threshold) {
    EvalReport rep;
    rep.overall = compute_metrics(scores, labels, threshold);
    std::map<std::string, std::vector<size_t>> by_group;
    for (size_t i = 0; i < queries.size(); ++i) by_group[queries[i].group].push_back(i);
    for (const auto& [name, idx] : by_group) {
        GroupReport gr;
        gr.n = idx.size();
        std::vector<double> s;
        std::vector<uint8_t> l;
        for (size_t i : idx) {
            s.push_back(scores[i]);
            l.push_back(labels[i]);
            gr.positives += labels[i] ? 1 : 0;
        }
        if (gr.positives > 0 && gr.positives < gr.n)
            gr.metrics = compute_metrics(s, l, threshold);
        rep.per_group.emplace(name, std::move(gr));
    }
    return rep;
}

}  // namespace

EvalReport evaluate_split(PromptScorer& scorer, const std::vector<SynergyTuple>& pool,
                          const SplitBundle& split, const EntityVocab& vocab,
                          const EvalOptions& opts) {
    if (opts.n_ctx < 0) throw ConfigError("eval options: n_ctx must be >= 0");
    if (opts.batch_size < 1) throw ConfigError("eval options: batch_size must be >= 1");
    const auto& part_idx = opts.part == SplitPart::test ? split.test : split.validation;
    if (part_idx.empty()) throw ContractError("evaluation split part is empty");
    const std::vector<SynergyTuple> queries = gather(pool, part_idx);
    const IdSet held = split.held_out_set();

    std::vector<SynergyTuple> bank_tuples;
    std::optional<ContextGraph> graph;
    if (opts.n_ctx > 0) {
        bank_tuples = gather(pool, split.context_bank);
        if (bank_tuples.empty())
            throw ContractError("context bank is empty but n_ctx > 0 was requested");
        graph.emplace(bank_tuples);
    }

    std::vector<PromptSequence> prompts;
    std::vector<uint8_t> labels;
    prompts.reserve(queries.size());
    labels.reserve(queries.size());
    for (const auto& q : queries) {
        const EntityId h = designated_unknown(q, held);
        std::vector<SynergyTuple> context;
        if (opts.n_ctx > 0) {
            // Seeded by tuple content, so reordering the test set cannot
            // change any prompt.
            RngStream rng(derive_seed(opts.seed, "eval.ctx", content_hash(q)));
            for (uint32_t ci : select_context_indices(*graph, q, h, size_t(opts.n_ctx),
                                                      opts.strategy, rng))
                context.push_back(bank_tuples[ci]);
        }
        PromptSequence prompt = mask_and_assemble(context, q, MaskSpec{h, held}, vocab);
        assert_hygiene(prompt, held);
        prompts.push_back(std::move(prompt));
        labels.push_back(q.label);
    }

    const std::vector<double> scores =
        score_all(scorer, prompts, queries, size_t(opts.batch_size));
    return finish_report(scores, labels, queries, opts.threshold);
}

nlohmann::json context_assignment_to_json(const ContextAssignment& a) {
    nlohmann::json contexts = nlohmann::json::object();
    for (const auto& [h, idx] : a) contexts[std::to_string(h)] = idx;
    return {{"contexts", std::move(contexts)}};
}

ContextAssignment context_assignment_from_json(const nlohmann::json& j) {
    ContextAssignment a;
    for (const auto& [key, value] : j.at("contexts").items()) {
        size_t pos = 0;
        const unsigned long id = std::stoul(key, &pos);
        if (pos != key.size()) throw DataError("context assignment: bad entity id '" + key + "'");
        a[static_cast<EntityId>(id)] = value.get<std::vector<uint32_t>>();
    }
    return a;
}

EvalReport evaluate_with_contexts(PromptScorer& scorer, const std::vector<SynergyTuple>& pool,
                                  const SplitBundle& split, const EntityVocab& vocab,
                                  const ContextAssignment& contexts, SplitPart part,
                                  double threshold, int n_ctx) {
    const auto& part_idx = part == SplitPart::test ? split.test : split.validation;
    if (part_idx.empty()) throw ContractError("evaluation split part is empty");
    const std::vector<SynergyTuple> queries = gather(pool, part_idx);
    const IdSet held = split.held_out_set();
    const std::unordered_set<uint32_t> bank_set(split.context_bank.begin(),
                                                split.context_bank.end());

    std::vector<PromptSequence> prompts;
    std::vector<uint8_t> labels;
    prompts.reserve(queries.size());
    labels.reserve(queries.size());
    for (const auto& q : queries) {
        const EntityId h = designated_unknown(q, held);
        const auto it = contexts.find(h);
        if (it == contexts.end())
            throw ConfigError("no assigned context for entity id " + std::to_string(h));
        const size_t limit =
            n_ctx < 0 ? it->second.size() : std::min(size_t(n_ctx), it->second.size());
        std::vector<SynergyTuple> context;
        context.reserve(limit);
        for (size_t i = 0; i < limit; ++i) {
            const uint32_t pi = it->second[i];
            if (!bank_set.count(pi))
                throw ConfigError("assigned context index " + std::to_string(pi) +
                                  " is not in the context bank");
            context.push_back(pool[pi]);
        }
        PromptSequence prompt = mask_and_assemble(context, q, MaskSpec{h, held}, vocab);
        assert_hygiene(prompt, held);
        prompts.push_back(std::move(prompt));
        labels.push_back(q.label);
    }

    const std::vector<double> scores = score_all(scorer, prompts, queries, 64);
    return finish_report(scores, labels, queries, threshold);
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json groups = nlohmann::json::object();
    for (const auto& [name, gr] : per_group) {
        nlohmann::json g{{"n", gr.n}, {"positives", gr.positives}};
        g["metrics"] = gr.metrics ? gr.metrics->to_json() : nlohmann::json(nullptr);
        groups[name] = std::move(g);
    }
    return {{"overall", overall.to_json()}, {"per_group", std::move(groups)}};
}

}  // namespace synic
