#pragma once

#include <vector>

#include <nlohmann/json.hpp>

#include "synic/prompt.hpp"
#include "synic/tensor.hpp"

namespace synic {

struct ModelConfig {
    int d_model = 64;
    int n_layers = 4;
    int n_heads = 4;
    int max_ctx_examples = 20;
    int num_drugs = 0;
    int num_cells = 0;
    int retrieval_dim = 8;

    // Entity tokens: real entities then the two reserved unknown ids.
    int entity_token_count() const { return num_drugs + num_cells + 2; }
    // Full token space adds the two label tokens.
    int vocab_token_count() const { return entity_token_count() + 2; }
    int max_seq_len() const { return 4 * max_ctx_examples + 3; }
    int head_dim() const { return d_model / n_heads; }
    int mlp_dim() const { return 4 * d_model; }

    void validate() const;
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
    bool operator==(const ModelConfig&) const = default;
};

template <typename S>
struct ForwardOutput {
    // One scalar logit per cell-slot position (context cells and the query).
    std::vector<S> cell_logits;
    // Retrieval head output at every position (length x retrieval_dim);
    // callers slice the positions they need.
    MatX<S> retrieval;
};

template <typename S>
struct BatchOutput {
    std::vector<std::vector<S>> cell_logits;  // [prompt][group]
    std::vector<MatX<S>> retrieval;           // [prompt] (length x retrieval_dim)
};

// Upstream gradients for one prompt. d_cell_logits may be empty (treated as
// zeros) and d_retrieval may be 0x0 when the retrieval head is unused.
template <typename S>
struct PromptGrads {
    std::vector<S> d_cell_logits;
    MatX<S> d_retrieval;
};

// Saved activations from a cached forward pass, consumed by backward.
template <typename S>
struct Cache {
    struct Layer {
        MatX<S> x_in, xhat1, qkv, attn_concat, x_mid, xhat2, h1, gelu;
        VecX<S> rstd1, rstd2;
        std::vector<std::vector<MatX<S>>> probs;  // [prompt][head]
    };
    std::vector<int> offsets;  // per-prompt row offsets; back() = total rows
    MatX<S> x0;
    std::vector<Layer> layers;
    MatX<S> x_final, xhatf;
    VecX<S> rstdf;
};

// Decoder-only transformer over tuple-token prompts: learned token + absolute
// position embeddings, pre-norm blocks (causal self-attention, GELU MLP),
// final layer norm, then two readouts — a scalar synergy logit and a
// retrieval vector, both affine maps from the last hidden state.
template <typename S>
class Transformer {
  public:
    Transformer(ModelConfig config, ParamSet<S> params);

    static ParamSet<S> init_params(const ModelConfig& config, uint64_t seed);
    static Transformer random_init(const ModelConfig& config, uint64_t seed);

    const ModelConfig& config() const { return config_; }
    const ParamSet<S>& params() const { return params_; }
    ParamSet<S>& params() { return params_; }

    ForwardOutput<S> forward(const PromptSequence& prompt) const;

    // Prompts may differ in length; activations are row-concatenated so the
    // large projections run as single matrix products. Pass a cache to keep
    // what backward needs.
    BatchOutput<S> forward_batch(const std::vector<PromptSequence>& prompts,
                                 Cache<S>* cache) const;

    // Accumulates parameter gradients (+=) for the batch that produced
    // `cache`. The learnable temperature `tau` is untouched here; losses that
    // use it contribute its gradient directly.
    void backward_batch(const std::vector<PromptSequence>& prompts, const Cache<S>& cache,
                        const std::vector<PromptGrads<S>>& grads_in, ParamSet<S>& grads) const;

  private:
    int token_index(const PromptToken& tok) const;

    ModelConfig config_;
    ParamSet<S> params_;
};

using TransformerF = Transformer<float>;
using TransformerD = Transformer<double>;

}  // namespace synic
