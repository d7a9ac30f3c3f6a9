#include "synic/model.hpp"

#include <cmath>

#include "synic/rng.hpp"

namespace synic {

void ModelConfig::validate() const {
    if (d_model < 1 || n_layers < 1 || n_heads < 1 || retrieval_dim < 1)
        throw ConfigError("model config: dimensions and counts must be positive");
    if (d_model % n_heads != 0)
        throw ConfigError("model config: d_model must be divisible by n_heads");
    if (max_ctx_examples < 0) throw ConfigError("model config: max_ctx_examples must be >= 0");
    if (num_drugs < 1 || num_cells < 1)
        throw ConfigError("model config: vocabulary counts must be positive");
}

nlohmann::json ModelConfig::to_json() const {
    return {{"d_model", d_model},
            {"n_layers", n_layers},
            {"n_heads", n_heads},
            {"max_ctx_examples", max_ctx_examples},
            {"num_drugs", num_drugs},
            {"num_cells", num_cells},
            {"retrieval_dim", retrieval_dim}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    static const char* known[] = {"d_model",   "n_layers",  "n_heads",      "max_ctx_examples",
                                  "num_drugs", "num_cells", "retrieval_dim"};
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw ConfigError("model config: unknown key '" + key + "'");
    }
    ModelConfig c;
    c.d_model = j.value("d_model", c.d_model);
    c.n_layers = j.value("n_layers", c.n_layers);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.max_ctx_examples = j.value("max_ctx_examples", c.max_ctx_examples);
    c.num_drugs = j.value("num_drugs", c.num_drugs);
    c.num_cells = j.value("num_cells", c.num_cells);
    c.retrieval_dim = j.value("retrieval_dim", c.retrieval_dim);
    return c;
}

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

template <typename S>
S gelu_value(S x) {
    return S(0.5) * x * (S(1) + std::erf(x * S(kInvSqrt2)));
}

template <typename S>
S gelu_slope(S x) {
    return S(0.5) * (S(1) + std::erf(x * S(kInvSqrt2))) +
           x * S(kInvSqrt2Pi) * std::exp(S(-0.5) * x * x);
}

// y = xhat .* g + b row-wise, with xhat = (x - mean) * rstd per row.
template <typename S>
void layernorm_fwd(const MatX<S>& x, const MatX<S>& g, const MatX<S>& b, MatX<S>& xhat,
                   VecX<S>& rstd, MatX<S>& out) {
    const VecX<S> mu = x.rowwise().mean();
    xhat = x;
    xhat.colwise() -= mu;
    const VecX<S> var = xhat.rowwise().squaredNorm() / S(x.cols());
    rstd = (var.array() + S(kLnEps)).rsqrt().matrix();
    xhat = (xhat.array().colwise() * rstd.array()).matrix();
    out = (xhat.array().rowwise() * g.row(0).array()).matrix();
    out.rowwise() += b.row(0);
}

// Given d(out), accumulates dg/db and returns dx.
template <typename S>
MatX<S> layernorm_bwd(const MatX<S>& dout, const MatX<S>& xhat, const VecX<S>& rstd,
                      const MatX<S>& g, MatX<S>& dg, MatX<S>& db) {
    dg.row(0) += (dout.array() * xhat.array()).colwise().sum().matrix();
    db.row(0) += dout.colwise().sum();
    MatX<S> dxhat = (dout.array().rowwise() * g.row(0).array()).matrix();
    const VecX<S> m1 = dxhat.rowwise().mean();
    const VecX<S> m2 = (dxhat.array() * xhat.array()).rowwise().mean();
    dxhat.colwise() -= m1;
    dxhat -= (xhat.array().colwise() * m2.array()).matrix();
    return (dxhat.array().colwise() * rstd.array()).matrix();
}

}  // namespace

template <typename S>
Transformer<S>::Transformer(ModelConfig config, ParamSet<S> params)
    : config_(config), params_(std::move(params)) {
    config_.validate();
    params_.check_same_shape(init_params(config_, 0));
}

template <typename S>
ParamSet<S> Transformer<S>::init_params(const ModelConfig& config, uint64_t seed) {
    config.validate();
    RngStream rng(derive_seed(seed, "model.init"));
    ParamSet<S> p;
    auto gaussian = [&](std::string name, Eigen::Index r, Eigen::Index c) {
        auto& m = p.add(std::move(name), r, c);
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = S(rng.normal(0.0, 0.02));
    };
    auto zeros = [&](std::string name, Eigen::Index r, Eigen::Index c) {
        p.add(std::move(name), r, c);
    };
    auto ones = [&](std::string name, Eigen::Index c) {
        p.add(std::move(name), 1, c).setOnes();
    };

    const int d = config.d_model, f = config.mlp_dim();
    gaussian("tok_emb", config.vocab_token_count(), d);
    gaussian("pos_emb", config.max_seq_len(), d);
    for (int l = 0; l < config.n_layers; ++l) {
        const std::string L = "L" + std::to_string(l) + ".";
        ones(L + "ln1.g", d);
        zeros(L + "ln1.b", 1, d);
        gaussian(L + "attn.wqkv", d, 3 * d);
        zeros(L + "attn.bqkv", 1, 3 * d);
        gaussian(L + "attn.wo", d, d);
        zeros(L + "attn.bo", 1, d);
        ones(L + "ln2.g", d);
        zeros(L + "ln2.b", 1, d);
        gaussian(L + "mlp.w1", d, f);
        zeros(L + "mlp.b1", 1, f);
        gaussian(L + "mlp.w2", f, d);
        zeros(L + "mlp.b2", 1, d);
    }
    ones("lnf.g", d);
    zeros("lnf.b", 1, d);
    gaussian("head.syn.w", d, 1);
    zeros("head.syn.b", 1, 1);
    gaussian("head.ret.w", d, config.retrieval_dim);
    zeros("head.ret.b", 1, config.retrieval_dim);
    p.add("tau", 1, 1)(0, 0) = S(std::log(1.0 / 0.07));
    return p;
}

template <typename S>
Transformer<S> Transformer<S>::random_init(const ModelConfig& config, uint64_t seed) {
    return Transformer<S>(config, init_params(config, seed));
}

template <typename S>
int Transformer<S>::token_index(const PromptToken& tok) const {
    if (tok.slot == Slot::label) {
        if (tok.value > 1) throw DataError("model: label token value must be 0 or 1");
        return config_.entity_token_count() + static_cast<int>(tok.value);
    }
    if (tok.value >= static_cast<uint32_t>(config_.entity_token_count()))
        throw DataError("model: entity id " + std::to_string(tok.value) +
                        " outside the model's vocabulary");
    return static_cast<int>(tok.value);
}

template <typename S>
BatchOutput<S> Transformer<S>::forward_batch(const std::vector<PromptSequence>& prompts,
                                             Cache<S>* cache) const {
    if (prompts.empty()) throw ContractError("forward_batch: empty prompt batch");
    thread_local Cache<S> scratch;
    Cache<S>& c = cache ? *cache : scratch;

    const int d = config_.d_model, heads = config_.n_heads, hd = config_.head_dim();
    const S inv_sqrt_hd = S(1.0 / std::sqrt(double(hd)));

    c.offsets.assign(1, 0);
    for (const auto& p : prompts) {
        if (p.length() > config_.max_seq_len())
            throw ContractError("forward_batch: prompt longer than the model's maximum");
        if (p.length() == 0) throw ContractError("forward_batch: empty prompt");
        c.offsets.push_back(c.offsets.back() + p.length());
    }
    const int total = c.offsets.back();

    // Token + position embeddings.
    c.x0.resize(total, d);
    const MatX<S>& tok_emb = params_.at("tok_emb");
    const MatX<S>& pos_emb = params_.at("pos_emb");
    for (size_t p = 0; p < prompts.size(); ++p) {
        const int off = c.offsets[p];
        const auto& toks = prompts[p].tokens;
        for (size_t t = 0; t < toks.size(); ++t)
            c.x0.row(off + int(t)) = tok_emb.row(token_index(toks[t])) + pos_emb.row(int(t));
    }

    c.layers.resize(config_.n_layers);
    MatX<S> x = c.x0;
    MatX<S> ln_out(total, d);
    for (int l = 0; l < config_.n_layers; ++l) {
        auto& cl = c.layers[l];
        const std::string L = "L" + std::to_string(l) + ".";
        cl.x_in = x;

        layernorm_fwd<S>(x, params_.at(L + "ln1.g"), params_.at(L + "ln1.b"), cl.xhat1, cl.rstd1,
                         ln_out);
        cl.qkv.noalias() = ln_out * params_.at(L + "attn.wqkv");
        cl.qkv.rowwise() += params_.at(L + "attn.bqkv").row(0);

        cl.attn_concat.resize(total, d);
        cl.probs.assign(prompts.size(), {});
        for (size_t p = 0; p < prompts.size(); ++p) {
            const int off = c.offsets[p];
            const int tp = prompts[p].length();
            cl.probs[p].resize(heads);
            for (int h = 0; h < heads; ++h) {
                const auto q = cl.qkv.block(off, h * hd, tp, hd);
                const auto k = cl.qkv.block(off, d + h * hd, tp, hd);
                const auto v = cl.qkv.block(off, 2 * d + h * hd, tp, hd);
                MatX<S>& prob = cl.probs[p][h];
                prob.noalias() = q * k.transpose();
                prob *= inv_sqrt_hd;
                // Causal softmax: row r attends to columns 0..r only.
                for (int r = 0; r < tp; ++r) {
                    auto row = prob.row(r).segment(0, r + 1);
                    const S m = row.maxCoeff();
                    row.array() = (row.array() - m).exp();
                    row /= row.sum();
                    if (r + 1 < tp) prob.row(r).segment(r + 1, tp - r - 1).setZero();
                }
                cl.attn_concat.block(off, h * hd, tp, hd).noalias() = prob * v;
            }
        }

        x.noalias() += cl.attn_concat * params_.at(L + "attn.wo");
        x.rowwise() += params_.at(L + "attn.bo").row(0);
        cl.x_mid = x;

        layernorm_fwd<S>(x, params_.at(L + "ln2.g"), params_.at(L + "ln2.b"), cl.xhat2, cl.rstd2,
                         ln_out);
        cl.h1.noalias() = ln_out * params_.at(L + "mlp.w1");
        cl.h1.rowwise() += params_.at(L + "mlp.b1").row(0);
        cl.gelu = cl.h1.unaryExpr([](S v) { return gelu_value(v); });
        x.noalias() += cl.gelu * params_.at(L + "mlp.w2");
        x.rowwise() += params_.at(L + "mlp.b2").row(0);
    }

    c.x_final = x;
    MatX<S> xf(total, d);
    layernorm_fwd<S>(c.x_final, params_.at("lnf.g"), params_.at("lnf.b"), c.xhatf, c.rstdf, xf);

    VecX<S> logits_all = xf * params_.at("head.syn.w");
    logits_all.array() += params_.at("head.syn.b")(0, 0);
    MatX<S> ret_all = xf * params_.at("head.ret.w");
    ret_all.rowwise() += params_.at("head.ret.b").row(0);

    BatchOutput<S> out;
    out.cell_logits.resize(prompts.size());
    out.retrieval.resize(prompts.size());
    for (size_t p = 0; p < prompts.size(); ++p) {
        const int off = c.offsets[p];
        for (int pos : prompts[p].query_positions) out.cell_logits[p].push_back(logits_all[off + pos]);
        out.retrieval[p] = ret_all.block(off, 0, prompts[p].length(), config_.retrieval_dim);
    }
    return out;
}

template <typename S>
ForwardOutput<S> Transformer<S>::forward(const PromptSequence& prompt) const {
    BatchOutput<S> b = forward_batch({prompt}, nullptr);
    return {std::move(b.cell_logits[0]), std::move(b.retrieval[0])};
}

template <typename S>
void Transformer<S>::backward_batch(const std::vector<PromptSequence>& prompts,
                                    const Cache<S>& c, const std::vector<PromptGrads<S>>& grads_in,
                                    ParamSet<S>& grads) const {
    if (prompts.size() != grads_in.size() || c.offsets.size() != prompts.size() + 1)
        throw ContractError("backward_batch: batch size mismatch with cache or gradients");
    grads.check_same_shape(params_);

    const int d = config_.d_model, heads = config_.n_heads, hd = config_.head_dim();
    const int r_dim = config_.retrieval_dim;
    const int total = c.offsets.back();
    const S inv_sqrt_hd = S(1.0 / std::sqrt(double(hd)));

    // Head gradients, assembled over all positions at once.
    VecX<S> d_logits = VecX<S>::Zero(total);
    MatX<S> d_ret;
    bool have_ret = false;
    for (size_t p = 0; p < prompts.size(); ++p) {
        const auto& gi = grads_in[p];
        if (!gi.d_cell_logits.empty() &&
            gi.d_cell_logits.size() != prompts[p].query_positions.size())
            throw ContractError("backward_batch: d_cell_logits length mismatch");
        for (size_t g = 0; g < gi.d_cell_logits.size(); ++g)
            d_logits[c.offsets[p] + prompts[p].query_positions[g]] = gi.d_cell_logits[g];
        if (gi.d_retrieval.size() > 0) {
            if (gi.d_retrieval.rows() != prompts[p].length() || gi.d_retrieval.cols() != r_dim)
                throw ContractError("backward_batch: d_retrieval shape mismatch");
            if (!have_ret) {
                d_ret = MatX<S>::Zero(total, r_dim);
                have_ret = true;
            }
            d_ret.block(c.offsets[p], 0, prompts[p].length(), r_dim) = gi.d_retrieval;
        }
    }

    // Rebuild the final hidden state from the cached normalized form.
    MatX<S> xf = (c.xhatf.array().rowwise() * params_.at("lnf.g").row(0).array()).matrix();
    xf.rowwise() += params_.at("lnf.b").row(0);

    grads.at("head.syn.w").noalias() += xf.transpose() * d_logits;
    grads.at("head.syn.b")(0, 0) += d_logits.sum();
    MatX<S> dxf = d_logits * params_.at("head.syn.w").transpose();
    if (have_ret) {
        grads.at("head.ret.w").noalias() += xf.transpose() * d_ret;
        grads.at("head.ret.b").row(0) += d_ret.colwise().sum();
        dxf.noalias() += d_ret * params_.at("head.ret.w").transpose();
    }

    MatX<S> dx = layernorm_bwd<S>(dxf, c.xhatf, c.rstdf, params_.at("lnf.g"), grads.at("lnf.g"),
                                  grads.at("lnf.b"));

    MatX<S> dqkv(total, 3 * d);
    for (int l = config_.n_layers - 1; l >= 0; --l) {
        const auto& cl = c.layers[l];
        const std::string L = "L" + std::to_string(l) + ".";

        // MLP branch: x_out = x_mid + gelu(h1) * w2 + b2.
        grads.at(L + "mlp.w2").noalias() += cl.gelu.transpose() * dx;
        grads.at(L + "mlp.b2").row(0) += dx.colwise().sum();
        MatX<S> dh1 = dx * params_.at(L + "mlp.w2").transpose();
        dh1.array() *= cl.h1.unaryExpr([](S v) { return gelu_slope(v); }).array();
        // Input to the MLP is the ln2 output, rebuilt from its cached parts.
        MatX<S> ln2_out =
            (cl.xhat2.array().rowwise() * params_.at(L + "ln2.g").row(0).array()).matrix();
        ln2_out.rowwise() += params_.at(L + "ln2.b").row(0);
        grads.at(L + "mlp.w1").noalias() += ln2_out.transpose() * dh1;
        grads.at(L + "mlp.b1").row(0) += dh1.colwise().sum();
        const MatX<S> dln2 = dh1 * params_.at(L + "mlp.w1").transpose();
        dx += layernorm_bwd<S>(dln2, cl.xhat2, cl.rstd2, params_.at(L + "ln2.g"),
                               grads.at(L + "ln2.g"), grads.at(L + "ln2.b"));

        // Attention branch: x_mid = x_in + attn_concat * wo + bo.
        grads.at(L + "attn.wo").noalias() += cl.attn_concat.transpose() * dx;
        grads.at(L + "attn.bo").row(0) += dx.colwise().sum();
        const MatX<S> d_concat = dx * params_.at(L + "attn.wo").transpose();

        dqkv.setZero();
        for (size_t p = 0; p < prompts.size(); ++p) {
            const int off = c.offsets[p];
            const int tp = prompts[p].length();
            for (int h = 0; h < heads; ++h) {
                const auto q = cl.qkv.block(off, h * hd, tp, hd);
                const auto k = cl.qkv.block(off, d + h * hd, tp, hd);
                const auto v = cl.qkv.block(off, 2 * d + h * hd, tp, hd);
                const MatX<S>& prob = cl.probs[p][h];
                const auto dO = d_concat.block(off, h * hd, tp, hd);

                MatX<S> dprob = dO * v.transpose();
                dqkv.block(off, 2 * d + h * hd, tp, hd).noalias() = prob.transpose() * dO;

                // Softmax backward; masked entries have prob = 0 and drop out.
                dprob.array() *= prob.array();
                const VecX<S> row_sums = dprob.rowwise().sum();
                dprob -= (prob.array().colwise() * row_sums.array()).matrix();

                dqkv.block(off, h * hd, tp, hd).noalias() = (dprob * k) * inv_sqrt_hd;
                dqkv.block(off, d + h * hd, tp, hd).noalias() =
                    (dprob.transpose() * q) * inv_sqrt_hd;
            }
        }

        MatX<S> ln1_out =
            (cl.xhat1.array().rowwise() * params_.at(L + "ln1.g").row(0).array()).matrix();
        ln1_out.rowwise() += params_.at(L + "ln1.b").row(0);
        grads.at(L + "attn.wqkv").noalias() += ln1_out.transpose() * dqkv;
        grads.at(L + "attn.bqkv").row(0) += dqkv.colwise().sum();
        const MatX<S> dln1 = dqkv * params_.at(L + "attn.wqkv").transpose();
        dx += layernorm_bwd<S>(dln1, cl.xhat1, cl.rstd1, params_.at(L + "ln1.g"),
                               grads.at(L + "ln1.g"), grads.at(L + "ln1.b"));
    }

    // Embedding gradients.
    MatX<S>& d_tok = grads.at("tok_emb");
    MatX<S>& d_pos = grads.at("pos_emb");
    for (size_t p = 0; p < prompts.size(); ++p) {
        const int off = c.offsets[p];
        const auto& toks = prompts[p].tokens;
        for (size_t t = 0; t < toks.size(); ++t) {
            d_tok.row(token_index(toks[t])) += dx.row(off + int(t));
            d_pos.row(int(t)) += dx.row(off + int(t));
        }
    }
}

template class Transformer<float>;
template class Transformer<double>;

}  // namespace synic
