#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "synic/tensor.hpp"

namespace synic {

template <typename S>
S stable_sigmoid(S z) {
    if (z >= S(0)) return S(1) / (S(1) + std::exp(-z));
    const S e = std::exp(z);
    return e / (S(1) + e);
}

// Binary cross-entropy on a raw logit, computed in a saturation-safe form.
template <typename S>
S bce_with_logit(S z, S y) {
    return std::max(z, S(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
}

// Weight of prefix i when weights ramp linearly with context count: i/k.
// A zero-context-only prompt (k = 0) keeps its single term at full weight.
template <typename S>
S prefix_weight(size_t i, size_t k) {
    if (k == 0) return S(1);
    return S(double(i) / double(k));
}

template <typename S>
struct SynergyLossResult {
    S value = S(0);
    std::vector<S> d_logits;
};

// Prefix-averaged classification loss: (1/(n+1)) * sum_i w_i * BCE(z_i, y_i),
// one term per prediction position (context cells and the query, in order).
// Empty `weights` means uniform weight 1.
template <typename S>
SynergyLossResult<S> synergy_prefix_loss(std::span<const S> logits,
                                         std::span<const uint8_t> labels,
                                         std::span<const S> weights = {}) {
    if (logits.empty()) throw ContractError("synergy_prefix_loss: no prediction positions");
    if (labels.size() != logits.size())
        throw ContractError("synergy_prefix_loss: labels/logits length mismatch");
    if (!weights.empty() && weights.size() != logits.size())
        throw ContractError("synergy_prefix_loss: weights/logits length mismatch");
    SynergyLossResult<S> out;
    out.d_logits.resize(logits.size());
    const S inv = S(1) / S(double(logits.size()));
    for (size_t i = 0; i < logits.size(); ++i) {
        const S w = weights.empty() ? S(1) : weights[i];
        const S y = labels[i] ? S(1) : S(0);
        out.value += inv * w * bce_with_logit(logits[i], y);
        out.d_logits[i] = inv * w * (stable_sigmoid(logits[i]) - y);
    }
    return out;
}

template <typename S>
struct ClipLossResult {
    S value = S(0);
    MatX<S> d_pred;  // gradient w.r.t. the raw (pre-normalization) predictions
    S d_tau = S(0);
};

// Symmetric batch contrastive loss between predicted and ground-truth
// embedding batches: cross-entropy along both axes of the scaled similarity
// matrix, diagonal as the true class. Prediction rows are L2-normalized
// inside the loss (so gradients flow through the normalization); target rows
// must arrive unit-norm, except all-zero rows, which stand in for positions
// that have no entity to retrieve.
template <typename S>
ClipLossResult<S> clip_contrastive_loss(const MatX<S>& pred_raw, const MatX<S>& targets, S tau) {
    const Eigen::Index b = pred_raw.rows(), r = pred_raw.cols();
    if (b == 0) throw ContractError("clip_contrastive_loss: empty batch");
    if (targets.rows() != b || targets.cols() != r)
        throw ContractError("clip_contrastive_loss: batch shape mismatch");
    for (Eigen::Index i = 0; i < b; ++i) {
        const double n = targets.row(i).template cast<double>().norm();
        if (n > 1e-8 && std::abs(n - 1.0) > 1e-4)
            throw ContractError("clip_contrastive_loss: target rows must be unit-norm or zero");
    }

    MatX<S> pred = pred_raw;
    VecX<S> norms(b);
    for (Eigen::Index i = 0; i < b; ++i) {
        const S n = pred.row(i).norm();
        norms[i] = n;
        if (n > S(1e-12)) pred.row(i) /= n;
        else pred.row(i).setZero();
    }

    const S scale = std::exp(tau);
    MatX<S> logits = pred * targets.transpose();  // [i][j] = p_i . g_j
    logits *= scale;

    // Row-wise cross-entropy with the diagonal as truth, for a square logit
    // matrix; also accumulates d(logits) = (softmax - I)/b.
    auto ce_rows = [&](const MatX<S>& m, MatX<S>& dm) {
        S total = S(0);
        dm.resize(b, b);
        for (Eigen::Index i = 0; i < b; ++i) {
            const S mx = m.row(i).maxCoeff();
            VecX<S> e = (m.row(i).array() - mx).exp().matrix().transpose();
            const S z = e.sum();
            total += std::log(z) + mx - m(i, i);
            dm.row(i) = (e / z).transpose();
            dm(i, i) -= S(1);
        }
        return total / S(double(b));
    };

    ClipLossResult<S> out;
    MatX<S> d1, d2;
    const MatX<S> logits_t = logits.transpose();
    out.value = ce_rows(logits_t, d1) + ce_rows(logits, d2);
    // d(loss)/d(logits): transpose the first axis back, divide by batch.
    MatX<S> dlogits = (d1.transpose() + d2) / S(double(b));

    out.d_tau = (dlogits.array() * logits.array()).sum();
    const MatX<S> dpred_norm = scale * (dlogits * targets);

    out.d_pred = MatX<S>::Zero(b, r);
    for (Eigen::Index i = 0; i < b; ++i) {
        if (norms[i] <= S(1e-12)) continue;  // no gradient through a degenerate norm
        const auto p = pred.row(i);
        const auto dp = dpred_norm.row(i);
        out.d_pred.row(i) = (dp - p * p.dot(dp)) / norms[i];
    }
    return out;
}

}  // namespace synic
