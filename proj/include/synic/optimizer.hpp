#pragma once

#include <cmath>
#include <cstdint>

#include "synic/errors.hpp"
#include "synic/tensor.hpp"

namespace synic {

// Learning-rate schedule + Adam hyperparameters for one training run.
struct OptimConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 1.0;  // global gradient norm cap; <=0 disables clipping
    int64_t warmup_steps = 0;
    int64_t total_steps = 1;

    // Linear warmup to `lr`, then linear decay to zero at total_steps.
    double lr_at(int64_t step) const {
        if (total_steps <= 0) throw ContractError("OptimConfig: total_steps must be positive");
        if (step < 0 || step >= total_steps) throw ContractError("OptimConfig: step out of range");
        if (step < warmup_steps)
            return lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
        if (total_steps == warmup_steps) return lr;
        return lr * static_cast<double>(total_steps - step) /
               static_cast<double>(total_steps - warmup_steps);
    }
};

// Adam with bias correction and global-norm gradient clipping. Moment buffers
// are lazily shaped from the first gradient seen.
template <typename S>
class AdamOptimizer {
  public:
    explicit AdamOptimizer(OptimConfig config) : config_(config) {}

    const OptimConfig& config() const { return config_; }
    int64_t steps_taken() const { return t_; }
    double last_grad_norm() const { return last_grad_norm_; }

    // Mutates `grads` in place when clipping, then applies one Adam update to
    // `params`. Throws TrainDivergedError on non-finite gradients.
    void step(ParamSet<S>& params, ParamSet<S>& grads) {
        if (m_.size() == 0) {
            m_ = params.zeros_like();
            v_ = params.zeros_like();
        }
        params.check_same_shape(grads);
        params.check_same_shape(m_);

        const double gnorm = std::sqrt(grads.squared_norm());
        if (!std::isfinite(gnorm))
            throw TrainDivergedError("non-finite gradient norm at step " + std::to_string(t_));
        last_grad_norm_ = gnorm;
        if (config_.clip_norm > 0 && gnorm > config_.clip_norm)
            grads.scale(static_cast<S>(config_.clip_norm / gnorm));

        const double lr_t = config_.lr_at(t_);
        ++t_;
        const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
        const S b1 = static_cast<S>(config_.beta1);
        const S b2 = static_cast<S>(config_.beta2);
        const S alpha = static_cast<S>(lr_t / bc1);
        const S inv_bc2 = static_cast<S>(1.0 / bc2);
        const S eps = static_cast<S>(config_.eps);

        for (size_t i = 0; i < params.size(); ++i) {
            auto& p = params.tensor(i).mat;
            const auto& g = grads.tensor(i).mat;
            auto& m = m_.tensor(i).mat;
            auto& v = v_.tensor(i).mat;
            m = b1 * m + (S(1) - b1) * g;
            v.array() = b2 * v.array() + (S(1) - b2) * g.array().square();
            p.array() -= alpha * m.array() / ((v.array() * inv_bc2).sqrt() + eps);
        }
    }

  private:
    OptimConfig config_;
    int64_t t_ = 0;
    double last_grad_norm_ = 0.0;
    ParamSet<S> m_;
    ParamSet<S> v_;
};

}  // namespace synic
