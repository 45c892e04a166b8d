#include "ssin/numcore/optim.hpp"

#include <algorithm>
#include <cmath>

#include "ssin/error.hpp"

namespace ssin::num {

AdamState::AdamState(std::span<const Matrix> params, AdamOptions options) : options_(options) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params) {
        m_.push_back(Matrix::Zero(p.rows(), p.cols()));
        v_.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
}

void adam_step(std::span<Matrix> params, std::span<const Matrix> grads, AdamState& state, Scalar lr) {
    SSIN_EXPECTS(lr > 0.0, "adam_step: learning rate must be positive");
    SSIN_EXPECTS(params.size() == grads.size() && params.size() == state.m_.size(),
                 "adam_step: parameter/gradient/state counts differ");
    for (std::size_t k = 0; k < params.size(); ++k) {
        SSIN_EXPECTS(grads[k].rows() == params[k].rows() && grads[k].cols() == params[k].cols() &&
                         state.m_[k].rows() == params[k].rows() && state.m_[k].cols() == params[k].cols(),
                     "adam_step: shape mismatch for parameter " + std::to_string(k));
        if (!all_finite(grads[k])) throw NumericFault("adam_step (gradient " + std::to_string(k) + ")");
    }
    const auto& o = state.options_;
    ++state.t_;
    const Scalar c1 = 1.0 - std::pow(o.beta1, static_cast<Scalar>(state.t_));
    const Scalar c2 = 1.0 - std::pow(o.beta2, static_cast<Scalar>(state.t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& m = state.m_[k];
        auto& v = state.v_[k];
        if (o.weight_decay != 0.0) {
            const Matrix g = grads[k] + o.weight_decay * params[k];
            m = o.beta1 * m + (1.0 - o.beta1) * g;
            v = o.beta2 * v + (1.0 - o.beta2) * g.cwiseProduct(g);
        } else {
            m = o.beta1 * m + (1.0 - o.beta1) * grads[k];
            v = o.beta2 * v + (1.0 - o.beta2) * grads[k].cwiseProduct(grads[k]);
        }
        params[k].array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + o.eps);
    }
}

Scalar warmup_lr(std::int64_t step, Index d_model, std::int64_t warmup, Scalar scale) {
    SSIN_EXPECTS(step >= 1, "warmup_lr: step must be >= 1");
    SSIN_EXPECTS(d_model >= 1 && warmup >= 1, "warmup_lr: d_model and warmup must be >= 1");
    const auto s = static_cast<Scalar>(step);
    return scale * std::pow(static_cast<Scalar>(d_model), -0.5) *
           std::min(std::pow(s, -0.5), s * std::pow(static_cast<Scalar>(warmup), -1.5));
}

}  // namespace ssin::num
