#ifndef SSIN_NUMCORE_OPTIM_HPP
#define SSIN_NUMCORE_OPTIM_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "ssin/numcore/tape.hpp"

namespace ssin::num {

struct AdamOptions {
    Scalar beta1 = 0.9;
    Scalar beta2 = 0.98;
    Scalar eps = 1e-9;
    Scalar weight_decay = 0.0;  // L2 term added to the gradient
};

class AdamState {
public:
    AdamState() = default;
    AdamState(std::span<const Matrix> params, AdamOptions options = {});

    const AdamOptions& options() const { return options_; }
    std::int64_t step() const { return t_; }
    const std::vector<Matrix>& first_moment() const { return m_; }
    const std::vector<Matrix>& second_moment() const { return v_; }

private:
    friend void adam_step(std::span<Matrix>, std::span<const Matrix>, AdamState&, Scalar);

    AdamOptions options_;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
    std::int64_t t_ = 0;
};

// One bias-corrected Adam update in place.
void adam_step(std::span<Matrix> params, std::span<const Matrix> grads, AdamState& state, Scalar lr);

// Inverse square-root schedule with linear warmup:
// scale * d_model^-0.5 * min(step^-0.5, step * warmup^-1.5).
Scalar warmup_lr(std::int64_t step, Index d_model = 16, std::int64_t warmup = 1200, Scalar scale = 1.0);

}  // namespace ssin::num

#endif  // SSIN_NUMCORE_OPTIM_HPP
