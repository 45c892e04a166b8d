#include "ssin/numcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace ssin::num {

namespace {

Scalar evaluate(const LossBuilder& build, const std::vector<Matrix>& inputs) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(inputs.size());
    for (const auto& m : inputs) leaves.push_back(tape.leaf(m));
    return build(tape, leaves).value()(0, 0);
}

}  // namespace

GradCheckResult check_gradients(const LossBuilder& build, const std::vector<Matrix>& inputs,
                                const GradCheckOptions& options) {
    std::vector<Matrix> analytic;
    {
        Tape tape;
        std::vector<Var> leaves;
        for (const auto& m : inputs) leaves.push_back(tape.leaf(m));
        tape.backward(build(tape, leaves));
        for (const auto& l : leaves) analytic.push_back(tape.grad(l));
    }

    GradCheckResult result;
    auto perturbed = inputs;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        for (Index c = 0; c < inputs[k].size(); ++c) {
            Scalar& x = perturbed[k].data()[c];
            const Scalar x0 = x;
            x = x0 + options.step;
            const Scalar up = evaluate(build, perturbed);
            x = x0 - options.step;
            const Scalar down = evaluate(build, perturbed);
            x = x0;

            GradCheckEntry e;
            e.input = k;
            e.coord = c;
            e.analytic = analytic[k].data()[c];
            e.numeric = (up - down) / (2 * options.step);
            const Scalar denom = std::max({std::abs(e.analytic), std::abs(e.numeric), options.floor});
            e.rel_error = std::abs(e.analytic - e.numeric) / denom;
            if (result.coordinates == 0 || e.rel_error > result.worst.rel_error) result.worst = e;
            ++result.coordinates;
        }
    }
    return result;
}

}  // namespace ssin::num
