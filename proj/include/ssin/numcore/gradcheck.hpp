#ifndef SSIN_NUMCORE_GRADCHECK_HPP
#define SSIN_NUMCORE_GRADCHECK_HPP

#include <functional>
#include <string>
#include <vector>

#include "ssin/numcore/tape.hpp"

namespace ssin::num {

struct GradCheckOptions {
    Scalar step = 1e-5;
    // Denominator floor of the relative error, so coordinates whose true
    // gradient is zero are judged on absolute error instead.
    Scalar floor = 1e-8;
};

struct GradCheckEntry {
    std::size_t input = 0;
    Index coord = 0;
    Scalar analytic = 0;
    Scalar numeric = 0;
    Scalar rel_error = 0;
};

struct GradCheckResult {
    std::size_t coordinates = 0;
    GradCheckEntry worst;  // largest relative error
    Scalar max_rel_error() const { return worst.rel_error; }
};

// Builds the scalar loss from leaves holding `inputs` and compares its
// reverse-mode gradient with central differences on every coordinate.
using LossBuilder = std::function<Var(Tape&, const std::vector<Var>& leaves)>;
GradCheckResult check_gradients(const LossBuilder& build, const std::vector<Matrix>& inputs,
                                const GradCheckOptions& options = {});

}  // namespace ssin::num

#endif  // SSIN_NUMCORE_GRADCHECK_HPP
