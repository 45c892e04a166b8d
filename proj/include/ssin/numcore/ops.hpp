#ifndef SSIN_NUMCORE_OPS_HPP
#define SSIN_NUMCORE_OPS_HPP

#include <memory>
#include <vector>

#include "ssin/numcore/tape.hpp"
#include "ssin/rng.hpp"

namespace ssin::num {

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr Scalar kLayerNormEps = 1e-5;

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, Scalar s);
// a (n x d) + row (1 x d) broadcast over rows.
Var add_row(Var a, Var row);
// x W + b, with b a 1 x out row.
Var linear(Var x, Var w, Var b);
// axis 0 -> 1 x cols, axis 1 -> rows x 1.
Var sum_axis(Var a, int axis);
Var sum(Var a);
Var relu(Var a);
// Normalizes each row; gain and shift are 1 x d.
Var layer_norm(Var x, Var gain, Var shift, Scalar eps = kLayerNormEps);
// Row-wise softmax restricted to `allowed`. Entries outside the allowed set
// receive exactly zero weight. Every row needs at least one allowed entry.
Var softmax_masked(Var scores, std::shared_ptr<const Mask> allowed);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(Var a, Index start, Index count);
Var gather_rows(Var a, std::vector<Index> rows);
// Inverted dropout; identity when rate == 0.
Var dropout(Var a, Scalar rate, Rng& rng);

}  // namespace ssin::num

#endif  // SSIN_NUMCORE_OPS_HPP
