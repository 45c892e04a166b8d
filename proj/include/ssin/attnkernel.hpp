#ifndef SSIN_ATTNKERNEL_HPP
#define SSIN_ATTNKERNEL_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "ssin/error.hpp"
#include "ssin/numcore/ops.hpp"
#include "ssin/numcore/tape.hpp"

namespace ssin::attn {

using num::Index;
using num::Matrix;
using num::Mask;
using num::Scalar;

// Which nodes carry real observations. Observed rows attend to observed
// columns only; an unobserved row attends to the observed columns and itself.
struct AttentionPlan {
    Index length = 0;
    std::vector<Index> observed;
    std::vector<Index> unobserved;

    static AttentionPlan from_flags(const std::vector<bool>& observed_flags);
    // Throws ContractViolation unless the two sets partition [0, length).
    void validate() const;
};

// Allowed columns of every query row, stored CSR-style.
class PairList {
public:
    // Observed columns in plan order; an unobserved row lists itself last.
    static PairList shielded(const AttentionPlan& plan);
    // Every row lists every column.
    static PairList dense(Index length);

    Index rows() const { return static_cast<Index>(offsets_.size()) - 1; }
    Index total() const { return offsets_.back(); }
    Index begin(Index row) const { return offsets_[static_cast<std::size_t>(row)]; }
    Index end(Index row) const { return offsets_[static_cast<std::size_t>(row) + 1]; }
    Index col(Index pair) const { return cols_[static_cast<std::size_t>(pair)]; }
    Index max_row_length() const { return max_row_; }
    const std::vector<Index>& columns() const { return cols_; }

    Mask allowed_mask() const;

private:
    std::vector<Index> offsets_{0};
    std::vector<Index> cols_;
    Index max_row_ = 0;
};

inline Index expected_pairs(Index length, Index observed) {
    return observed * observed + (length - observed) * (observed + 1);
}

struct KernelStats {
    std::size_t pairs_evaluated = 0;
    std::size_t peak_scratch_bytes = 0;  // per-row working buffers only
    std::chrono::nanoseconds wall_time{0};
};

// --- relative-position embedding sources --------------------------------

// c_ij = 1: plain scaled dot-product scoring.
struct UnitSrpe {
    static constexpr bool kUnit = true;
    Index dim = 0;
    const Scalar* fetch(Index, Index, Index, Scalar*) const { return nullptr; }
};

// c for pair p is row `rows[p]` (or p when rows is null) of `table`.
struct RowSrpe {
    static constexpr bool kUnit = false;
    const Matrix* table = nullptr;
    const std::vector<Index>* rows = nullptr;

    Index row(Index p) const { return rows ? (*rows)[static_cast<std::size_t>(p)] : p; }
    const Scalar* fetch(Index, Index, Index p, Scalar*) const { return table->data() + row(p) * table->cols(); }
};

// Computes c_ij on demand from the standardized relative position of (i, j)
// through the two-layer embedding, so no per-pair table is ever stored.
struct FusedSrpe {
    static constexpr bool kUnit = false;
    std::function<Eigen::Vector2d(Index, Index)> relpos;
    Matrix w1;  // 2 x d
    Matrix b1;  // 1 x d
    Matrix w2;  // d x d
    Matrix b2;  // 1 x d

    const Scalar* fetch(Index i, Index j, Index, Scalar* scratch) const {
        const Eigen::Vector2d r = relpos(i, j);
        const auto d = w2.cols();
        Eigen::Map<num::RowVector> out(scratch, d);
        out.noalias() = (r.transpose() * w1 + b1) * w2;
        out += b2;
        return scratch;
    }
};

// --- kernel ---------------------------------------------------------------

namespace detail {
inline void check_shapes(const Matrix& q, const Matrix& k, const Matrix& v, const PairList& pairs) {
    SSIN_EXPECTS(q.rows() == pairs.rows() && k.rows() == pairs.rows() && v.rows() == pairs.rows(),
                 "shielded attention: Q/K/V rows must equal the plan length");
    SSIN_EXPECTS(q.cols() == k.cols(), "shielded attention: Q and K widths differ");
}
}  // namespace detail

namespace detail {

// Row loop of the forward kernel. D is the compile-time head width when it
// is known (the default 16 unrolls into packet ops), otherwise Dynamic.
template <int D, typename Srpe>
void attn_rows(const Matrix& q, const Matrix& k, const Matrix& v, const Srpe& srpe, const PairList& pairs, Matrix& z,
               std::vector<Scalar>* alpha_out, std::vector<Scalar>& scores, std::vector<Scalar>& cbuf) {
    using Vec = Eigen::Array<Scalar, D, 1>;
    using CMap = Eigen::Map<const Vec>;
    const Index dk = q.cols();
    const Index dv = v.cols();
    const Scalar inv_sqrt = 1.0 / std::sqrt(static_cast<Scalar>(dk));
    for (Index i = 0; i < pairs.rows(); ++i) {
        const Index b = pairs.begin(i), e = pairs.end(i);
        SSIN_EXPECTS(e > b, "shielded attention: empty allowed set");
        const CMap qi(q.data() + i * dk, dk);
        Scalar mx = -std::numeric_limits<Scalar>::infinity();
        for (Index p = b; p < e; ++p) {
            const Index j = pairs.col(p);
            const CMap kj(k.data() + j * dk, dk);
            Scalar s;
            if constexpr (Srpe::kUnit) {
                s = (qi * kj).sum();
            } else {
                s = (qi * kj * CMap(srpe.fetch(i, j, p, cbuf.data()), dk)).sum();
            }
            s *= inv_sqrt;
            scores[static_cast<std::size_t>(p - b)] = s;
            mx = std::max(mx, s);
        }
        Scalar total = 0.0;
        for (Index p = b; p < e; ++p) {
            auto& s = scores[static_cast<std::size_t>(p - b)];
            s = std::exp(s - mx);
            total += s;
        }
        Eigen::Map<Eigen::Array<Scalar, D, 1>> zi(z.data() + i * dv, dv);
        for (Index p = b; p < e; ++p) {
            const Scalar a = scores[static_cast<std::size_t>(p - b)] / total;
            if (alpha_out) (*alpha_out)[static_cast<std::size_t>(p)] = a;
            zi += a * CMap(v.data() + pairs.col(p) * dv, dv);
        }
    }
}

}  // namespace detail

// Z_i = sum_{j in allowed(i)} softmax_j(sum(q_i * k_j * c_ij) / sqrt(d_k)) v_j,
// visiting only the listed pairs. When `alpha_out` is given, the attention
// weights are stored in pair order for the backward pass.
template <typename Srpe>
KernelStats sparse_shielded_attn(const Matrix& q, const Matrix& k, const Matrix& v, const Srpe& srpe,
                                 const PairList& pairs, Matrix& z, std::vector<Scalar>* alpha_out = nullptr) {
    detail::check_shapes(q, k, v, pairs);
    const auto start = std::chrono::steady_clock::now();
    z.setZero(q.rows(), v.cols());
    if (alpha_out) alpha_out->assign(static_cast<std::size_t>(pairs.total()), 0.0);

    std::vector<Scalar> scores(static_cast<std::size_t>(pairs.max_row_length()));
    std::vector<Scalar> cbuf(static_cast<std::size_t>(q.cols()));
    if (q.cols() == 16 && v.cols() == 16) {
        detail::attn_rows<16>(q, k, v, srpe, pairs, z, alpha_out, scores, cbuf);
    } else {
        SSIN_EXPECTS(q.cols() == v.cols(), "shielded attention: value width must equal the key width");
        detail::attn_rows<Eigen::Dynamic>(q, k, v, srpe, pairs, z, alpha_out, scores, cbuf);
    }
    KernelStats stats;
    stats.pairs_evaluated = static_cast<std::size_t>(pairs.total());
    stats.peak_scratch_bytes = (scores.capacity() + cbuf.capacity()) * sizeof(Scalar);
    stats.wall_time = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start);
    return stats;
}

// Gradients of the kernel over the same pair list. `dc` receives the
// gradient of the SRPE rows referenced by `srpe` (ignored for UnitSrpe).
void sparse_shielded_attn_backward(const Matrix& q, const Matrix& k, const Matrix& v, const RowSrpe* srpe,
                                   const PairList& pairs, const std::vector<Scalar>& alpha, const Matrix& dz,
                                   Matrix& dq, Matrix& dk, Matrix& dv, Matrix* dc);

// Reference: scores every (i, j), sets forbidden scores to -inf, then
// softmax. `c_full` row i*L + j holds c_ij; null means c == 1.
Matrix dense_masked_attn_oracle(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix* c_full,
                                const Mask& allowed);

// --- tape integration -------------------------------------------------------

// Differentiable shielded attention. `c` is optional (absent means c == 1);
// `c_rows` maps pair index to a row of `c` (identity when null).
num::Var shielded_attention(num::Var q, num::Var k, num::Var v, std::optional<num::Var> c,
                            std::shared_ptr<const PairList> pairs,
                            std::shared_ptr<const std::vector<Index>> c_rows = nullptr,
                            KernelStats* stats = nullptr);

// Dense compute-then-mask attention composed from primitive tape ops; the
// independent route the sparse kernel is checked against.
num::Var dense_masked_attention(num::Var q, num::Var k, num::Var v, std::optional<num::Var> c_full,
                                std::shared_ptr<const Mask> allowed);

// --- benchmark ---------------------------------------------------------------

struct BenchRow {
    Index length = 0;
    Index observed = 0;
    std::size_t pairs = 0;
    double wall_ms = 0.0;
    std::size_t scratch_bytes = 0;
};

struct BenchOptions {
    int reps = 5;
    Index d_k = 16;
    std::uint64_t seed = 7;
};

// Times the fused sparse kernel on random instances; the reported wall time
// is the fastest of `reps` runs. Throws if any row exceeds (m+1)L pairs.
std::vector<BenchRow> bench(const std::vector<std::pair<Index, Index>>& sizes, const BenchOptions& options = {});

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

}  // namespace ssin::attn

#endif  // SSIN_ATTNKERNEL_HPP
