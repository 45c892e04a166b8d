#ifndef SSIN_TEST_KERNEL_FIXTURES_HPP
#define SSIN_TEST_KERNEL_FIXTURES_HPP

#include <algorithm>
#include <memory>
#include <numeric>
#include <vector>

#include "ssin/attnkernel.hpp"
#include "ssin/numcore/ops.hpp"

namespace testing {

struct KernelCase {
    ssin::attn::AttentionPlan plan;
    ssin::num::Matrix q, k, v;
    ssin::num::Matrix c_full;  // row i*L + j holds c_ij
    ssin::num::Matrix upstream;  // fixed dL/dZ
};

inline ssin::num::Matrix gaussian(ssin::num::Index r, ssin::num::Index c, ssin::Rng& rng) {
    ssin::num::Matrix m(r, c);
    for (ssin::num::Index t = 0; t < m.size(); ++t) m.data()[t] = rng.normal();
    return m;
}

// m observed nodes scattered at random positions among L.
inline KernelCase random_kernel_case(ssin::num::Index L, ssin::num::Index m, ssin::num::Index dk, ssin::Rng& rng) {
    std::vector<bool> flags(static_cast<std::size_t>(L), false);
    std::vector<ssin::num::Index> idx(static_cast<std::size_t>(L));
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    for (ssin::num::Index t = 0; t < m; ++t) flags[static_cast<std::size_t>(idx[static_cast<std::size_t>(t)])] = true;
    KernelCase c;
    c.plan = ssin::attn::AttentionPlan::from_flags(flags);
    c.q = gaussian(L, dk, rng);
    c.k = gaussian(L, dk, rng);
    c.v = gaussian(L, dk, rng);
    c.c_full = gaussian(L * L, dk, rng);
    c.upstream = gaussian(L, dk, rng);
    return c;
}

struct KernelComparison {
    double forward_diff = 0;
    double backward_diff = 0;
    std::size_t pairs = 0;
    std::size_t scratch_bytes = 0;
};

// Sparse kernel (through the tape, with the SRPE rows addressed per pair)
// against the dense compute-then-mask composition of primitive ops.
inline KernelComparison compare_with_dense(const KernelCase& kc) {
    using namespace ssin;
    const auto L = kc.q.rows();
    auto pairs = std::make_shared<const attn::PairList>(attn::PairList::shielded(kc.plan));
    auto rows = std::make_shared<std::vector<num::Index>>();
    for (num::Index i = 0; i < L; ++i) {
        for (auto p = pairs->begin(i); p < pairs->end(i); ++p) rows->push_back(i * L + pairs->col(p));
    }
    auto mask = std::make_shared<const num::Mask>(pairs->allowed_mask());

    KernelComparison out;
    num::Tape ts;
    auto q1 = ts.leaf(kc.q), k1 = ts.leaf(kc.k), v1 = ts.leaf(kc.v), c1 = ts.leaf(kc.c_full);
    attn::KernelStats stats;
    auto z1 = attn::shielded_attention(q1, k1, v1, c1, pairs, rows, &stats);
    ts.backward(num::sum(num::mul(z1, ts.constant(kc.upstream))));

    num::Tape td;
    auto q2 = td.leaf(kc.q), k2 = td.leaf(kc.k), v2 = td.leaf(kc.v), c2 = td.leaf(kc.c_full);
    auto z2 = attn::dense_masked_attention(q2, k2, v2, c2, mask);
    td.backward(num::sum(num::mul(z2, td.constant(kc.upstream))));

    out.forward_diff = (z1.value() - z2.value()).cwiseAbs().maxCoeff();
    // The oracle on raw matrices too (no tape).
    const auto zo = attn::dense_masked_attn_oracle(kc.q, kc.k, kc.v, &kc.c_full, *mask);
    out.forward_diff = std::max(out.forward_diff, (z1.value() - zo).cwiseAbs().maxCoeff());
    for (auto [a, b] : {std::pair{q1, q2}, {k1, k2}, {v1, v2}, {c1, c2}}) {
        out.backward_diff = std::max(out.backward_diff, (ts.grad(a) - td.grad(b)).cwiseAbs().maxCoeff());
    }
    out.pairs = stats.pairs_evaluated;
    out.scratch_bytes = stats.peak_scratch_bytes;
    return out;
}

}  // namespace testing

#endif
