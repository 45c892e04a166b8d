#include "ssin/attnkernel.hpp"

#include <algorithm>
#include <ostream>

#include "ssin/geom.hpp"
#include "ssin/rng.hpp"

namespace ssin::attn {

AttentionPlan AttentionPlan::from_flags(const std::vector<bool>& observed_flags) {
    AttentionPlan plan;
    plan.length = static_cast<Index>(observed_flags.size());
    for (std::size_t i = 0; i < observed_flags.size(); ++i) {
        (observed_flags[i] ? plan.observed : plan.unobserved).push_back(static_cast<Index>(i));
    }
    return plan;
}

void AttentionPlan::validate() const {
    SSIN_EXPECTS(length >= 1, "attention plan: empty sequence");
    std::vector<int> seen(static_cast<std::size_t>(length), 0);
    auto mark = [&](const std::vector<Index>& set) {
        for (auto i : set) {
            SSIN_EXPECTS(i >= 0 && i < length, "attention plan: node index out of range");
            ++seen[static_cast<std::size_t>(i)];
        }
    };
    mark(observed);
    mark(unobserved);
    for (auto s : seen) SSIN_EXPECTS(s == 1, "attention plan: observed/unobserved must partition the nodes");
    // Observed rows would be empty otherwise.
    SSIN_EXPECTS(!observed.empty() || unobserved.size() == static_cast<std::size_t>(length),
                 "attention plan: inconsistent sets");
}

PairList PairList::shielded(const AttentionPlan& plan) {
    plan.validate();
    const auto m = static_cast<Index>(plan.observed.size());
    std::vector<bool> is_observed(static_cast<std::size_t>(plan.length), false);
    for (auto i : plan.observed) is_observed[static_cast<std::size_t>(i)] = true;
    PairList out;
    out.offsets_.reserve(static_cast<std::size_t>(plan.length) + 1);
    out.cols_.reserve(static_cast<std::size_t>(expected_pairs(plan.length, m)));
    for (Index i = 0; i < plan.length; ++i) {
        out.cols_.insert(out.cols_.end(), plan.observed.begin(), plan.observed.end());
        if (!is_observed[static_cast<std::size_t>(i)]) out.cols_.push_back(i);
        out.offsets_.push_back(static_cast<Index>(out.cols_.size()));
        out.max_row_ = std::max(out.max_row_, out.offsets_.back() - out.offsets_[out.offsets_.size() - 2]);
    }
    return out;
}

PairList PairList::dense(Index length) {
    SSIN_EXPECTS(length >= 1, "dense pair list: empty sequence");
    PairList out;
    out.cols_.reserve(static_cast<std::size_t>(length * length));
    for (Index i = 0; i < length; ++i) {
        for (Index j = 0; j < length; ++j) out.cols_.push_back(j);
        out.offsets_.push_back(static_cast<Index>(out.cols_.size()));
    }
    out.max_row_ = length;
    return out;
}

Mask PairList::allowed_mask() const {
    Mask m = Mask::Constant(rows(), rows(), false);
    for (Index i = 0; i < rows(); ++i)
        for (Index p = begin(i); p < end(i); ++p) m(i, col(p)) = true;
    return m;
}

namespace {

template <int D>
void attn_backward_rows(const Matrix& q, const Matrix& k, const Matrix& v, const RowSrpe* srpe,
                        const PairList& pairs, const std::vector<Scalar>& alpha, const Matrix& dz, Matrix& dq,
                        Matrix& dk, Matrix& dv, Matrix* dc) {
    using Vec = Eigen::Array<Scalar, D, 1>;
    using CMap = Eigen::Map<const Vec>;
    using MMap = Eigen::Map<Vec>;
    const Index d = q.cols();
    const Scalar inv_sqrt = 1.0 / std::sqrt(static_cast<Scalar>(d));
    std::vector<Scalar> dalpha(static_cast<std::size_t>(pairs.max_row_length()));
    for (Index i = 0; i < pairs.rows(); ++i) {
        const Index b = pairs.begin(i), e = pairs.end(i);
        const CMap dzi(dz.data() + i * d, d);
        Scalar inner = 0.0;
        for (Index p = b; p < e; ++p) {
            const Index j = pairs.col(p);
            const Scalar a = alpha[static_cast<std::size_t>(p)];
            const Scalar da = (dzi * CMap(v.data() + j * d, d)).sum();
            MMap(dv.data() + j * d, d) += a * dzi;
            dalpha[static_cast<std::size_t>(p - b)] = da;
            inner += a * da;
        }
        const CMap qi(q.data() + i * d, d);
        MMap dqi(dq.data() + i * d, d);
        for (Index p = b; p < e; ++p) {
            const Index j = pairs.col(p);
            const Scalar g =
                alpha[static_cast<std::size_t>(p)] * (dalpha[static_cast<std::size_t>(p - b)] - inner) * inv_sqrt;
            if (g == 0.0) continue;
            const CMap kj(k.data() + j * d, d);
            MMap dkj(dk.data() + j * d, d);
            if (srpe) {
                const CMap c(srpe->fetch(i, j, p, nullptr), d);
                dqi += g * kj * c;
                dkj += g * qi * c;
                if (dc) MMap(dc->data() + srpe->row(p) * d, d) += g * qi * kj;
            } else {
                dqi += g * kj;
                dkj += g * qi;
            }
        }
    }
}

}  // namespace

void sparse_shielded_attn_backward(const Matrix& q, const Matrix& k, const Matrix& v, const RowSrpe* srpe,
                                   const PairList& pairs, const std::vector<Scalar>& alpha, const Matrix& dz,
                                   Matrix& dq, Matrix& dk, Matrix& dv, Matrix* dc) {
    detail::check_shapes(q, k, v, pairs);
    SSIN_EXPECTS(static_cast<Index>(alpha.size()) == pairs.total(), "attention backward: alpha size mismatch");
    SSIN_EXPECTS(v.cols() == q.cols() && dz.cols() == q.cols(), "attention backward: value width must equal the key width");
    dq.setZero(q.rows(), q.cols());
    dk.setZero(k.rows(), k.cols());
    dv.setZero(v.rows(), v.cols());
    if (q.cols() == 16) {
        attn_backward_rows<16>(q, k, v, srpe, pairs, alpha, dz, dq, dk, dv, dc);
    } else {
        attn_backward_rows<Eigen::Dynamic>(q, k, v, srpe, pairs, alpha, dz, dq, dk, dv, dc);
    }
}

Matrix dense_masked_attn_oracle(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix* c_full,
                                const Mask& allowed) {
    const Index n = q.rows();
    const Index d = q.cols();
    SSIN_EXPECTS(allowed.rows() == n && allowed.cols() == n, "dense oracle: mask shape mismatch");
    if (c_full) SSIN_EXPECTS(c_full->rows() == n * n && c_full->cols() == d, "dense oracle: C must be (L*L) x d_k");
    const Scalar inf = std::numeric_limits<Scalar>::infinity();
    Matrix scores(n, n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            Scalar s = 0.0;
            for (Index t = 0; t < d; ++t) s += q(i, t) * k(j, t) * (c_full ? (*c_full)(i * n + j, t) : 1.0);
            scores(i, j) = s / std::sqrt(static_cast<Scalar>(d));
        }
    }
    scores = allowed.select(scores, -inf);
    Matrix w(n, n);
    for (Index i = 0; i < n; ++i) {
        const Scalar mx = scores.row(i).maxCoeff();
        w.row(i) = (scores.row(i).array() - mx).exp().matrix();
        w.row(i) /= w.row(i).sum();
    }
    return w * v;
}

num::Var shielded_attention(num::Var q, num::Var k, num::Var v, std::optional<num::Var> c,
                            std::shared_ptr<const PairList> pairs, std::shared_ptr<const std::vector<Index>> c_rows,
                            KernelStats* stats) {
    SSIN_EXPECTS(pairs != nullptr, "shielded_attention: missing pair list");
    SSIN_EXPECTS(q.rows() == pairs->rows() && k.rows() == pairs->rows() && v.rows() == pairs->rows(),
                 "shielded_attention: Q/K/V rows must equal the plan length");
    SSIN_EXPECTS(q.cols() == k.cols(), "shielded_attention: Q and K widths differ");
    if (c) {
        SSIN_EXPECTS(c->cols() == q.cols(), "shielded_attention: SRPE width must equal d_k");
        if (c_rows) {
            SSIN_EXPECTS(static_cast<Index>(c_rows->size()) == pairs->total(),
                         "shielded_attention: SRPE row map must cover every pair");
            for (auto r : *c_rows) SSIN_EXPECTS(r >= 0 && r < c->rows(), "shielded_attention: SRPE row out of range");
        } else {
            SSIN_EXPECTS(c->rows() == pairs->total(), "shielded_attention: SRPE needs one row per pair");
        }
    }
    const auto iq = q.id, ik = k.id, iv = v.id;
    const auto ic = c ? std::optional<std::size_t>(c->id) : std::nullopt;
    auto alpha = std::make_shared<std::vector<Scalar>>();
    std::vector<num::Var> inputs{q, k, v};
    if (c) inputs.push_back(*c);

    auto forward = [=](const num::Tape& t) -> Matrix {
        Matrix z;
        KernelStats s;
        if (ic) {
            const RowSrpe src{&t.value(*ic), c_rows.get()};
            s = sparse_shielded_attn(t.value(iq), t.value(ik), t.value(iv), src, *pairs, z, alpha.get());
        } else {
            s = sparse_shielded_attn(t.value(iq), t.value(ik), t.value(iv), UnitSrpe{}, *pairs, z, alpha.get());
        }
        if (stats) *stats = s;
        return z;
    };
    auto backward = [=](num::Tape& t, const Matrix& g) {
        Matrix dq, dk, dv;
        if (ic) {
            const RowSrpe src{&t.value(*ic), c_rows.get()};
            Matrix* dc = t.requires_grad(*ic) ? &t.grad_buffer(*ic) : nullptr;
            sparse_shielded_attn_backward(t.value(iq), t.value(ik), t.value(iv), &src, *pairs, *alpha, g, dq, dk,
                                          dv, dc);
        } else {
            sparse_shielded_attn_backward(t.value(iq), t.value(ik), t.value(iv), nullptr, *pairs, *alpha, g, dq, dk,
                                          dv, nullptr);
        }
        t.accumulate(iq, dq);
        t.accumulate(ik, dk);
        t.accumulate(iv, dv);
    };
    return q.tape->record("shielded_attention", std::move(inputs), forward, backward);
}

num::Var dense_masked_attention(num::Var q, num::Var k, num::Var v, std::optional<num::Var> c_full,
                                std::shared_ptr<const Mask> allowed) {
    const Index n = q.rows();
    if (c_full) SSIN_EXPECTS(c_full->rows() == n * n && c_full->cols() == q.cols(), "dense attention: C must be (L*L) x d_k");
    std::vector<num::Var> rows;
    rows.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        const auto qi = num::slice_rows(q, i, 1);
        const auto keys = c_full ? num::mul(k, num::slice_rows(*c_full, i * n, n)) : k;
        rows.push_back(num::matmul(qi, num::transpose(keys)));
    }
    const auto scores = num::scale(num::concat_rows(rows), 1.0 / std::sqrt(static_cast<Scalar>(q.cols())));
    return num::matmul(num::softmax_masked(scores, std::move(allowed)), v);
}

std::vector<BenchRow> bench(const std::vector<std::pair<Index, Index>>& sizes, const BenchOptions& options) {
    std::vector<BenchRow> out;
    for (const auto& [length, m] : sizes) {
        SSIN_EXPECTS(length >= 1 && m >= 1 && m <= length, "bench: need 1 <= m <= L");
        Rng rng(derive_seed(options.seed, {static_cast<std::uint64_t>(length), static_cast<std::uint64_t>(m)}));
        const Index d = options.d_k;

        std::vector<geom::Station> nodes(static_cast<std::size_t>(length));
        for (auto& s : nodes) {
            s.lat = rng.uniform(22.2, 22.6);
            s.lon = rng.uniform(113.8, 114.4);
        }
        std::vector<geom::Station> observed(nodes.begin(), nodes.begin() + m);
        const auto stats = geom::build_relpos_table(geom::StationSet([&] {
                                                        for (std::size_t i = 0; i < observed.size(); ++i)
                                                            observed[i].id = std::to_string(i);
                                                        return observed;
                                                    }()))
                               .stats();

        auto random = [&](Index r, Index c) {
            Matrix x(r, c);
            for (Index t = 0; t < x.size(); ++t) x.data()[t] = rng.uniform(-1.0, 1.0);
            return x;
        };
        const Matrix q = random(length, d), k = random(length, d), v = random(length, d);
        FusedSrpe srpe;
        srpe.w1 = random(2, d);
        srpe.b1 = random(1, d);
        srpe.w2 = random(d, d);
        srpe.b2 = random(1, d);
        srpe.relpos = [&nodes, stats](Index i, Index j) {
            const auto& a = nodes[static_cast<std::size_t>(i)];
            const auto& b = nodes[static_cast<std::size_t>(j)];
            return geom::standardize(geom::relative_position(a, b, geom::default_distance()), stats);
        };

        AttentionPlan plan;
        plan.length = length;
        for (Index i = 0; i < length; ++i) (i < m ? plan.observed : plan.unobserved).push_back(i);
        const auto pairs = PairList::shielded(plan);
        if (pairs.total() > (m + 1) * length) throw Error("bench: pair count exceeds (m+1)L");

        BenchRow row;
        row.length = length;
        row.observed = m;
        row.pairs = static_cast<std::size_t>(pairs.total());
        double best = std::numeric_limits<double>::infinity();
        Matrix z;
        for (int r = 0; r < std::max(1, options.reps); ++r) {
            const auto s = sparse_shielded_attn(q, k, v, srpe, pairs, z);
            best = std::min(best, std::chrono::duration<double, std::milli>(s.wall_time).count());
            row.scratch_bytes = std::max(row.scratch_bytes, s.peak_scratch_bytes);
        }
        row.wall_ms = best;
        out.push_back(row);
    }
    return out;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
    out << "L,m,pairs,wall_ms,scratch_bytes\n";
    for (const auto& r : rows) {
        out << r.length << ',' << r.observed << ',' << r.pairs << ',' << r.wall_ms << ',' << r.scratch_bytes << '\n';
    }
}

}  // namespace ssin::attn
