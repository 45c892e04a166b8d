#include "ssin/numcore/ops.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "ssin/error.hpp"

namespace ssin::num {

namespace {

void require_same_shape(const char* op, Var a, Var b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ContractViolation(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
    }
}

}  // namespace

Var matmul(Var a, Var b) {
    if (a.cols() != b.rows()) throw ContractViolation("matmul: inner dimensions differ");
    const auto ia = a.id, ib = b.id;
    return a.tape->record(
        "matmul", {a, b}, [=](const Tape& t) -> Matrix { return t.value(ia) * t.value(ib); },
        [=](Tape& t, const Matrix& g) {
            if (t.requires_grad(ia)) t.accumulate_expr(ia, g * t.value(ib).transpose());
            if (t.requires_grad(ib)) t.accumulate_expr(ib, t.value(ia).transpose() * g);
        });
}

Var transpose(Var a) {
    const auto ia = a.id;
    return a.tape->record(
        "transpose", {a}, [=](const Tape& t) -> Matrix { return t.value(ia).transpose(); },
        [=](Tape& t, const Matrix& g) { t.accumulate_expr(ia, g.transpose()); });
}

Var add(Var a, Var b) {
    require_same_shape("add", a, b);
    const auto ia = a.id, ib = b.id;
    return a.tape->record(
        "add", {a, b}, [=](const Tape& t) -> Matrix { return t.value(ia) + t.value(ib); },
        [=](Tape& t, const Matrix& g) {
            t.accumulate(ia, g);
            t.accumulate(ib, g);
        });
}

Var sub(Var a, Var b) {
    require_same_shape("sub", a, b);
    const auto ia = a.id, ib = b.id;
    return a.tape->record(
        "sub", {a, b}, [=](const Tape& t) -> Matrix { return t.value(ia) - t.value(ib); },
        [=](Tape& t, const Matrix& g) {
            t.accumulate(ia, g);
            t.accumulate_expr(ib, -g);
        });
}

Var mul(Var a, Var b) {
    require_same_shape("mul", a, b);
    const auto ia = a.id, ib = b.id;
    return a.tape->record(
        "mul", {a, b},
        [=](const Tape& t) -> Matrix { return t.value(ia).cwiseProduct(t.value(ib)); },
        [=](Tape& t, const Matrix& g) {
            if (t.requires_grad(ia)) t.accumulate_expr(ia, g.cwiseProduct(t.value(ib)));
            if (t.requires_grad(ib)) t.accumulate_expr(ib, g.cwiseProduct(t.value(ia)));
        });
}

Var scale(Var a, Scalar s) {
    const auto ia = a.id;
    return a.tape->record(
        "scale", {a}, [=](const Tape& t) -> Matrix { return t.value(ia) * s; },
        [=](Tape& t, const Matrix& g) { t.accumulate_expr(ia, g * s); });
}

Var add_row(Var a, Var row) {
    if (row.rows() != 1 || row.cols() != a.cols()) throw ContractViolation("add_row: bias must be 1 x cols");
    const auto ia = a.id, ir = row.id;
    return a.tape->record(
        "add_row", {a, row},
        [=](const Tape& t) -> Matrix { return t.value(ia).rowwise() + t.value(ir).row(0); },
        [=](Tape& t, const Matrix& g) {
            t.accumulate(ia, g);
            if (t.requires_grad(ir)) t.accumulate_expr(ir, g.colwise().sum());
        });
}

Var linear(Var x, Var w, Var b) { return add_row(matmul(x, w), b); }

Var sum_axis(Var a, int axis) {
    if (axis != 0 && axis != 1) throw ContractViolation("sum_axis: axis must be 0 or 1");
    const auto ia = a.id;
    const auto rows = a.rows(), cols = a.cols();
    if (axis == 0) {
        return a.tape->record(
            "sum_axis0", {a}, [=](const Tape& t) -> Matrix { return t.value(ia).colwise().sum(); },
            [=](Tape& t, const Matrix& g) { t.accumulate_expr(ia, g.replicate(rows, 1)); });
    }
    return a.tape->record(
        "sum_axis1", {a}, [=](const Tape& t) -> Matrix { return t.value(ia).rowwise().sum(); },
        [=](Tape& t, const Matrix& g) { t.accumulate_expr(ia, g.replicate(1, cols)); });
}

Var sum(Var a) {
    const auto ia = a.id;
    const auto rows = a.rows(), cols = a.cols();
    return a.tape->record(
        "sum", {a}, [=](const Tape& t) -> Matrix { return Matrix::Constant(1, 1, t.value(ia).sum()); },
        [=](Tape& t, const Matrix& g) { t.accumulate_expr(ia, Matrix::Constant(rows, cols, g(0, 0))); });
}

Var relu(Var a) {
    const auto ia = a.id;
    return a.tape->record(
        "relu", {a}, [=](const Tape& t) -> Matrix { return t.value(ia).cwiseMax(0.0); },
        [=](Tape& t, const Matrix& g) {
            t.accumulate_expr(ia, (t.value(ia).array() > 0.0).select(g, 0.0).matrix());
        });
}

Var layer_norm(Var x, Var gain, Var shift, Scalar eps) {
    const auto d = x.cols();
    if (gain.rows() != 1 || gain.cols() != d || shift.rows() != 1 || shift.cols() != d) {
        throw ContractViolation("layer_norm: gain/shift must be 1 x d");
    }
    const auto ix = x.id, ig = gain.id, is = shift.id;
    return x.tape->record(
        "layer_norm", {x, gain, shift},
        [=](const Tape& t) -> Matrix {
            const auto& xv = t.value(ix);
            Matrix out(xv.rows(), d);
            for (Index r = 0; r < xv.rows(); ++r) {
                const Scalar mu = xv.row(r).mean();
                const Scalar var = (xv.row(r).array() - mu).square().mean();
                const Scalar inv = 1.0 / std::sqrt(var + eps);
                out.row(r) = ((xv.row(r).array() - mu) * inv * t.value(ig).row(0).array() +
                              t.value(is).row(0).array())
                                 .matrix();
            }
            return out;
        },
        [=](Tape& t, const Matrix& g) {
            const auto& xv = t.value(ix);
            const auto& gv = t.value(ig);
            Matrix dx(xv.rows(), d);
            RowVector dgain = RowVector::Zero(d);
            for (Index r = 0; r < xv.rows(); ++r) {
                const Scalar mu = xv.row(r).mean();
                const Scalar var = (xv.row(r).array() - mu).square().mean();
                const Scalar inv = 1.0 / std::sqrt(var + eps);
                const RowVector xhat = ((xv.row(r).array() - mu) * inv).matrix();
                const RowVector dxhat = g.row(r).cwiseProduct(gv.row(0));
                const Scalar m1 = dxhat.mean();
                const Scalar m2 = dxhat.cwiseProduct(xhat).mean();
                dx.row(r) = ((dxhat.array() - m1 - xhat.array() * m2) * inv).matrix();
                dgain += g.row(r).cwiseProduct(xhat);
            }
            t.accumulate(ix, dx);
            if (t.requires_grad(ig)) t.accumulate(ig, dgain);
            if (t.requires_grad(is)) t.accumulate_expr(is, g.colwise().sum());
        });
}

Var softmax_masked(Var scores, std::shared_ptr<const Mask> allowed) {
    if (!allowed || allowed->rows() != scores.rows() || allowed->cols() != scores.cols()) {
        throw ContractViolation("softmax_masked: mask shape mismatch");
    }
    for (Index r = 0; r < allowed->rows(); ++r) {
        if (!allowed->row(r).any()) throw ContractViolation("softmax_masked: empty allowed set in row " + std::to_string(r));
    }
    const auto is = scores.id;
    const auto io = scores.tape->next_id();
    return scores.tape->record(
        "softmax_masked", {scores},
        [=](const Tape& t) -> Matrix {
            const auto& s = t.value(is);
            Matrix w = Matrix::Zero(s.rows(), s.cols());
            for (Index r = 0; r < s.rows(); ++r) {
                Scalar mx = -std::numeric_limits<Scalar>::infinity();
                for (Index c = 0; c < s.cols(); ++c)
                    if ((*allowed)(r, c)) mx = std::max(mx, s(r, c));
                Scalar total = 0.0;
                for (Index c = 0; c < s.cols(); ++c) {
                    if ((*allowed)(r, c)) {
                        w(r, c) = std::exp(s(r, c) - mx);
                        total += w(r, c);
                    }
                }
                w.row(r) /= total;
            }
            return w;
        },
        [=](Tape& t, const Matrix& g) {
            const auto& w = t.value(io);
            const Vector inner = g.cwiseProduct(w).rowwise().sum();
            t.accumulate_expr(is, w.cwiseProduct(g - inner.replicate(1, w.cols())));
        });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ContractViolation("concat_cols: no operands");
    const auto rows = parts[0].rows();
    std::vector<std::size_t> ids;
    std::vector<Index> widths;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw ContractViolation("concat_cols: row counts differ");
        ids.push_back(p.id);
        widths.push_back(p.cols());
    }
    return parts[0].tape->record(
        "concat_cols", parts,
        [=](const Tape& t) -> Matrix {
            Index total = 0;
            for (auto w : widths) total += w;
            Matrix out(rows, total);
            Index off = 0;
            for (std::size_t k = 0; k < ids.size(); ++k) {
                out.middleCols(off, widths[k]) = t.value(ids[k]);
                off += widths[k];
            }
            return out;
        },
        [=](Tape& t, const Matrix& g) {
            Index off = 0;
            for (std::size_t k = 0; k < ids.size(); ++k) {
                if (t.requires_grad(ids[k])) t.accumulate_expr(ids[k], g.middleCols(off, widths[k]));
                off += widths[k];
            }
        });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ContractViolation("concat_rows: no operands");
    const auto cols = parts[0].cols();
    std::vector<std::size_t> ids;
    std::vector<Index> heights;
    for (const auto& p : parts) {
        if (p.cols() != cols) throw ContractViolation("concat_rows: column counts differ");
        ids.push_back(p.id);
        heights.push_back(p.rows());
    }
    return parts[0].tape->record(
        "concat_rows", parts,
        [=](const Tape& t) -> Matrix {
            Index total = 0;
            for (auto h : heights) total += h;
            Matrix out(total, cols);
            Index off = 0;
            for (std::size_t k = 0; k < ids.size(); ++k) {
                out.middleRows(off, heights[k]) = t.value(ids[k]);
                off += heights[k];
            }
            return out;
        },
        [=](Tape& t, const Matrix& g) {
            Index off = 0;
            for (std::size_t k = 0; k < ids.size(); ++k) {
                if (t.requires_grad(ids[k])) t.accumulate_expr(ids[k], g.middleRows(off, heights[k]));
                off += heights[k];
            }
        });
}

Var slice_rows(Var a, Index start, Index count) {
    if (start < 0 || count < 0 || start + count > a.rows()) throw ContractViolation("slice_rows: out of range");
    const auto ia = a.id;
    const auto rows = a.rows(), cols = a.cols();
    return a.tape->record(
        "slice_rows", {a}, [=](const Tape& t) -> Matrix { return t.value(ia).middleRows(start, count); },
        [=](Tape& t, const Matrix& g) {
            Matrix full = Matrix::Zero(rows, cols);
            full.middleRows(start, count) = g;
            t.accumulate(ia, full);
        });
}

Var gather_rows(Var a, std::vector<Index> rows) {
    for (auto r : rows)
        if (r < 0 || r >= a.rows()) throw ContractViolation("gather_rows: index out of range");
    const auto ia = a.id;
    auto idx = std::make_shared<const std::vector<Index>>(std::move(rows));
    return a.tape->record(
        "gather_rows", {a},
        [=](const Tape& t) -> Matrix {
            const auto& v = t.value(ia);
            Matrix out(static_cast<Index>(idx->size()), v.cols());
            for (std::size_t k = 0; k < idx->size(); ++k) out.row(static_cast<Index>(k)) = v.row((*idx)[k]);
            return out;
        },
        [=](Tape& t, const Matrix& g) {
            auto& buf = t.grad_buffer(ia);
            for (std::size_t k = 0; k < idx->size(); ++k) buf.row((*idx)[k]) += g.row(static_cast<Index>(k));
        });
}

Var dropout(Var a, Scalar rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw ContractViolation("dropout: rate must be in [0, 1)");
    if (rate == 0.0) return a;
    auto keep = std::make_shared<Matrix>(a.rows(), a.cols());
    for (Index k = 0; k < keep->size(); ++k) keep->data()[k] = rng.uniform() < rate ? 0.0 : 1.0 / (1.0 - rate);
    const auto ia = a.id;
    return a.tape->record(
        "dropout", {a}, [=](const Tape& t) -> Matrix { return t.value(ia).cwiseProduct(*keep); },
        [=](Tape& t, const Matrix& g) { t.accumulate_expr(ia, g.cwiseProduct(*keep)); });
}

}  // namespace ssin::num
