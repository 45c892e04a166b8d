#include "ssin/numcore/tape.hpp"

#include "ssin/error.hpp"

namespace ssin::num {

Var Tape::constant(Matrix value) {
    if (!all_finite(value)) throw NumericFault("constant");
    Node n;
    n.op = "constant";
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

Var Tape::leaf(Matrix value) {
    if (!all_finite(value)) throw NumericFault("leaf");
    Node n;
    n.op = "leaf";
    n.value = std::move(value);
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

Var Tape::record(const char* op, std::vector<Var> inputs, ForwardFn forward, BackwardFn backward) {
    bool needs = false;
    for (const auto& in : inputs) {
        if (in.tape != this) throw ContractViolation(std::string(op) + ": operand from another tape");
        needs = needs || nodes_[in.id].requires_grad;
    }
    Node n;
    n.op = op;
    n.value = forward(*this);
    if (!all_finite(n.value)) throw NumericFault(op);
    n.requires_grad = needs;
    n.forward = std::move(forward);
    if (needs) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

Matrix Tape::grad(Var v) const {
    const auto& n = nodes_.at(v.id);
    if (n.has_grad) return n.grad;
    return Matrix::Zero(n.value.rows(), n.value.cols());
}

void Tape::accumulate(std::size_t id, const Matrix& g) { accumulate_expr(id, g); }

Matrix& Tape::grad_buffer(std::size_t id) {
    auto& n = nodes_[id];
    if (!n.has_grad) {
        n.grad.setZero(n.value.rows(), n.value.cols());
        n.has_grad = true;
    }
    return n.grad;
}

void Tape::zero_grads() {
    for (auto& n : nodes_) {
        n.has_grad = false;
        n.grad.resize(0, 0);
    }
}

void Tape::backward(Var loss) {
    const auto& v = value(loss.id);
    if (v.rows() != 1 || v.cols() != 1) throw ContractViolation("backward: loss must be a scalar");
    backward(loss, Matrix::Ones(1, 1));
}

void Tape::backward(Var out, const Matrix& seed) {
    if (out.tape != this) throw ContractViolation("backward: variable from another tape");
    const auto& v = value(out.id);
    if (seed.rows() != v.rows() || seed.cols() != v.cols()) {
        throw ContractViolation("backward: seed shape mismatch");
    }
    zero_grads();
    auto& n = nodes_[out.id];
    if (!n.requires_grad) return;
    n.grad = seed;
    n.has_grad = true;
    run_backward(out.id);
}

void Tape::run_backward(std::size_t from) {
    for (std::size_t k = from + 1; k-- > 0;) {
        auto& n = nodes_[k];
        if (!n.has_grad || !n.backward) continue;
        if (!all_finite(n.grad)) throw NumericFault(n.op + " (backward)");
        // Copy: the rule may grow other buffers but never this node's.
        const Matrix g = n.grad;
        n.backward(*this, g);
    }
}

bool Tape::replay_matches() const {
    for (const auto& n : nodes_) {
        if (!n.forward) continue;
        const Matrix again = n.forward(*this);
        if (again.rows() != n.value.rows() || again.cols() != n.value.cols()) return false;
        for (Index i = 0; i < again.size(); ++i) {
            if (again.data()[i] != n.value.data()[i]) return false;
        }
    }
    return true;
}

}  // namespace ssin::num
