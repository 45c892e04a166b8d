#ifndef SSIN_NUMCORE_TAPE_HPP
#define SSIN_NUMCORE_TAPE_HPP

#include <cstddef>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace ssin::num {

using Scalar = double;
using Index = Eigen::Index;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

class Tape;

// x * 0 is 0 for finite x and NaN otherwise, and the vectorized sum carries
// the NaN through; cheaper than a per-element classification.
template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
    return !std::isnan((m.derived().array() * Scalar(0)).sum());
}

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Matrix& value() const;
    Index rows() const { return value().rows(); }
    Index cols() const { return value().cols(); }
};

// Reverse-mode tape over dense row-major matrices. Every recorded op keeps its
// forward rule so the whole tape can be replayed; replay must reproduce the
// recorded values bit for bit.
class Tape {
public:
    using ForwardFn = std::function<Matrix(const Tape&)>;
    // Receives the gradient of the node and accumulates into its inputs.
    using BackwardFn = std::function<void(Tape&, const Matrix& grad)>;

    Var constant(Matrix value);
    Var leaf(Matrix value);  // trainable; collects a gradient

    Var record(const char* op, std::vector<Var> inputs, ForwardFn forward, BackwardFn backward);

    const Matrix& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

    // Gradient of the last backward pass; zeros when the node was not reached.
    Matrix grad(Var v) const;
    void accumulate(std::size_t id, const Matrix& g);
    template <typename Expr>
    void accumulate_expr(std::size_t id, const Expr& g) {
        auto& n = nodes_[id];
        if (!n.requires_grad) return;
        if (!n.has_grad) {
            n.grad = g;
            n.has_grad = true;
        } else {
            n.grad += g;
        }
    }
    // Direct access to a node's gradient buffer, zero-initialized on first use.
    Matrix& grad_buffer(std::size_t id);

    // `loss` must be 1x1.
    void backward(Var loss);
    // Seeds d(out) with an explicit gradient; used to chain tapes together.
    void backward(Var out, const Matrix& seed);

    // Recomputes every recorded op in order and reports whether the values
    // match the recorded ones exactly.
    bool replay_matches() const;

    std::size_t size() const { return nodes_.size(); }
    // Id the next recorded node will receive; lets a backward rule refer to
    // its own output value.
    std::size_t next_id() const { return nodes_.size(); }
    const std::string& op_name(std::size_t id) const { return nodes_[id].op; }

private:
    struct Node {
        std::string op;
        Matrix value;
        Matrix grad;
        bool has_grad = false;
        bool requires_grad = false;
        ForwardFn forward;
        BackwardFn backward;
    };

    void zero_grads();
    void run_backward(std::size_t from);

    std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape->value(id); }

}  // namespace ssin::num

#endif  // SSIN_NUMCORE_TAPE_HPP
