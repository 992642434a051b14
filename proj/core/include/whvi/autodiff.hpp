#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "whvi/tensor.hpp"

namespace whvi::ad {

// Trainable tensor that outlives any single tape. Its gradient accumulates
// across backward passes until zeroed (by the optimizer or Tape::reset()).
struct Parameter {
    Parameter() = default;
    Parameter(std::string name, Tensor value);

    std::string name;
    Tensor value;
    Tensor grad;

    std::size_t size() const noexcept { return value.size(); }
    void zero_grad() { grad.fill(0.0); }
};

class Tape;

// Handle to one node of a tape. Cheap to copy; only valid while the tape
// that produced it has not been reset.
class Variable {
public:
    Variable() = default;

    const Tensor& value() const;
    // Adjoint of the last backward() objective with respect to this node.
    const Tensor& grad() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t size() const { return value().size(); }

    Tape& tape() const;
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    friend class Tape;
    Variable(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

// Ordered record of executed operations.
//
// Nodes are appended as operations run, so inputs always precede outputs.
// backward() walks the record once in exact reverse order. A tape is used by
// one thread at a time.
class Tape {
public:
    using Adjoint = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Variable constant(Tensor value);
    Variable leaf(Parameter& param);

    // Append an operation result. `adjoint` receives the node id and pushes
    // the node's gradient into its inputs via accumulate(). Throws
    // NonFiniteError if `value` contains NaN or Inf.
    Variable record(const char* op, Tensor value, const std::vector<Variable>& inputs,
                    Adjoint adjoint);

    // Seed d(objective)/d(objective) = 1 and propagate. Parameter gradients
    // are accumulated (+=). If `visit_order` is given, the ids of nodes whose
    // adjoint rule ran are appended to it in visiting order.
    void backward(const Variable& objective, std::vector<std::size_t>* visit_order = nullptr);

    // Drop every node and zero the gradients of all parameters leafed here.
    void reset();

    std::size_t size() const noexcept { return nodes_.size(); }

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    const Tensor& grad(std::size_t id) const;
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    void accumulate(std::size_t id, const Tensor& g);

private:
    struct Node {
        const char* op = "";
        Tensor value;
        Tensor grad;
        bool has_grad = false;
        bool requires_grad = false;
        Parameter* param = nullptr;
        Adjoint adjoint;
    };

    Node& node_of(const Variable& v);

    std::deque<Node> nodes_;
    std::vector<Parameter*> params_;
};

// ---- elementwise, with broadcasting over leading dimensions ----------------
//
// For a binary op the smaller operand's shape must be a suffix of the larger
// one's (a scalar is the empty suffix). The smaller operand is repeated over
// the leading dimensions and its adjoint is summed back over them.

Variable add(const Variable& a, const Variable& b);
Variable sub(const Variable& a, const Variable& b);
Variable mul(const Variable& a, const Variable& b);
Variable div(const Variable& a, const Variable& b);

Variable add(const Variable& a, const Tensor& b);
Variable mul(const Variable& a, const Tensor& b);

Variable scale(const Variable& a, double c);
Variable add_scalar(const Variable& a, double c);
Variable neg(const Variable& a);

Variable relu(const Variable& a);
Variable exp(const Variable& a);
Variable log(const Variable& a);
Variable square(const Variable& a);
Variable sqrt(const Variable& a);
Variable cos(const Variable& a);

// ---- reductions and structure ----------------------------------------------

Variable sum(const Variable& a);
Variable mean(const Variable& a);
// Sum over the last axis: [..., n] -> [...].
Variable sum_last(const Variable& a);
Variable reshape(const Variable& a, Shape shape);
Variable transpose(const Variable& a);
// Swap the last two axes of a rank >= 2 tensor.
Variable transpose_last2(const Variable& a);
Variable matmul(const Variable& a, const Variable& b);

// Zero-pad (or keep) the last axis to `width` columns.
Variable pad_last(const Variable& a, std::size_t width);
// Columns [begin, end) of the last axis.
Variable slice_last(const Variable& a, std::size_t begin, std::size_t end);
// Concatenate along the last axis; leading shapes must agree.
Variable concat_last(const std::vector<Variable>& parts);

// Build a lower-triangular n x n matrix from its strict lower part
// (row-major packed, n(n-1)/2 entries) and its diagonal (n entries).
Variable lower_triangular(const Variable& strict_lower, const Variable& diagonal);

// 0.5 * sum_i [log(2 pi) + log_var_i + (y_i - mean_i)^2 / exp(log_var_i)].
// `log_var` broadcasts over the leading dimensions of `mean`.
Variable gaussian_nll(const Tensor& y, const Variable& mean, const Variable& log_var);

inline Variable operator+(const Variable& a, const Variable& b) { return add(a, b); }
inline Variable operator-(const Variable& a, const Variable& b) { return sub(a, b); }
inline Variable operator*(const Variable& a, const Variable& b) { return mul(a, b); }
inline Variable operator/(const Variable& a, const Variable& b) { return div(a, b); }
inline Variable operator*(double c, const Variable& a) { return scale(a, c); }
inline Variable operator-(const Variable& a) { return neg(a); }

}  // namespace whvi::ad
