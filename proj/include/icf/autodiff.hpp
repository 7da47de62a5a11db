#pragma once

// Tape-based reverse-mode automatic differentiation.
//
// A Tape records every operation applied to its Vars in creation order, which
// is a topological order of the computation graph. backward() walks the tape
// once in reverse; a tape can be differentiated only once, so each training
// step records a fresh tape.

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "icf/kernels.hpp"
#include "icf/tensor.hpp"

namespace icf::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;

    Tape& tape() const { return *tape_; }
    std::size_t index() const { return index_; }
    bool valid() const { return tape_ != nullptr; }

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const;

private:
    friend class Tape;
    Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

    Tape* tape_ = nullptr;
    std::size_t index_ = 0;
};

class TapeError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class Tape {
public:
    /// Back-propagates the node's output gradient into its inputs' gradients.
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Differentiable input (a parameter or anything else we want d/dx of).
    Var leaf(Tensor value);
    /// Input that never receives a gradient.
    Var constant(Tensor value);

    /// Records an operation node. `backward` may be empty when no input
    /// requires a gradient.
    Var record(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

    const Tensor& value(Var v) const { return nodes_.at(v.index()).value; }
    bool requires_grad(Var v) const { return nodes_.at(v.index()).requires_grad; }
    const char* op(Var v) const { return nodes_.at(v.index()).op; }

    /// d(root)/d(v) after backward(); zeros for nodes that do not require a
    /// gradient or do not influence the root. Throws before backward().
    const Tensor& grad(Var v) const;

    /// Reverse pass from a single-element root. Throws TapeError on a
    /// non-scalar root or when the tape was already differentiated.
    void backward(Var root);

    bool consumed() const { return consumed_; }
    std::size_t size() const { return nodes_.size(); }

    // Accessors used by operation backward functions.
    const Tensor& node_value(std::size_t i) const { return nodes_[i].value; }
    const Tensor& node_grad(std::size_t i) const { return nodes_[i].grad; }
    Tensor& input_grad(std::size_t self, std::size_t which);
    bool input_requires_grad(std::size_t self, std::size_t which) const;
    const Tensor& input_value(std::size_t self, std::size_t which) const;

private:
    struct Node {
        const char* op;
        Tensor value;
        mutable Tensor grad;
        std::vector<std::size_t> inputs;
        bool requires_grad = false;
        BackwardFn backward;
    };

    Var make(Node node);
    void check_owner(Var v) const;

    std::vector<Node> nodes_;
    bool consumed_ = false;
};

// ---------------------------------------------------------------------------
// Operations. All operands must live on the same tape.

Var matmul(Var a, Var b);
Var conv2d(Var input, Var kernels, std::size_t stride = 1, kernels::Padding padding = kernels::Padding::same);
Var conv2d_transpose(Var input, Var kernels, std::size_t stride = 1,
                     kernels::Padding padding = kernels::Padding::same);

enum class Activation { relu, tanh, identity };
Activation parse_activation(const std::string& text);
const char* to_string(Activation a);

Var activation(Activation kind, Var x);
Var relu(Var x);
Var tanh(Var x);

/// Numerically stable softmax / log-softmax of a rank-1 tensor.
Var softmax(Var z);
Var log_softmax(Var z);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// a / b with b a single-element tensor.
Var div_scalar(Var a, Var b);
/// Adds a per-channel bias [C] to a [C x H x W] tensor.
Var add_channel_bias(Var x, Var bias);
Var scale(Var x, double factor);
Var add_constant(Var x, double c);
Var abs(Var x);
Var log(Var x);
/// max(x, floor) elementwise; zero gradient where the floor is active.
Var max_floor(Var x, double floor);
Var sum(Var x);
Var square_norm(Var x);
Var element(Var x, std::size_t i);
Var reshape(Var x, Shape shape);
Var flatten(Var x);

/// W [out x in] applied to x [in] plus b [out].
Var linear(Var weight, Var x, Var bias);
/// Same without the bias.
Var linear(Var weight, Var x);

}  // namespace icf::ad
