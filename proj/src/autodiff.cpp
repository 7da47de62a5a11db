#include "icf/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace icf::ad {

const Tensor& Var::value() const { return tape_->value(*this); }
bool Var::requires_grad() const { return tape_->requires_grad(*this); }

Var Tape::make(Node node) {
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

void Tape::check_owner(Var v) const {
    if (&v.tape() != this || v.index() >= nodes_.size()) throw TapeError("variable belongs to a different tape");
}

Var Tape::leaf(Tensor value) { return make(Node{"leaf", std::move(value), {}, {}, true, {}}); }

Var Tape::constant(Tensor value) { return make(Node{"constant", std::move(value), {}, {}, false, {}}); }

Var Tape::record(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
    Node node{op, std::move(value), {}, {}, false, {}};
    node.inputs.reserve(inputs.size());
    for (const Var& v : inputs) {
        check_owner(v);
        node.inputs.push_back(v.index());
        node.requires_grad = node.requires_grad || nodes_[v.index()].requires_grad;
    }
    if (node.requires_grad) node.backward = std::move(backward);
    return make(std::move(node));
}

const Tensor& Tape::grad(Var v) const {
    check_owner(v);
    if (!consumed_) throw TapeError("grad() requested before backward()");
    const Node& n = nodes_[v.index()];
    if (n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape(), 0.0);
    return n.grad;
}

void Tape::backward(Var root) {
    check_owner(root);
    if (consumed_) throw TapeError("backward() called twice on the same tape; record a fresh tape");
    if (nodes_[root.index()].value.size() != 1)
        throw TapeError("backward() needs a scalar root, got shape " + format_shape(nodes_[root.index()].value.shape()));
    consumed_ = true;
    for (Node& n : nodes_)
        if (n.requires_grad) n.grad = Tensor(n.value.shape(), 0.0);
    if (!nodes_[root.index()].requires_grad) nodes_[root.index()].grad = Tensor(nodes_[root.index()].value.shape(), 0.0);
    nodes_[root.index()].grad[0] = 1.0;
    for (std::size_t i = root.index() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.requires_grad && n.backward) n.backward(*this, i);
    }
}

Tensor& Tape::input_grad(std::size_t self, std::size_t which) { return nodes_[nodes_[self].inputs[which]].grad; }

bool Tape::input_requires_grad(std::size_t self, std::size_t which) const {
    return nodes_[nodes_[self].inputs[which]].requires_grad;
}

const Tensor& Tape::input_value(std::size_t self, std::size_t which) const {
    return nodes_[nodes_[self].inputs[which]].value;
}

namespace {

void require_same_tape(Var a, Var b) {
    if (&a.tape() != &b.tape()) throw TapeError("operands live on different tapes");
}

void require_same_shape(const char* op, Var a, Var b) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + format_shape(a.shape()) + " vs " + format_shape(b.shape()));
}

template <class Fn>
Var unary(const char* op, Var x, Fn&& value_fn, Tape::BackwardFn backward) {
    Tensor out = x.value();
    for (double& v : out.data()) v = value_fn(v);
    return x.tape().record(op, std::move(out), {x}, std::move(backward));
}

}  // namespace

Var matmul(Var a, Var b) {
    require_same_tape(a, b);
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
        throw ShapeError("matmul: cannot multiply " + format_shape(sa) + " by " + format_shape(sb));
    const std::size_t m = sa[0], k = sa[1], n = sb[1];
    Tensor out(Shape{m, n});
    kernels::omp::matmul(a.value().data(), b.value().data(), out.data(), m, k, n);
    return a.tape().record("matmul", std::move(out), {a, b}, [m, k, n](Tape& t, std::size_t self) {
        const Tensor& dc = t.node_grad(self);
        if (t.input_requires_grad(self, 0))
            kernels::omp::matmul_grad_a(dc.data(), t.input_value(self, 1).data(), t.input_grad(self, 0).data(), m, k, n);
        if (t.input_requires_grad(self, 1))
            kernels::omp::matmul_grad_b(t.input_value(self, 0).data(), dc.data(), t.input_grad(self, 1).data(), m, k, n);
    });
}

Var conv2d(Var input, Var kernels, std::size_t stride, kernels::Padding padding) {
    require_same_tape(input, kernels);
    const kernels::ConvGeometry g = kernels::conv_geometry(input.shape(), kernels.shape(), stride, padding);
    Tensor out(Shape{g.out_channels, g.out_h, g.out_w});
    kernels::omp::conv2d(g, input.value().data(), kernels.value().data(), out.data());
    return input.tape().record("conv2d", std::move(out), {input, kernels}, [g](Tape& t, std::size_t self) {
        const Tensor& dout = t.node_grad(self);
        if (t.input_requires_grad(self, 0))
            kernels::omp::conv2d_grad_input(g, dout.data(), t.input_value(self, 1).data(), t.input_grad(self, 0).data());
        if (t.input_requires_grad(self, 1))
            kernels::omp::conv2d_grad_kernels(g, t.input_value(self, 0).data(), dout.data(),
                                              t.input_grad(self, 1).data());
    });
}

Var conv2d_transpose(Var input, Var kernels, std::size_t stride, kernels::Padding padding) {
    require_same_tape(input, kernels);
    const kernels::ConvGeometry g = kernels::conv_transpose_geometry(input.shape(), kernels.shape(), stride, padding);
    Tensor out(Shape{g.in_channels, g.in_h, g.in_w}, 0.0);
    kernels::omp::conv2d_grad_input(g, input.value().data(), kernels.value().data(), out.data());
    return input.tape().record("conv2d_transpose", std::move(out), {input, kernels}, [g](Tape& t, std::size_t self) {
        const Tensor& dout = t.node_grad(self);
        if (t.input_requires_grad(self, 0)) {
            Tensor tmp(t.input_value(self, 0).shape());
            kernels::omp::conv2d(g, dout.data(), t.input_value(self, 1).data(), tmp.data());
            Tensor& din = t.input_grad(self, 0);
            for (std::size_t i = 0; i < din.size(); ++i) din[i] += tmp[i];
        }
        if (t.input_requires_grad(self, 1))
            kernels::omp::conv2d_grad_kernels(g, dout.data(), t.input_value(self, 0).data(),
                                              t.input_grad(self, 1).data());
    });
}

Activation parse_activation(const std::string& text) {
    if (text == "relu") return Activation::relu;
    if (text == "tanh") return Activation::tanh;
    if (text == "identity") return Activation::identity;
    throw std::invalid_argument("unknown activation '" + text + "' (expected relu|tanh|identity)");
}

const char* to_string(Activation a) {
    switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
    }
    return "?";
}

Var activation(Activation kind, Var x) {
    switch (kind) {
    case Activation::relu: return relu(x);
    case Activation::tanh: return tanh(x);
    case Activation::identity: return x;
    }
    return x;
}

Var relu(Var x) {
    return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; }, [](Tape& t, std::size_t self) {
        const Tensor& x = t.input_value(self, 0);
        const Tensor& dy = t.node_grad(self);
        Tensor& dx = t.input_grad(self, 0);
        for (std::size_t i = 0; i < dx.size(); ++i)
            if (x[i] > 0.0) dx[i] += dy[i];
    });
}

Var tanh(Var x) {
    return unary("tanh", x, [](double v) { return std::tanh(v); }, [](Tape& t, std::size_t self) {
        const Tensor& y = t.node_value(self);
        const Tensor& dy = t.node_grad(self);
        Tensor& dx = t.input_grad(self, 0);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * (1.0 - y[i] * y[i]);
    });
}

Var softmax(Var z) {
    if (z.shape().size() != 1) throw ShapeError("softmax expects a vector, got " + format_shape(z.shape()));
    Tensor out = z.value();
    const double mx = *std::max_element(out.data().begin(), out.data().end());
    double total = 0.0;
    for (double& v : out.data()) total += (v = std::exp(v - mx));
    for (double& v : out.data()) v /= total;
    return z.tape().record("softmax", std::move(out), {z}, [](Tape& t, std::size_t self) {
        const Tensor& y = t.node_value(self);
        const Tensor& dy = t.node_grad(self);
        double dot = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) dot += dy[i] * y[i];
        Tensor& dz = t.input_grad(self, 0);
        for (std::size_t i = 0; i < y.size(); ++i) dz[i] += y[i] * (dy[i] - dot);
    });
}

Var log_softmax(Var z) {
    if (z.shape().size() != 1) throw ShapeError("log_softmax expects a vector, got " + format_shape(z.shape()));
    Tensor out = z.value();
    const double mx = *std::max_element(out.data().begin(), out.data().end());
    double total = 0.0;
    for (double v : out.data()) total += std::exp(v - mx);
    const double lse = mx + std::log(total);
    for (double& v : out.data()) v -= lse;
    return z.tape().record("log_softmax", std::move(out), {z}, [](Tape& t, std::size_t self) {
        const Tensor& y = t.node_value(self);
        const Tensor& dy = t.node_grad(self);
        double total = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) total += dy[i];
        Tensor& dz = t.input_grad(self, 0);
        for (std::size_t i = 0; i < y.size(); ++i) dz[i] += dy[i] - std::exp(y[i]) * total;
    });
}

Var add(Var a, Var b) {
    require_same_tape(a, b);
    require_same_shape("add", a, b);
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return a.tape().record("add", std::move(out), {a, b}, [](Tape& t, std::size_t self) {
        const Tensor& dy = t.node_grad(self);
        for (std::size_t which = 0; which < 2; ++which) {
            if (!t.input_requires_grad(self, which)) continue;
            Tensor& d = t.input_grad(self, which);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
        }
    });
}

Var sub(Var a, Var b) {
    require_same_tape(a, b);
    require_same_shape("sub", a, b);
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return a.tape().record("sub", std::move(out), {a, b}, [](Tape& t, std::size_t self) {
        const Tensor& dy = t.node_grad(self);
        if (t.input_requires_grad(self, 0)) {
            Tensor& d = t.input_grad(self, 0);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
        }
        if (t.input_requires_grad(self, 1)) {
            Tensor& d = t.input_grad(self, 1);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] -= dy[i];
        }
    });
}

Var mul(Var a, Var b) {
    require_same_tape(a, b);
    require_same_shape("mul", a, b);
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return a.tape().record("mul", std::move(out), {a, b}, [](Tape& t, std::size_t self) {
        const Tensor& dy = t.node_grad(self);
        for (std::size_t which = 0; which < 2; ++which) {
            if (!t.input_requires_grad(self, which)) continue;
            const Tensor& other = t.input_value(self, 1 - which);
            Tensor& d = t.input_grad(self, which);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * other[i];
        }
    });
}

Var div_scalar(Var a, Var b) {
    require_same_tape(a, b);
    if (b.value().size() != 1) throw ShapeError("div_scalar: divisor must have one element, got " + format_shape(b.shape()));
    const double denom = b.value()[0];
    Tensor out = a.value();
    for (double& v : out.data()) v /= denom;
    return a.tape().record("div_scalar", std::move(out), {a, b}, [](Tape& t, std::size_t self) {
        const Tensor& dy = t.node_grad(self);
        const Tensor& av = t.input_value(self, 0);
        const double denom = t.input_value(self, 1)[0];
        if (t.input_requires_grad(self, 0)) {
            Tensor& d = t.input_grad(self, 0);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] / denom;
        }
        if (t.input_requires_grad(self, 1)) {
            double acc = 0.0;
            for (std::size_t i = 0; i < av.size(); ++i) acc += dy[i] * av[i];
            t.input_grad(self, 1)[0] -= acc / (denom * denom);
        }
    });
}

Var add_channel_bias(Var x, Var bias) {
    require_same_tape(x, bias);
    const Shape& sx = x.shape();
    if (sx.size() != 3 || bias.shape() != Shape{sx[0]})
        throw ShapeError("add_channel_bias: cannot add bias " + format_shape(bias.shape()) + " to " + format_shape(sx));
    const std::size_t plane = sx[1] * sx[2];
    Tensor out = x.value();
    const Tensor& bv = bias.value();
    for (std::size_t c = 0; c < sx[0]; ++c)
        for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] += bv[c];
    return x.tape().record("add_channel_bias", std::move(out), {x, bias}, [plane](Tape& t, std::size_t self) {
        const Tensor& dy = t.node_grad(self);
        if (t.input_requires_grad(self, 0)) {
            Tensor& d = t.input_grad(self, 0);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
        }
        if (t.input_requires_grad(self, 1)) {
            Tensor& db = t.input_grad(self, 1);
            for (std::size_t c = 0; c < db.size(); ++c) {
                double acc = 0.0;
                for (std::size_t i = 0; i < plane; ++i) acc += dy[c * plane + i];
                db[c] += acc;
            }
        }
    });
}

Var scale(Var x, double factor) {
    return unary("scale", x, [factor](double v) { return v * factor; }, [factor](Tape& t, std::size_t self) {
        const Tensor& dy = t.node_grad(self);
        Tensor& dx = t.input_grad(self, 0);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * factor;
    });
}

Var add_constant(Var x, double c) {
    return unary("add_constant", x, [c](double v) { return v + c; }, [](Tape& t, std::size_t self) {
        const Tensor& dy = t.node_grad(self);
        Tensor& dx = t.input_grad(self, 0);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
    });
}

Var abs(Var x) {
    return unary("abs", x, [](double v) { return std::fabs(v); }, [](Tape& t, std::size_t self) {
        const Tensor& xv = t.input_value(self, 0);
        const Tensor& dy = t.node_grad(self);
        Tensor& dx = t.input_grad(self, 0);
        for (std::size_t i = 0; i < dx.size(); ++i) {
            if (xv[i] > 0.0)
                dx[i] += dy[i];
            else if (xv[i] < 0.0)
                dx[i] -= dy[i];
        }
    });
}

Var log(Var x) {
    return unary("log", x, [](double v) { return std::log(v); }, [](Tape& t, std::size_t self) {
        const Tensor& xv = t.input_value(self, 0);
        const Tensor& dy = t.node_grad(self);
        Tensor& dx = t.input_grad(self, 0);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] / xv[i];
    });
}

Var max_floor(Var x, double floor) {
    return unary("max_floor", x, [floor](double v) { return v > floor ? v : floor; },
                 [floor](Tape& t, std::size_t self) {
                     const Tensor& xv = t.input_value(self, 0);
                     const Tensor& dy = t.node_grad(self);
                     Tensor& dx = t.input_grad(self, 0);
                     for (std::size_t i = 0; i < dx.size(); ++i)
                         if (xv[i] > floor) dx[i] += dy[i];
                 });
}

Var sum(Var x) {
    double total = 0.0;
    for (double v : x.value().data()) total += v;
    return x.tape().record("sum", Tensor::scalar(total), {x}, [](Tape& t, std::size_t self) {
        const double dy = t.node_grad(self)[0];
        for (double& d : t.input_grad(self, 0).data()) d += dy;
    });
}

Var square_norm(Var x) {
    double total = 0.0;
    for (double v : x.value().data()) total += v * v;
    return x.tape().record("square_norm", Tensor::scalar(total), {x}, [](Tape& t, std::size_t self) {
        const double dy = t.node_grad(self)[0];
        const Tensor& xv = t.input_value(self, 0);
        Tensor& dx = t.input_grad(self, 0);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += 2.0 * dy * xv[i];
    });
}

Var element(Var x, std::size_t i) {
    if (i >= x.value().size())
        throw ShapeError("element: index " + std::to_string(i) + " out of range for " + format_shape(x.shape()));
    return x.tape().record("element", Tensor::scalar(x.value()[i]), {x}, [i](Tape& t, std::size_t self) {
        t.input_grad(self, 0)[i] += t.node_grad(self)[0];
    });
}

Var reshape(Var x, Shape shape) {
    Tensor out = x.value().reshaped(std::move(shape));
    return x.tape().record("reshape", std::move(out), {x}, [](Tape& t, std::size_t self) {
        const Tensor& dy = t.node_grad(self);
        Tensor& dx = t.input_grad(self, 0);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
    });
}

Var flatten(Var x) { return reshape(x, Shape{x.value().size()}); }

Var linear(Var weight, Var x) {
    const Shape sw = weight.shape();
    if (sw.size() != 2 || x.shape() != Shape{sw[1]})
        throw ShapeError("linear: weight " + format_shape(sw) + " cannot be applied to " + format_shape(x.shape()));
    Var col = reshape(x, Shape{sw[1], 1});
    return reshape(matmul(weight, col), Shape{sw[0]});
}

Var linear(Var weight, Var x, Var bias) { return add(linear(weight, x), bias); }

}  // namespace icf::ad
