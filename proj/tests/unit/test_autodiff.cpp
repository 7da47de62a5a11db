#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "icf/autodiff.hpp"
#include "icf/grad_check.hpp"
#include "support.hpp"

namespace {

using namespace icf;
using namespace icf::ad;
using icf::test::random_tensor;

constexpr double eps = 1e-5;
constexpr double tol = 1e-4;

// Weighted sum so every output element gets a distinct upstream gradient.
Var probe(Tape& t, Var y) {
    const auto n = y.value().size();
    Tensor w(Shape{n});
    for (std::size_t i = 0; i < n; ++i) w[i] = 0.3 + 0.17 * static_cast<double>(i % 7) - 0.05 * static_cast<double>(i % 3);
    return sum(mul(flatten(y), t.constant(w)));
}

void check(const ScalarFunction& f, const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    for (int trial = 0; trial < 5; ++trial) {
        const Tensor x = random_tensor(shape, rng, lo, hi);
        EXPECT_LT(grad_check(f, x, eps), tol) << "trial " << trial;
    }
}

TEST(Tape, ValuesAndSimpleGradient) {
    Tape t;
    Var a = t.leaf(Tensor::vector({1.0, 2.0, 3.0}));
    Var b = t.constant(Tensor::vector({4.0, 5.0, 6.0}));
    Var y = sum(mul(a, b));
    EXPECT_DOUBLE_EQ(y.value().item(), 32.0);
    t.backward(y);
    EXPECT_EQ(t.grad(a).values(), (std::vector<double>{4.0, 5.0, 6.0}));
    EXPECT_EQ(t.grad(b).values(), (std::vector<double>{0.0, 0.0, 0.0}));
    EXPECT_FALSE(t.requires_grad(b));
}

TEST(Tape, FanOutAccumulates) {
    Tape t;
    Var x = t.leaf(Tensor::scalar(3.0));
    Var y = add(mul(x, x), scale(x, 2.0));  // x^2 + 2x
    t.backward(y);
    EXPECT_DOUBLE_EQ(t.grad(x).item(), 8.0);
}

TEST(Tape, MisuseThrows) {
    Tape t;
    Var x = t.leaf(Tensor::vector({1.0, 2.0}));
    EXPECT_THROW(t.grad(x), TapeError);
    EXPECT_THROW(t.backward(x), TapeError);
    Var y = sum(x);
    t.backward(y);
    EXPECT_TRUE(t.consumed());
    EXPECT_THROW(t.backward(y), TapeError);

    Tape other;
    Var z = other.leaf(Tensor::vector({1.0, 2.0}));
    EXPECT_THROW(add(x, z), std::exception);
}

TEST(Tape, ShapeErrors) {
    Tape t;
    Var a = t.leaf(Tensor(Shape{2, 3}));
    Var b = t.leaf(Tensor(Shape{2, 3}));
    EXPECT_THROW(matmul(a, b), ShapeError);
    EXPECT_THROW(add(a, t.leaf(Tensor(Shape{3}))), ShapeError);
    EXPECT_THROW(reshape(a, {4}), ShapeError);
    EXPECT_THROW(softmax(a), ShapeError);
}

TEST(Softmax, KnownValues) {
    Tape t;
    Var z = t.constant(Tensor::vector({0.0, std::log(2.0), std::log(5.0)}));
    const auto p = softmax(z).value().values();
    EXPECT_NEAR(p[0], 0.125, 1e-15);
    EXPECT_NEAR(p[1], 0.25, 1e-15);
    EXPECT_NEAR(p[2], 0.625, 1e-15);
    const auto lp = log_softmax(z).value().values();
    EXPECT_NEAR(lp[2], std::log(0.625), 1e-15);
}

TEST(Softmax, StableForLargeLogits) {
    Tape t;
    Var z = t.constant(Tensor::vector({1000.0, 1000.0, -1000.0}));
    const auto p = softmax(z).value().values();
    EXPECT_NEAR(p[0], 0.5, 1e-15);
    EXPECT_EQ(p[2], 0.0);
    const auto lp = log_softmax(z).value().values();
    EXPECT_NEAR(lp[2], -2000.0 - std::log(2.0), 1e-9);
    EXPECT_TRUE(std::isfinite(lp[2]));
}

TEST(Activation, ParseAndValues) {
    EXPECT_EQ(parse_activation("tanh"), Activation::tanh);
    EXPECT_THROW(parse_activation("gelu"), std::invalid_argument);
    Tape t;
    Var x = t.constant(Tensor::vector({-2.0, 0.5}));
    EXPECT_EQ(relu(x).value().values(), (std::vector<double>{0.0, 0.5}));
    EXPECT_EQ(activation(Activation::identity, x).value().values(), x.value().values());
    EXPECT_NEAR(tanh(x).value()[1], std::tanh(0.5), 1e-15);
}

TEST(MaxFloor, GradientOnlyAboveFloor) {
    Tape t;
    Var x = t.leaf(Tensor::vector({-1.0, 2.0}));
    Var y = sum(max_floor(x, 1e-8));
    EXPECT_DOUBLE_EQ(y.value().item(), 2.0 + 1e-8);
    t.backward(y);
    EXPECT_EQ(t.grad(x).values(), (std::vector<double>{0.0, 1.0}));
}

// Finite-difference checks, one per operation.

TEST(GradCheck, Matmul) {
    std::mt19937_64 rng(1);
    const Tensor b = random_tensor({4, 2}, rng);
    check([&](Tape& t, Var a) { return probe(t, matmul(a, t.constant(b))); }, {3, 4}, 10);
    const Tensor a = random_tensor({3, 4}, rng);
    check([&](Tape& t, Var x) { return probe(t, matmul(t.constant(a), x)); }, {4, 2}, 11);
}

TEST(GradCheck, Linear) {
    std::mt19937_64 rng(2);
    const Tensor w = random_tensor({3, 5}, rng), x = random_tensor({5}, rng), b = random_tensor({3}, rng);
    check([&](Tape& t, Var v) { return probe(t, linear(v, t.constant(x), t.constant(b))); }, {3, 5}, 12);
    check([&](Tape& t, Var v) { return probe(t, linear(t.constant(w), v, t.constant(b))); }, {5}, 13);
    check([&](Tape& t, Var v) { return probe(t, linear(t.constant(w), t.constant(x), v)); }, {3}, 14);
    check([&](Tape& t, Var v) { return probe(t, linear(t.constant(w), v)); }, {5}, 15);
}

TEST(GradCheck, Conv2d) {
    std::mt19937_64 rng(3);
    for (auto pad : {kernels::Padding::same, kernels::Padding::valid})
        for (std::size_t stride : {1u, 2u}) {
            const Tensor x = random_tensor({2, 6, 5}, rng), k = random_tensor({3, 2, 3, 3}, rng);
            check([&](Tape& t, Var v) { return probe(t, conv2d(v, t.constant(k), stride, pad)); }, {2, 6, 5}, 16);
            check([&](Tape& t, Var v) { return probe(t, conv2d(t.constant(x), v, stride, pad)); }, {3, 2, 3, 3}, 17);
        }
}

TEST(GradCheck, Conv2dTranspose) {
    std::mt19937_64 rng(4);
    for (auto pad : {kernels::Padding::same, kernels::Padding::valid}) {
        const Shape in{3, 3, 3};
        const Tensor x = random_tensor(in, rng), k = random_tensor({3, 2, 3, 3}, rng);
        check([&](Tape& t, Var v) { return probe(t, conv2d_transpose(v, t.constant(k), 2, pad)); }, in, 18);
        check([&](Tape& t, Var v) { return probe(t, conv2d_transpose(t.constant(x), v, 2, pad)); }, {3, 2, 3, 3},
              19);
    }
}

TEST(GradCheck, Elementwise) {
    std::mt19937_64 rng(5);
    const Tensor c = random_tensor({6}, rng);
    check([&](Tape& t, Var v) { return probe(t, add(v, t.constant(c))); }, {6}, 20);
    check([&](Tape& t, Var v) { return probe(t, sub(t.constant(c), v)); }, {6}, 21);
    check([&](Tape& t, Var v) { return probe(t, mul(v, v)); }, {6}, 22);
    check([&](Tape& t, Var v) { return probe(t, scale(v, -1.7)); }, {6}, 23);
    check([&](Tape& t, Var v) { return probe(t, add_constant(v, 0.4)); }, {6}, 24);
    check([&](Tape& t, Var v) { return probe(t, tanh(v)); }, {6}, 25);
    // Kinks at 0 are avoided by sampling away from them.
    check([&](Tape& t, Var v) { return probe(t, relu(v)); }, {6}, 26, 0.05, 1.0);
    check([&](Tape& t, Var v) { return probe(t, relu(scale(v, -1.0))); }, {6}, 27, 0.05, 1.0);
    check([&](Tape& t, Var v) { return probe(t, abs(v)); }, {6}, 28, 0.05, 1.0);
    check([&](Tape& t, Var v) { return probe(t, abs(scale(v, -1.0))); }, {6}, 29, 0.05, 1.0);
    check([&](Tape& t, Var v) { return probe(t, log(v)); }, {6}, 30, 0.2, 2.0);
    check([&](Tape& t, Var v) { return probe(t, max_floor(v, 0.1)); }, {6}, 31, 0.2, 2.0);
}

TEST(GradCheck, Reductions) {
    check([](Tape&, Var v) { return sum(v); }, {2, 3}, 32);
    check([](Tape&, Var v) { return square_norm(v); }, {2, 3}, 33);
    check([](Tape&, Var v) { return element(v, 4); }, {6}, 34);
    check([](Tape& t, Var v) { return probe(t, reshape(v, {3, 2})); }, {2, 3}, 35);
    check([](Tape& t, Var v) { return probe(t, flatten(v)); }, {2, 3, 2}, 36);
}

TEST(GradCheck, DivScalarBothOperands) {
    std::mt19937_64 rng(6);
    const Tensor num = random_tensor({4}, rng);
    check([&](Tape& t, Var v) { return probe(t, div_scalar(v, t.constant(Tensor::scalar(1.7)))); }, {4}, 37);
    check([&](Tape& t, Var v) { return probe(t, div_scalar(t.constant(num), v)); }, {1}, 38, 0.5, 2.0);
}

TEST(GradCheck, ChannelBias) {
    std::mt19937_64 rng(7);
    const Tensor x = random_tensor({3, 2, 2}, rng);
    check([&](Tape& t, Var v) { return probe(t, add_channel_bias(t.constant(x), v)); }, {3}, 39);
    const Tensor b = random_tensor({3}, rng);
    check([&](Tape& t, Var v) { return probe(t, add_channel_bias(v, t.constant(b))); }, {3, 2, 2}, 40);
}

TEST(GradCheck, SoftmaxFamily) {
    check([](Tape& t, Var v) { return probe(t, softmax(v)); }, {5}, 41, -3.0, 3.0);
    check([](Tape& t, Var v) { return probe(t, log_softmax(v)); }, {5}, 42, -3.0, 3.0);
}

TEST(GradCheck, Composite) {
    std::mt19937_64 rng(8);
    const Tensor w1 = random_tensor({4, 1, 3, 3}, rng), w2 = random_tensor({3, 4 * 5 * 5}, rng);
    check(
        [&](Tape& t, Var v) {
            Var h = tanh(conv2d(v, t.constant(w1), 1, kernels::Padding::same));
            Var z = linear(t.constant(w2), flatten(h));
            return sum(mul(softmax(z), log(add_constant(abs(z), 1e-3))));
        },
        {1, 5, 5}, 43);
}

TEST(GradCheck, RelativeErrorDefinition) {
    EXPECT_DOUBLE_EQ(relative_error(1.0, 1.0), 0.0);
    EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
    EXPECT_DOUBLE_EQ(relative_error(0.0, 0.0), 0.0);
    EXPECT_NEAR(relative_error(1e-12, 0.0), 1e-4, 1e-18);
}

}  // namespace
