#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "icf/environment.hpp"
#include "icf/grad_check.hpp"
#include "icf/model.hpp"
#include "support.hpp"

namespace {

using namespace icf;
using namespace icf::model;

ModelConfig small_shared() {
    ModelConfig c;
    c.conv_channels = 3;
    c.fc_units = 8;
    return c;
}

ModelConfig small_separate(std::size_t n = 3) {
    ModelConfig c;
    c.variant = Variant::separate;
    c.num_features = n;
    c.hidden_units = 6;
    return c;
}

double grad_norm(const ad::Tape& t, ad::Var v) {
    double s = 0;
    for (double g : t.grad(v).values()) s += g * g;
    return std::sqrt(s);
}

TEST(SharedModel, ShapesAndRanges) {
    Rng rng(1);
    env::GridWorld w(env::EnvConfig{});
    SharedModel m(small_shared(), w.observation_shape(), w.num_actions(), rng);
    EXPECT_EQ(m.num_features(), 4u);
    EXPECT_EQ(m.num_policies(), 4u);
    for (const auto& s : w.all_states()) {
        const Tensor h = encode(m, s.observation);
        ASSERT_EQ(h.shape(), Shape{4});
        for (double v : h.values()) ASSERT_LE(std::fabs(v), 1.0);
        for (std::size_t k = 0; k < 4; ++k) {
            const auto p = policy_probs(m, s.observation, k);
            ASSERT_EQ(p.size(), 4u);
            // Zero-initialized heads start uniform.
            for (double q : p) ASSERT_DOUBLE_EQ(q, 0.25);
        }
    }
    EXPECT_EQ(reconstruct(m, w.make_state(0, 0, 1.0).observation).shape(), w.observation_shape());
}

TEST(SharedModel, StridedGeometryMirrors) {
    Rng rng(2);
    auto c = small_shared();
    c.conv_stride = 2;
    SharedModel m(c, {1, 8, 8}, 4, rng);
    EXPECT_EQ(reconstruct(m, Tensor({1, 8, 8}, 0.5)).shape(), (Shape{1, 8, 8}));
    c.conv_padding = kernels::Padding::valid;
    EXPECT_THROW(SharedModel(c, {1, 8, 8}, 4, rng), ShapeError);
}

TEST(SharedModel, RejectsBadInputs) {
    Rng rng(3);
    SharedModel m(small_shared(), {1, 10, 10}, 4, rng);
    ad::Tape t;
    Bound p(t, m.parameters(), select::none());
    EXPECT_THROW(m.encode(p, t.constant(Tensor({1, 9, 10}))), ShapeError);
    EXPECT_THROW(m.decode(p, t.constant(Tensor({5}))), ShapeError);
    EXPECT_THROW(m.policy_logits(p, t.constant(Tensor({1, 10, 10})), 4), std::out_of_range);
}

TEST(SharedModel, PolicyGradientIntoTrunkSwitch) {
    for (bool into : {true, false}) {
        Rng rng(4);
        auto c = small_shared();
        c.policy_grad_into_trunk = into;
        SharedModel m(c, {1, 10, 10}, 4, rng);
        // Distinct head rows so the logits depend on the trunk.
        for (auto& prm : m.parameters())
            if (prm.group == Group::policy)
                for (std::size_t i = 0; i < prm.value.size(); ++i) prm.value[i] = 0.03 * static_cast<double>(i % 7) - 0.1;
        env::GridWorld w(env::EnvConfig{});
        ad::Tape t;
        Bound p(t, m.parameters(), select::all());
        const auto e = m.encode_with_policies(p, t.constant(w.make_state(3, 3, 1.0).observation));
        t.backward(ad::sum(ad::mul(ad::softmax(e.logits[0]), t.constant(Tensor::vector({1, -1, 2, 0})))));
        const double g = grad_norm(t, p[m.parameters().index_of("encoder.conv1.weight")]);
        if (into)
            EXPECT_GT(g, 0.0);
        else
            EXPECT_EQ(g, 0.0);
    }
}

TEST(SeparateModel, ParameterGroupsAreDisjoint) {
    Rng rng(5);
    env::GridWorld w(env::EnvConfig{});
    SeparateModel m(small_separate(), w.observation_shape(), w.num_actions(), rng);
    std::set<std::string> names;
    for (const auto& prm : m.parameters()) names.insert(prm.name);
    EXPECT_EQ(names.size(), m.parameters().size());
    EXPECT_EQ(m.parameters().value("policy.2.theta").shape(), (Shape{4, 100}));

    ad::Tape t;
    Bound p(t, m.parameters(), select::all());
    const auto e = m.encode_with_policies(p, t.constant(w.make_state(1, 2, 1.0).observation));
    t.backward(ad::sum(ad::log_softmax(e.logits[1])));
    for (std::size_t i = 0; i < m.parameters().size(); ++i) {
        const auto& prm = m.parameters()[i];
        const bool own = prm.group == Group::policy && prm.policy == 1;
        if (!own) EXPECT_EQ(grad_norm(t, p[i]), 0.0) << prm.name;
    }
}

TEST(SeparateModel, FeatureRangeAndDecoderNonnegative) {
    Rng rng(6);
    env::EnvConfig ec;
    ec.variant = env::Variant::extended;
    env::GridWorld w(ec);
    SeparateModel m(small_separate(8), w.observation_shape(), w.num_actions(), rng);
    for (const auto& s : w.all_states()) {
        const Tensor h = encode(m, s.observation), r = reconstruct(m, s.observation);
        for (double v : h.values()) ASSERT_LE(std::fabs(v), 1.0);
        for (double v : r.values()) ASSERT_GE(v, 0.0);
    }
}

ad::Var model_loss(const Model& m, const Tensor& obs, ad::Tape& t, const Bound& p) {
    const auto e = m.encode_with_policies(p, t.constant(obs));
    ad::Var recon = ad::square_norm(ad::sub(ad::flatten(m.decode(p, e.features)), ad::flatten(t.constant(obs))));
    ad::Var pol = ad::sum(ad::mul(ad::softmax(e.logits[0]), t.constant(Tensor::vector({0.3, -1.0, 0.7, 0.2}))));
    return ad::add(recon, pol);
}

TEST(Model, GradientsMatchFiniteDifferences) {
    for (auto variant : {Variant::shared, Variant::separate}) {
        Rng rng(7);
        auto c = variant == Variant::shared ? small_shared() : small_separate();
        auto m = make_model(c, {1, 6, 6}, 4, rng);
        // Nonzero biases keep relu inputs off their kink at blank pixels.
        for (auto& prm : m->parameters())
            if (prm.group == Group::policy || prm.value.rank() == 1)
                for (std::size_t i = 0; i < prm.value.size(); ++i) prm.value[i] = 0.05 * static_cast<double>(i % 5) - 0.07;
        const Tensor obs = icf::test::pattern_tensor({1, 6, 6}, 5, 2, 7, 6.0);

        ad::Tape t;
        Bound p(t, m->parameters(), select::all());
        t.backward(model_loss(*m, obs, t, p));

        auto value_at = [&](std::size_t idx, std::size_t i, double delta) {
            auto copy = m->clone();
            copy->parameters()[idx].value[i] += delta;
            ad::Tape t2;
            Bound q(t2, copy->parameters(), select::none());
            return model_loss(*copy, obs, t2, q).value().item();
        };
        for (std::size_t idx = 0; idx < m->parameters().size(); ++idx) {
            const auto& g = t.grad(p[idx]);
            for (std::size_t i = 0; i < g.size(); i += 1 + g.size() / 7) {
                const double numeric = (value_at(idx, i, 1e-5) - value_at(idx, i, -1e-5)) / 2e-5;
                EXPECT_LT(ad::relative_error(g[i], numeric), 1e-4)
                    << to_string(variant) << " " << m->parameters()[idx].name << "[" << i << "]";
            }
        }
    }
}

TEST(Model, CloneIsIndependent) {
    Rng rng(8);
    auto m = make_model(small_separate(), {1, 4, 4}, 4, rng);
    auto c = m->clone();
    EXPECT_TRUE(c->parameters() == m->parameters());
    c->parameters()[0].value.fill(0.0);
    EXPECT_FALSE(c->parameters() == m->parameters());
}

TEST(Model, InitDeterministicPerSeed) {
    Rng a(9), b(9), c(10);
    auto m1 = make_model(small_shared(), {1, 10, 10}, 4, a);
    auto m2 = make_model(small_shared(), {1, 10, 10}, 4, b);
    auto m3 = make_model(small_shared(), {1, 10, 10}, 4, c);
    EXPECT_TRUE(m1->parameters() == m2->parameters());
    EXPECT_FALSE(m1->parameters() == m3->parameters());
}

TEST(Model, SelectorsBindLeavesAndConstants) {
    Rng rng(10);
    auto m = make_model(small_separate(), {1, 4, 4}, 4, rng);
    ad::Tape t;
    Bound p(t, m->parameters(), select::group(Group::decoder));
    for (std::size_t i = 0; i < p.size(); ++i)
        EXPECT_EQ(p[i].requires_grad(), m->parameters()[i].group == Group::decoder);
    ad::Tape t2;
    Bound q(t2, m->parameters(), select::policy(2));
    for (std::size_t i = 0; i < q.size(); ++i)
        EXPECT_EQ(q[i].requires_grad(), m->parameters()[i].name == "policy.2.theta");
}

TEST(Sampling, CategoricalFrequencies) {
    // Each count is binomial(n, p); allow 5 standard deviations.
    const std::vector<double> probs{0.1, 0.0, 0.6, 0.3};
    Rng rng(11);
    const int n = 100000;
    std::vector<int> counts(4, 0);
    for (int i = 0; i < n; ++i) ++counts[sample_categorical(probs, rng)];
    EXPECT_EQ(counts[1], 0);
    for (std::size_t a = 0; a < 4; ++a) {
        const double sd = std::sqrt(n * probs[a] * (1 - probs[a]));
        EXPECT_NEAR(counts[a], n * probs[a], 5 * sd + 1e-9) << "action " << a;
    }
}

TEST(Sampling, RoundingFallsBackToLastPositive) {
    Rng rng(12);
    const std::vector<double> probs{0.5, 0.5 - 1e-12, 0.0};
    for (int i = 0; i < 1000; ++i) ASSERT_NE(sample_categorical(probs, rng), 2u);
}

TEST(Variant, Parse) {
    EXPECT_EQ(parse_variant("separate"), Variant::separate);
    EXPECT_THROW(parse_variant("tied"), std::invalid_argument);
}

}  // namespace
