#include <gtest/gtest.h>

#include <cmath>

#include "icf/checkpoint.hpp"
#include "icf/trainer.hpp"
#include "support.hpp"

namespace {

using namespace icf;
using namespace icf::train;
using model::Bound;
using model::Group;
namespace select = model::select;

env::EnvConfig small_env(env::Variant v = env::Variant::basic) {
    env::EnvConfig c;
    c.grid_height = c.grid_width = 5;
    c.variant = v;
    return c;
}

model::ModelConfig small_separate(std::size_t n = 3) {
    model::ModelConfig c;
    c.variant = model::Variant::separate;
    c.num_features = n;
    c.hidden_units = 6;
    return c;
}

model::ModelConfig small_shared() {
    model::ModelConfig c;
    c.conv_channels = 3;
    c.fc_units = 8;
    return c;
}

std::unique_ptr<model::Model> make(const model::ModelConfig& mc, const env::GridWorld& w, std::uint64_t seed) {
    Rng rng(seed);
    auto m = model::make_model(mc, w.observation_shape(), w.num_actions(), rng);
    std::mt19937_64 r2(seed + 100);
    for (auto& p : m->parameters())
        if (p.group == Group::policy) p.value = icf::test::random_tensor(p.value.shape(), r2, -0.5, 0.5);
    return m;
}

double max_abs_diff(const model::ParameterSet& a, const model::ParameterSet& b) {
    double d = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a[i].value.size(); ++j) d = std::max(d, std::fabs(a[i].value[j] - b[i].value[j]));
    return d;
}

// One gradient step on `selected` parameters of `root(bound)`.
template <class F>
void sgd(model::Model& m, const Bound::Selector& selected, double step, F root) {
    ad::Tape t;
    Bound b(t, m.parameters(), selected);
    t.backward(root(b));
    for (std::size_t i = 0; i < b.size(); ++i) {
        if (!b[i].requires_grad()) continue;
        auto& v = m.parameters()[i].value;
        const auto& g = t.grad(b[i]);
        for (std::size_t j = 0; j < v.size(); ++j) v[j] += step * g[j];
    }
}

// Reference composition of the sequential update lines for a single state.
void reference_step(model::Model& m, const env::GridWorld& w, const env::GridState& s, const TrainConfig& tc,
                    const objective::SelectivityConfig& sc) {
    auto recon = [&](const Bound& b) { return objective::reconstruction_loss(m, b, s); };
    sgd(m, select::group(Group::encoder), -tc.lr_encoder, recon);
    sgd(m, select::group(Group::decoder), -tc.lr_decoder, recon);
    const auto t = objective::enumerate_transitions(w, s);
    for (std::size_t k = 0; k < m.num_policies(); ++k) {
        auto expected = [&](const Bound& b) {
            return objective::expected_reward(objective::encode_transitions(m, b, t), t, k, sc);
        };
        sgd(m, select::group(Group::encoder), tc.lr_encoder * sc.lambda, expected);
        sgd(m, select::policy(k), tc.lr_policy * sc.lambda, expected);
    }
}

TEST(TrainStep, MatchesSequentialComposition) {
    for (auto mc : {small_separate(), small_shared()}) {
        const env::GridWorld w(small_env());
        auto a = make(mc, w, 1);
        auto b = a->clone();
        TrainConfig tc;
        tc.lr_encoder = 0.05;
        tc.lr_decoder = 0.03;
        tc.lr_policy = 0.2;
        objective::SelectivityConfig sc;
        sc.lambda = 0.5;
        Rng rng(2);
        for (const auto& s : {w.make_state(1, 2, 1.0), w.make_state(0, 3, 1.0), w.make_state(3, 0, 1.0)}) {
            train_step_on(*a, w, {s}, tc, sc, rng);
            reference_step(*b, w, s, tc, sc);
        }
        EXPECT_LT(max_abs_diff(a->parameters(), b->parameters()), 1e-13);
        EXPECT_GT(max_abs_diff(a->parameters(), make(mc, w, 1)->parameters()), 1e-4);
    }
}

TEST(TrainStep, DiffersFromSimultaneousUpdate) {
    // A single joint gradient step on every parameter is not what the step does.
    const env::GridWorld w(small_env());
    auto a = make(small_separate(), w, 3);
    auto b = a->clone();
    TrainConfig tc;
    tc.lr_encoder = tc.lr_decoder = tc.lr_policy = 0.1;
    objective::SelectivityConfig sc;
    sc.lambda = 0.5;
    Rng rng(4);
    const auto s = w.make_state(2, 2, 1.0);
    train_step_on(*a, w, {s}, tc, sc, rng);
    sgd(*b, select::all(), -0.1, [&](const Bound& p) { return objective::joint_objective(*b, p, w, s, sc).total; });
    EXPECT_GT(max_abs_diff(a->parameters(), b->parameters()), 1e-8);
}

TEST(TrainStep, ZeroLambdaLeavesPoliciesAlone) {
    const env::GridWorld w(small_env());
    auto a = make(small_separate(), w, 5);
    auto b = a->clone();
    const auto before = a->parameters();
    TrainConfig tc;
    objective::SelectivityConfig sc;
    sc.lambda = 0.0;
    Rng rng(6);
    const auto s = w.make_state(1, 1, 1.0);
    const auto rec = train_step_on(*a, w, {s}, tc, sc, rng);
    auto recon = [&](const Bound& p) { return objective::reconstruction_loss(*b, p, s); };
    sgd(*b, select::group(Group::encoder), -tc.lr_encoder, recon);
    sgd(*b, select::group(Group::decoder), -tc.lr_decoder, recon);
    EXPECT_EQ(max_abs_diff(a->parameters(), b->parameters()), 0.0);
    for (std::size_t i = 0; i < before.size(); ++i)
        if (before[i].group == Group::policy) EXPECT_EQ(before[i].value, a->parameters()[i].value);
    EXPECT_TRUE(std::isfinite(rec.disent_term));
    EXPECT_EQ(rec.entropy.size(), 3u);
}

TEST(TrainStep, ReportsLossBeforeUpdate) {
    const env::GridWorld w(small_env());
    auto m = make(small_separate(), w, 7);
    const auto s = w.make_state(0, 0, 1.0);
    const double before = mean_reconstruction_loss(*m, {s});
    Rng rng(8);
    const auto rec = train_step_on(*m, w, {s}, TrainConfig{}, objective::SelectivityConfig{}, rng);
    EXPECT_DOUBLE_EQ(rec.recon_loss, before);
    // Corner: up and left are blocked.
    EXPECT_EQ(rec.blocked_transitions, 2u);
}

TEST(TrainStep, AggregatedVariantUsesSummedObjective) {
    const env::GridWorld w(small_env());
    auto a = make(small_separate(2), w, 9);
    auto b = a->clone();
    TrainConfig tc;
    tc.aggregate_policy_updates = true;
    objective::SelectivityConfig sc;
    sc.lambda = 0.4;
    Rng rng(10);
    const auto s = w.make_state(2, 1, 1.0);
    train_step_on(*a, w, {s}, tc, sc, rng);

    auto recon = [&](const Bound& p) { return objective::reconstruction_loss(*b, p, s); };
    sgd(*b, select::group(Group::encoder), -tc.lr_encoder, recon);
    sgd(*b, select::group(Group::decoder), -tc.lr_decoder, recon);
    const auto t = objective::enumerate_transitions(w, s);
    sgd(*b, select::group(Group::encoder), tc.lr_encoder * sc.lambda, [&](const Bound& p) {
        const auto e = objective::encode_transitions(*b, p, t);
        return ad::add(objective::expected_reward(e, t, 0, sc), objective::expected_reward(e, t, 1, sc));
    });
    for (std::size_t k = 0; k < 2; ++k)
        sgd(*b, select::policy(k), tc.lr_policy * sc.lambda, [&](const Bound& p) {
            return objective::expected_reward(objective::encode_transitions(*b, p, t), t, k, sc);
        });
    EXPECT_LT(max_abs_diff(a->parameters(), b->parameters()), 1e-14);
}

TEST(TrainStep, BatchAveragesGradients) {
    const env::GridWorld w(small_env());
    auto a = make(small_separate(), w, 11);
    auto b = a->clone();
    TrainConfig tc;
    objective::SelectivityConfig sc;
    sc.lambda = 0.0;
    Rng rng(12);
    const std::vector<env::GridState> batch{w.make_state(0, 0, 1.0), w.make_state(3, 2, 1.0)};
    const auto rec = train_step_on(*a, w, batch, tc, sc, rng);
    auto recon = [&](const Bound& p) {
        return ad::scale(ad::add(objective::reconstruction_loss(*b, p, batch[0]),
                                 objective::reconstruction_loss(*b, p, batch[1])),
                         0.5);
    };
    sgd(*b, select::group(Group::encoder), -tc.lr_encoder, recon);
    sgd(*b, select::group(Group::decoder), -tc.lr_decoder, recon);
    EXPECT_LT(max_abs_diff(a->parameters(), b->parameters()), 1e-15);
    EXPECT_EQ(rec.blocked_transitions, 3u);
}

TEST(Reinforce, MeanWithinStandardErrorsOfExact) {
    const env::GridWorld w(small_env(env::Variant::extended));
    auto m = make(small_separate(2), w, 13);
    objective::SelectivityConfig sc;
    const auto s = w.make_state(1, 1, 0.5);
    const auto exact = exact_policy_gradient(*m, s, 1, w, sc);
    Rng rng(14);
    const std::size_t n = 4000;
    std::vector<std::vector<double>> draws;
    for (std::size_t i = 0; i < n; ++i) draws.push_back(reinforce_gradient(*m, s, 1, w, sc, 1, rng)[0].values());
    const std::size_t dim = exact[0].size();
    std::size_t outside = 0;
    for (std::size_t j = 0; j < dim; ++j) {
        double mean = 0, sq = 0;
        for (const auto& d : draws) mean += d[j];
        mean /= n;
        for (const auto& d : draws) sq += (d[j] - mean) * (d[j] - mean);
        const double se = std::sqrt(sq / (n - 1) / n);
        if (std::fabs(mean - exact[0][j]) > 3 * se + 1e-12) ++outside;
    }
    // A 3 SE band misses ~0.3% of components by chance.
    EXPECT_LE(outside, dim / 50 + 1);
}

TEST(Reinforce, ConstantRewardHasZeroMean) {
    const env::GridWorld w(small_env());
    auto m = make(small_separate(2), w, 15);
    objective::SelectivityConfig sc;
    // The extrinsic term cancels the intrinsic reward exactly, leaving 1.
    auto t = objective::enumerate_transitions(w, w.make_state(2, 2, 1.0));
    std::vector<double> intrinsic;
    {
        ad::Tape tape;
        Bound b(tape, m->parameters(), select::none());
        const auto e = objective::encode_transitions(*m, b, t);
        for (auto& r : objective::action_rewards(e, t, 0, sc)) intrinsic.push_back(r.value().item());
    }
    objective::ExtrinsicReward flatten = [&](const env::GridState&, std::size_t a, const env::GridState&) {
        return 1.0 - intrinsic[a];
    };
    const auto exact = exact_policy_gradient(*m, t.state, 0, w, sc, flatten);
    for (double g : exact[0].values()) EXPECT_NEAR(g, 0.0, 1e-12);
    Rng rng(16);
    const std::size_t n = 3000;
    const auto dim = exact[0].size();
    std::vector<double> mean(dim, 0.0), sq(dim, 0.0);
    std::vector<std::vector<double>> draws;
    for (std::size_t i = 0; i < n; ++i) draws.push_back(reinforce_gradient(*m, t.state, 0, w, sc, 1, rng, flatten)[0].values());
    std::size_t outside = 0;
    for (std::size_t j = 0; j < dim; ++j) {
        for (const auto& d : draws) mean[j] += d[j] / n;
        for (const auto& d : draws) sq[j] += (d[j] - mean[j]) * (d[j] - mean[j]);
        const double se = std::sqrt(sq[j] / (n - 1) / n);
        if (std::fabs(mean[j]) > 3 * se + 1e-12) ++outside;
    }
    EXPECT_LE(outside, dim / 50 + 1);
}

TEST(Reinforce, StepTrainsWithoutDivergence) {
    const env::GridWorld w(small_env());
    auto m = make(small_shared(), w, 17);
    TrainConfig tc;
    tc.estimator = Estimator::reinforce;
    tc.reinforce_samples = 3;
    Rng rng(18);
    for (int i = 0; i < 20; ++i) train_step(*m, w, tc, objective::SelectivityConfig{}, rng);
    EXPECT_TRUE(m->parameters().all_finite());
    EXPECT_THROW(reinforce_gradient(*m, w.make_state(0, 0, 1.0), 0, w, {}, 0, rng), std::invalid_argument);
}

TEST(Train, DeterministicAndLogged) {
    TrainConfig tc;
    tc.steps = 25;
    tc.eval_interval = 10;
    tc.heldout_size = 8;
    tc.seed = 3;
    std::vector<std::size_t> seen;
    TrainHooks hooks;
    hooks.on_eval = [&](std::size_t step, const model::Model&, const TrainLog&) { seen.push_back(step); };
    auto a = train::train(tc, {}, small_separate(), small_env(), hooks);
    auto b = train::train(tc, {}, small_separate(), small_env());
    EXPECT_EQ(a.log.to_csv(3), b.log.to_csv(3));
    EXPECT_EQ(checkpoint::serialize(a.model->parameters()), checkpoint::serialize(b.model->parameters()));
    EXPECT_EQ(seen, (std::vector<std::size_t>{10, 20, 25}));
    ASSERT_EQ(a.log.records.size(), 3u);
    EXPECT_EQ(a.log.records.back().step, 25u);

    tc.seed = 4;
    auto c = train::train(tc, {}, small_separate(), small_env());
    EXPECT_NE(a.log.to_csv(3), c.log.to_csv(3));
}

TEST(Train, CsvLayout) {
    TrainLog log;
    LogRecord r;
    r.step = 5;
    r.recon_loss = 0.5;
    r.disent_term = -0.25;
    r.heldout_recon = 0.125;
    r.blocked_transitions = 3;
    r.entropy = {1.0, 0.5};
    log.records.push_back(r);
    EXPECT_EQ(log.to_csv(2), "step,recon_loss,disent_term,heldout_recon,blocked,entropy_0,entropy_1\n"
                             "5,0.5,-0.25,0.125,3,1,0.5\n");
}

TEST(Train, SmoothedHeldoutCheck) {
    TrainLog log;
    for (std::size_t s = 1; s <= 6; ++s) {
        LogRecord r;
        r.step = s * 500;
        r.heldout_recon = s == 3 ? 5.0 : 10.0 - static_cast<double>(s);
        log.records.push_back(r);
    }
    // Windows of 1000 steps: {9, 8}, {5, 6}, {5, 4}.
    EXPECT_TRUE(log.heldout_smoothed_nonincreasing(1000));
    EXPECT_FALSE(log.heldout_smoothed_nonincreasing(500));
}

TEST(Train, DivergenceIsReported) {
    TrainConfig tc;
    tc.steps = 50;
    tc.lr_encoder = tc.lr_decoder = 1e200;
    try {
        train::train(tc, {}, small_separate(), small_env());
        FAIL() << "expected divergence";
    } catch (const DivergenceError& e) {
        EXPECT_GE(e.step(), 1u);
        EXPECT_NE(std::string(e.what()).find("divergence at step"), std::string::npos);
    }
}

TEST(Train, WallStartsStayFinite) {
    auto ec = small_env();
    ec.start = env::StartMode::wall;
    TrainConfig tc;
    tc.steps = 40;
    tc.eval_interval = 20;
    tc.heldout_size = 4;
    objective::SelectivityConfig sc;
    sc.mode = objective::Mode::undirected;
    auto r = train::train(tc, sc, small_separate(), ec);
    EXPECT_TRUE(r.model->parameters().all_finite());
    std::size_t blocked = 0;
    for (const auto& rec : r.log.records) {
        blocked += rec.blocked_transitions;
        EXPECT_TRUE(std::isfinite(rec.disent_term));
        EXPECT_TRUE(std::isfinite(rec.recon_loss));
    }
    EXPECT_GE(blocked, 40u);
}

TEST(Train, ConfigValidation) {
    TrainConfig tc;
    EXPECT_NO_THROW(tc.validate());
    tc.lr_policy = 0.0;
    EXPECT_THROW(tc.validate(), std::invalid_argument);
    tc = TrainConfig{};
    tc.batch_size = 0;
    EXPECT_THROW(tc.validate(), std::invalid_argument);
    EXPECT_EQ(parse_estimator("reinforce"), Estimator::reinforce);
    EXPECT_THROW(parse_estimator("ppo"), std::invalid_argument);
}

TEST(Entropy, Values) {
    EXPECT_DOUBLE_EQ(entropy({1.0, 0.0}), 0.0);
    EXPECT_NEAR(entropy({0.25, 0.25, 0.25, 0.25}), std::log(4.0), 1e-15);
}

}  // namespace
