#include "icf/trainer.hpp"

#include <cmath>
#include <sstream>

#include "icf/io.hpp"

namespace icf::train {

using ad::Tape;
using ad::Var;
using model::Bound;
using model::Group;
namespace select = model::select;

const char* to_string(Estimator e) { return e == Estimator::exact ? "exact" : "reinforce"; }

Estimator parse_estimator(const std::string& text) {
    if (text == "exact") return Estimator::exact;
    if (text == "reinforce") return Estimator::reinforce;
    throw std::invalid_argument("unknown estimator '" + text + "' (expected exact|reinforce)");
}

void TrainConfig::validate() const {
    if (!(lr_encoder > 0.0 && lr_decoder > 0.0 && lr_policy > 0.0))
        throw std::invalid_argument("learning rates must be positive");
    if (reinforce_samples == 0) throw std::invalid_argument("reinforce_samples must be positive");
    if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    if (eval_interval == 0) throw std::invalid_argument("eval_interval must be positive");
    if (heldout_size == 0) throw std::invalid_argument("heldout_size must be positive");
}

double entropy(const std::vector<double>& probs) {
    double h = 0.0;
    for (double p : probs)
        if (p > 0.0) h -= p * std::log(p);
    return h;
}

namespace {

/// params[i] += step * d(root)/d(params[i]) for every leaf bound by `b`.
void apply_gradient(model::ParameterSet& params, const Bound& b, const Tape& tape, double step) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!b[i].requires_grad()) continue;
        const Tensor& g = tape.grad(b[i]);
        Tensor& v = params[i].value;
        for (std::size_t j = 0; j < v.size(); ++j) v[j] += step * g[j];
    }
}

Var mean_of(const std::vector<Var>& terms) {
    Var total = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) total = ad::add(total, terms[i]);
    return terms.size() == 1 ? total : ad::scale(total, 1.0 / static_cast<double>(terms.size()));
}

Var batch_reconstruction_loss(const model::Model& m, const Bound& b, const std::vector<env::GridState>& batch) {
    std::vector<Var> losses;
    for (const auto& s : batch) losses.push_back(objective::reconstruction_loss(m, b, s));
    return mean_of(losses);
}

struct PolicyObjective {
    Var surrogate;          // differentiate this
    double expected = 0.0;  // batch mean of sum_a pi_k(a|s) reward(s, a, k)
    double entropy = 0.0;   // batch mean entropy of pi_k(.|s)
};

/// Objective for policy k on a batch. With the exact estimator the surrogate
/// is the enumerated expectation itself; with REINFORCE it is
/// mean_i [R(a_i) + stop_grad(R(a_i)) log pi_k(a_i|s)], a_i ~ pi_k(.|s), whose
/// gradient is the pathwise term plus the score-function term.
PolicyObjective policy_objective(const model::Model& m, const Bound& b,
                                 const std::vector<objective::Transitions>& batch, std::size_t k,
                                 const objective::SelectivityConfig& sel, Estimator estimator, std::size_t samples,
                                 Rng& rng, const objective::ExtrinsicReward& extrinsic) {
    PolicyObjective out;
    std::vector<Var> terms;
    for (const auto& t : batch) {
        const auto e = objective::encode_transitions(m, b, t);
        Var probs = ad::softmax(e.logits[k]);
        const auto rewards = objective::action_rewards(e, t, k, sel, extrinsic);
        const std::vector<double> p = probs.value().values();
        for (std::size_t a = 0; a < rewards.size(); ++a) out.expected += p[a] * rewards[a].value().item();
        out.entropy += entropy(p);

        if (estimator == Estimator::exact) {
            std::vector<Var> weighted;
            for (std::size_t a = 0; a < rewards.size(); ++a)
                weighted.push_back(ad::mul(ad::element(probs, a), rewards[a]));
            Var total = weighted.front();
            for (std::size_t a = 1; a < weighted.size(); ++a) total = ad::add(total, weighted[a]);
            terms.push_back(total);
        } else {
            Var logp = ad::log_softmax(e.logits[k]);
            std::vector<Var> draws;
            for (std::size_t i = 0; i < samples; ++i) {
                const std::size_t a = model::sample_categorical(p, rng);
                const double r = rewards[a].value().item();
                draws.push_back(ad::add(rewards[a], ad::scale(ad::element(logp, a), r)));
            }
            terms.push_back(mean_of(draws));
        }
    }
    const double n = static_cast<double>(batch.size());
    out.expected /= n;
    out.entropy /= n;
    out.surrogate = mean_of(terms);
    return out;
}

std::vector<Tensor> policy_gradients(const model::Model& m, const Bound& b, const Tape& tape, std::size_t k) {
    std::vector<Tensor> grads;
    for (std::size_t i = 0; i < m.parameters().size(); ++i) {
        const auto& p = m.parameters()[i];
        if (p.group == Group::policy && p.policy == k) grads.push_back(tape.grad(b[i]));
    }
    return grads;
}

bool unchanged(const env::GridState& a, const env::GridState& b) {
    return a.row == b.row && a.col == b.col && a.color == b.color;
}

class StepDivergence : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void check_finite(double value, const char* what) {
    if (!std::isfinite(value)) throw StepDivergence(std::string(what) + " is not finite");
}

StepRecord step_impl(model::Model& m, const env::GridWorld& world, const std::vector<env::GridState>& batch,
                     const TrainConfig& config, const objective::SelectivityConfig& sel, Rng& rng,
                     const objective::ExtrinsicReward& extrinsic) {
    auto& params = m.parameters();
    StepRecord rec;
    rec.entropy.assign(m.num_policies(), 0.0);

    // Reconstruction: encoder, then decoder on the updated encoder.
    {
        Tape tape;
        Bound b(tape, params, select::group(Group::encoder));
        Var loss = batch_reconstruction_loss(m, b, batch);
        rec.recon_loss = loss.value().item();
        check_finite(rec.recon_loss, "reconstruction loss");
        tape.backward(loss);
        apply_gradient(params, b, tape, -config.lr_encoder);
    }
    {
        Tape tape;
        Bound b(tape, params, select::group(Group::decoder));
        Var loss = batch_reconstruction_loss(m, b, batch);
        tape.backward(loss);
        apply_gradient(params, b, tape, -config.lr_decoder);
    }

    std::vector<objective::Transitions> transitions;
    for (const auto& s : batch) {
        transitions.push_back(objective::enumerate_transitions(world, s));
        for (const auto& next : transitions.back().next) rec.blocked_transitions += unchanged(s, next) ? 1 : 0;
    }

    const std::size_t K = m.num_policies();
    const auto run_policy_line = [&](std::size_t k) {
        Tape tape;
        Bound b(tape, params, select::policy(k));
        auto obj = policy_objective(m, b, transitions, k, sel, config.estimator, config.reinforce_samples, rng, extrinsic);
        rec.entropy[k] = obj.entropy;
        if (sel.lambda != 0.0) {
            tape.backward(obj.surrogate);
            apply_gradient(params, b, tape, config.lr_policy * sel.lambda);
        }
    };

    if (sel.lambda == 0.0) {
        // Both policy lines vanish; only record the objective and entropies.
        for (std::size_t k = 0; k < K; ++k) {
            Tape tape;
            Bound b(tape, params, select::none());
            auto obj = policy_objective(m, b, transitions, k, sel, Estimator::exact, 1, rng, extrinsic);
            rec.disent_term += obj.expected;
            rec.entropy[k] = obj.entropy;
        }
    } else if (config.aggregate_policy_updates) {
        Tape tape;
        Bound b(tape, params, select::group(Group::encoder));
        std::vector<Var> per_policy;
        for (std::size_t k = 0; k < K; ++k) {
            auto obj = policy_objective(m, b, transitions, k, sel, config.estimator, config.reinforce_samples, rng,
                                        extrinsic);
            rec.disent_term += obj.expected;
            per_policy.push_back(obj.surrogate);
        }
        Var total = per_policy.front();
        for (std::size_t k = 1; k < K; ++k) total = ad::add(total, per_policy[k]);
        tape.backward(total);
        apply_gradient(params, b, tape, config.lr_encoder * sel.lambda);
        for (std::size_t k = 0; k < K; ++k) run_policy_line(k);
    } else {
        for (std::size_t k = 0; k < K; ++k) {
            {
                Tape tape;
                Bound b(tape, params, select::group(Group::encoder));
                auto obj = policy_objective(m, b, transitions, k, sel, config.estimator, config.reinforce_samples,
                                            rng, extrinsic);
                rec.disent_term += obj.expected;
                tape.backward(obj.surrogate);
                apply_gradient(params, b, tape, config.lr_encoder * sel.lambda);
            }
            run_policy_line(k);
        }
    }

    check_finite(rec.disent_term, "disentanglement objective");
    if (!params.all_finite()) throw StepDivergence("a parameter became non-finite");
    return rec;
}

}  // namespace

StepRecord train_step_on(model::Model& m, const env::GridWorld& world, const std::vector<env::GridState>& batch,
                         const TrainConfig& config, const objective::SelectivityConfig& sel, Rng& rng,
                         const objective::ExtrinsicReward& extrinsic) {
    try {
        return step_impl(m, world, batch, config, sel, rng, extrinsic);
    } catch (const StepDivergence& e) {
        throw DivergenceError(0, e.what());
    }
}

StepRecord train_step(model::Model& m, const env::GridWorld& world, const TrainConfig& config,
                      const objective::SelectivityConfig& sel, Rng& rng, const objective::ExtrinsicReward& extrinsic) {
    std::vector<env::GridState> batch;
    for (std::size_t i = 0; i < config.batch_size; ++i) batch.push_back(world.reset(rng));
    return train_step_on(m, world, batch, config, sel, rng, extrinsic);
}

std::vector<Tensor> reinforce_gradient(const model::Model& m, const env::GridState& s, std::size_t k,
                                       const env::GridWorld& world, const objective::SelectivityConfig& sel,
                                       std::size_t n_samples, Rng& rng, const objective::ExtrinsicReward& extrinsic) {
    if (n_samples == 0) throw std::invalid_argument("reinforce_gradient: n_samples must be positive");
    Tape tape;
    Bound b(tape, m.parameters(), select::policy(k));
    const auto t = objective::enumerate_transitions(world, s);
    const auto e = objective::encode_transitions(m, b, t);
    const auto rewards = objective::action_rewards(e, t, k, sel, extrinsic);
    Var logp = ad::log_softmax(e.logits.at(k));
    std::vector<double> probs(logp.value().size());
    for (std::size_t a = 0; a < probs.size(); ++a) probs[a] = std::exp(logp.value()[a]);
    std::vector<Var> terms;
    for (std::size_t i = 0; i < n_samples; ++i) {
        const std::size_t a = model::sample_categorical(probs, rng);
        terms.push_back(ad::scale(ad::element(logp, a), rewards[a].value().item()));
    }
    tape.backward(mean_of(terms));
    return policy_gradients(m, b, tape, k);
}

std::vector<Tensor> exact_policy_gradient(const model::Model& m, const env::GridState& s, std::size_t k,
                                          const env::GridWorld& world, const objective::SelectivityConfig& sel,
                                          const objective::ExtrinsicReward& extrinsic) {
    Tape tape;
    Bound b(tape, m.parameters(), select::policy(k));
    const auto t = objective::enumerate_transitions(world, s);
    const auto e = objective::encode_transitions(m, b, t);
    tape.backward(objective::expected_reward(e, t, k, sel, extrinsic));
    return policy_gradients(m, b, tape, k);
}

double mean_reconstruction_loss(const model::Model& m, const std::vector<env::GridState>& states) {
    double total = 0.0;
    for (const auto& s : states) {
        const Tensor recon = model::reconstruct(m, s.observation);
        double sq = 0.0;
        for (std::size_t i = 0; i < recon.size(); ++i) {
            const double d = s.observation[i] - recon[i];
            sq += d * d;
        }
        total += 0.5 * sq;
    }
    return total / static_cast<double>(states.size());
}

std::vector<env::GridState> heldout_states(const env::GridWorld& world, std::size_t count, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<env::GridState> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(world.reset(rng));
    return out;
}

std::string TrainLog::to_csv(std::size_t num_policies) const {
    std::ostringstream os;
    os << "step,recon_loss,disent_term,heldout_recon,blocked";
    for (std::size_t k = 0; k < num_policies; ++k) os << ",entropy_" << k;
    os << '\n';
    for (const auto& r : records) {
        os << r.step << ',' << format_double(r.recon_loss) << ',' << format_double(r.disent_term) << ','
           << format_double(r.heldout_recon) << ',' << r.blocked_transitions;
        for (double h : r.entropy) os << ',' << format_double(h);
        os << '\n';
    }
    return os.str();
}

bool TrainLog::heldout_smoothed_nonincreasing(std::size_t window) const {
    // Records are spaced by the eval interval; group consecutive records whose
    // steps fall in the same window.
    std::vector<double> means;
    std::size_t current = static_cast<std::size_t>(-1), count = 0;
    double acc = 0.0;
    for (const auto& r : records) {
        const std::size_t w = (r.step - 1) / window;
        if (w != current && count) {
            means.push_back(acc / static_cast<double>(count));
            acc = 0.0;
            count = 0;
        }
        current = w;
        acc += r.heldout_recon;
        ++count;
    }
    if (count) means.push_back(acc / static_cast<double>(count));
    for (std::size_t i = 1; i < means.size(); ++i)
        if (means[i] > means[i - 1]) return false;
    return true;
}

TrainResult train(const TrainConfig& config, const objective::SelectivityConfig& sel,
                  const model::ModelConfig& model_config, const env::EnvConfig& env_config, const TrainHooks& hooks) {
    config.validate();
    sel.validate();
    const env::GridWorld world(env_config);

    Rng init_rng(config.seed);
    TrainResult result{model::make_model(model_config, world.observation_shape(), world.num_actions(), init_rng), {}};
    model::Model& m = *result.model;

    std::seed_seq step_seed{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                            static_cast<std::uint32_t>(env_config.seed),
                            static_cast<std::uint32_t>(env_config.seed >> 32)};
    Rng rng(step_seed);
    const auto heldout = heldout_states(world, config.heldout_size, env_config.seed ^ 0x9e3779b97f4a7c15ull);

    const auto start = std::chrono::steady_clock::now();
    LogRecord pending;
    std::size_t in_interval = 0;
    for (std::size_t t = 1; t <= config.steps; ++t) {
        StepRecord rec;
        try {
            rec = train_step(m, world, config, sel, rng, hooks.extrinsic);
        } catch (const DivergenceError& e) {
            throw DivergenceError(t, e.detail());
        }
        pending.recon_loss += rec.recon_loss;
        pending.disent_term += rec.disent_term;
        pending.blocked_transitions += rec.blocked_transitions;
        if (pending.entropy.empty()) pending.entropy.assign(rec.entropy.size(), 0.0);
        for (std::size_t k = 0; k < rec.entropy.size(); ++k) pending.entropy[k] += rec.entropy[k];
        ++in_interval;

        if (t % config.eval_interval == 0 || t == config.steps) {
            const double n = static_cast<double>(in_interval);
            pending.step = t;
            pending.recon_loss /= n;
            pending.disent_term /= n;
            for (double& h : pending.entropy) h /= n;
            pending.heldout_recon = mean_reconstruction_loss(m, heldout);
            pending.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            result.log.records.push_back(pending);
            pending = LogRecord{};
            in_interval = 0;
            if (hooks.on_eval) hooks.on_eval(t, m, result.log);
        }
    }
    return result;
}

}  // namespace icf::train
