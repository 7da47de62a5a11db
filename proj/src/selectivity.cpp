#include "icf/selectivity.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace icf::objective {

using ad::Var;

const char* to_string(Mode m) { return m == Mode::directed ? "directed" : "undirected"; }

Mode parse_mode(const std::string& text) {
    if (text == "directed") return Mode::directed;
    if (text == "undirected") return Mode::undirected;
    throw std::invalid_argument("unknown selectivity mode '" + text + "' (expected directed|undirected)");
}

void SelectivityConfig::validate() const {
    if (!(denom_epsilon > 0.0) || !(log_floor_epsilon > 0.0))
        throw std::invalid_argument("selectivity epsilons must be positive");
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be non-negative");
}

double selectivity(const Tensor& h, const Tensor& h_next, std::size_t k, const SelectivityConfig& config) {
    if (h.shape() != h_next.shape())
        throw ShapeError("selectivity: " + format_shape(h.shape()) + " vs " + format_shape(h_next.shape()));
    if (k >= h.size()) throw std::out_of_range("selectivity: feature index out of range");
    double total = 0.0;
    for (std::size_t j = 0; j < h.size(); ++j) total += std::fabs(h_next[j] - h[j]);
    const double delta = h_next[k] - h[k];
    const double num = config.mode == Mode::directed ? delta : std::fabs(delta);
    return num / (total + config.denom_epsilon);
}

Var selectivity(Var h, Var h_next, std::size_t k, const SelectivityConfig& config) {
    Var delta = ad::sub(h_next, h);
    Var magnitude = ad::abs(delta);
    Var denom = ad::add_constant(ad::sum(magnitude), config.denom_epsilon);
    Var num = ad::element(config.mode == Mode::directed ? delta : magnitude, k);
    return ad::div_scalar(num, denom);
}

double disentanglement_reward(double sel, const SelectivityConfig& config) {
    if (config.mode == Mode::directed) return std::log(std::max(1.0 + sel, config.log_floor_epsilon));
    return std::log(sel + config.log_floor_epsilon);
}

Var disentanglement_reward(Var sel, const SelectivityConfig& config) {
    if (config.mode == Mode::directed) return ad::log(ad::max_floor(ad::add_constant(sel, 1.0), config.log_floor_epsilon));
    return ad::log(ad::add_constant(sel, config.log_floor_epsilon));
}

Transitions enumerate_transitions(const env::GridWorld& world, const env::GridState& s) {
    Transitions t{s, {}};
    t.next.reserve(world.num_actions());
    for (std::size_t a = 0; a < world.num_actions(); ++a) t.next.push_back(world.step(s, a));
    return t;
}

EncodedTransitions encode_transitions(const model::Model& m, const model::Bound& p, const Transitions& t) {
    ad::Tape& tape = p.tape();
    model::Encoded at_s = m.encode_with_policies(p, tape.constant(t.state.observation));
    EncodedTransitions e{at_s.features, std::move(at_s.logits), {}};
    e.h_next.reserve(t.next.size());
    for (const auto& s_next : t.next) e.h_next.push_back(m.encode(p, tape.constant(s_next.observation)));
    return e;
}

std::vector<Var> action_rewards(const EncodedTransitions& e, const Transitions& t, std::size_t k,
                                const SelectivityConfig& config, const ExtrinsicReward& extrinsic) {
    std::vector<Var> rewards;
    rewards.reserve(e.h_next.size());
    for (std::size_t a = 0; a < e.h_next.size(); ++a) {
        Var r = disentanglement_reward(selectivity(e.h, e.h_next[a], k, config), config);
        if (extrinsic) r = ad::add_constant(r, extrinsic(t.state, a, t.next[a]));
        rewards.push_back(r);
    }
    return rewards;
}

Var expected_reward(const EncodedTransitions& e, const Transitions& t, std::size_t k, const SelectivityConfig& config,
                    const ExtrinsicReward& extrinsic) {
    Var probs = ad::softmax(e.logits.at(k));
    const auto rewards = action_rewards(e, t, k, config, extrinsic);
    Var total;
    for (std::size_t a = 0; a < rewards.size(); ++a) {
        Var term = ad::mul(ad::element(probs, a), rewards[a]);
        total = total.valid() ? ad::add(total, term) : term;
    }
    return total;
}

Var reconstruction_loss(const model::Model& m, const model::Bound& p, const env::GridState& s) {
    Var obs = p.tape().constant(s.observation);
    Var recon = m.decode(p, m.encode(p, obs));
    return ad::scale(ad::square_norm(ad::sub(obs, recon)), 0.5);
}

ObjectiveTerms joint_objective(const model::Model& m, const model::Bound& p, const env::GridWorld& world,
                               const env::GridState& s, const SelectivityConfig& config,
                               const ExtrinsicReward& extrinsic) {
    const Transitions t = enumerate_transitions(world, s);
    const EncodedTransitions e = encode_transitions(m, p, t);
    Var obs = p.tape().constant(s.observation);
    Var recon_loss = ad::scale(ad::square_norm(ad::sub(obs, m.decode(p, e.h))), 0.5);
    Var disent;
    for (std::size_t k = 0; k < m.num_policies(); ++k) {
        Var term = expected_reward(e, t, k, config, extrinsic);
        disent = disent.valid() ? ad::add(disent, term) : term;
    }
    Var total = config.lambda == 0.0 ? recon_loss : ad::sub(recon_loss, ad::scale(disent, config.lambda));
    return {recon_loss, disent, total};
}

ObjectiveValue joint_objective(const model::Model& m, const env::GridWorld& world, const env::GridState& s,
                               const SelectivityConfig& config) {
    ad::Tape tape;
    model::Bound p(tape, m.parameters(), model::select::none());
    const auto terms = joint_objective(m, p, world, s, config);
    return {terms.recon_loss.value().item(), terms.disent_term.value().item(), terms.total.value().item()};
}

}  // namespace icf::objective
