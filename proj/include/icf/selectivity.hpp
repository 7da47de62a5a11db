#pragma once

// Selectivity of a latent feature under an action, the log-selectivity
// reward, and the joint reconstruction / disentanglement objective.
//
//   sel(s, a, k) = |h'_k - h_k| / (sum_j |h'_j - h_j| + eps)     undirected
//   sel(s, a, k) =  (h'_k - h_k) / (sum_j |h'_j - h_j| + eps)    directed
//
// with h = f(s), h' = f(s') and s' the (deterministic) successor of s under a.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "icf/autodiff.hpp"
#include "icf/environment.hpp"
#include "icf/model.hpp"

namespace icf::objective {

enum class Mode { undirected, directed };
const char* to_string(Mode m);
Mode parse_mode(const std::string& text);

struct SelectivityConfig {
    Mode mode = Mode::directed;
    double denom_epsilon = 1e-8;
    double log_floor_epsilon = 1e-8;
    double lambda = 0.1;

    void validate() const;
    bool operator==(const SelectivityConfig&) const = default;
};

/// Optional environment reward r(s, a, s') added to the log-selectivity.
using ExtrinsicReward = std::function<double(const env::GridState&, std::size_t, const env::GridState&)>;

double selectivity(const Tensor& h, const Tensor& h_next, std::size_t k, const SelectivityConfig& config);
ad::Var selectivity(ad::Var h, ad::Var h_next, std::size_t k, const SelectivityConfig& config);

/// log(sel + eps) undirected, log(max(1 + sel, eps)) directed.
double disentanglement_reward(double sel, const SelectivityConfig& config);
ad::Var disentanglement_reward(ad::Var sel, const SelectivityConfig& config);

/// A state together with its successor under every action.
struct Transitions {
    env::GridState state;
    std::vector<env::GridState> next;
};
Transitions enumerate_transitions(const env::GridWorld& world, const env::GridState& s);

/// Encodings of a state and of all its successors recorded on one tape.
struct EncodedTransitions {
    ad::Var h;
    std::vector<ad::Var> logits;  // per policy, at s
    std::vector<ad::Var> h_next;  // per action
};
EncodedTransitions encode_transitions(const model::Model& m, const model::Bound& p, const Transitions& t);

/// reward(sel(s, a, k)) [+ r(s, a, s')] for every action a.
std::vector<ad::Var> action_rewards(const EncodedTransitions& e, const Transitions& t, std::size_t k,
                                    const SelectivityConfig& config, const ExtrinsicReward& extrinsic = {});

/// sum_a pi_k(a|s) * reward(s, a, k), exact enumeration over the actions.
ad::Var expected_reward(const EncodedTransitions& e, const Transitions& t, std::size_t k,
                        const SelectivityConfig& config, const ExtrinsicReward& extrinsic = {});

struct ObjectiveTerms {
    ad::Var recon_loss;   // 1/2 ||s - g(f(s))||^2
    ad::Var disent_term;  // sum_k sum_a pi_k(a|s) reward(sel(s, a, k))
    ad::Var total;        // recon_loss - lambda * disent_term
};

ObjectiveTerms joint_objective(const model::Model& m, const model::Bound& p, const env::GridWorld& world,
                               const env::GridState& s, const SelectivityConfig& config,
                               const ExtrinsicReward& extrinsic = {});

struct ObjectiveValue {
    double recon_loss = 0.0;
    double disent_term = 0.0;
    double total = 0.0;
};

ObjectiveValue joint_objective(const model::Model& m, const env::GridWorld& world, const env::GridState& s,
                               const SelectivityConfig& config);

/// Reconstruction loss 1/2 ||s - g(f(s))||^2 on the given bindings.
ad::Var reconstruction_loss(const model::Model& m, const model::Bound& p, const env::GridState& s);

}  // namespace icf::objective
