#pragma once

// Joint training of the autoencoder and the feature policies.
//
// Each step samples a state s and then, in order:
//   W_f   <- W_f   - eta_f       grad_{W_f}   1/2 ||s - g(f(s))||^2
//   W_g   <- W_g   - eta_g       grad_{W_g}   1/2 ||s - g(f(s))||^2
//   for k = 1..K:
//     W_f     <- W_f     + eta_f lambda grad_{W_f}     E_{a~pi_k}[reward(s, a, k)]
//     theta_k <- theta_k + eta_k lambda grad_{theta_k} E_{a~pi_k}[reward(s, a, k)]
// Every update uses a gradient evaluated on the parameters as they are when
// that update runs.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "icf/environment.hpp"
#include "icf/model.hpp"
#include "icf/selectivity.hpp"

namespace icf::train {

enum class Estimator { exact, reinforce };
const char* to_string(Estimator e);
Estimator parse_estimator(const std::string& text);

struct TrainConfig {
    std::size_t steps = 20000;
    double lr_encoder = 0.01;
    double lr_decoder = 0.01;
    double lr_policy = 0.01;
    Estimator estimator = Estimator::exact;
    std::size_t reinforce_samples = 1;
    std::uint64_t seed = 0;
    std::size_t eval_interval = 1000;
    std::size_t batch_size = 1;
    /// One W_f update with the summed policy objectives instead of one per k.
    bool aggregate_policy_updates = false;
    std::size_t heldout_size = 256;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

/// Raised when a parameter or loss becomes non-finite.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(std::size_t step, const std::string& detail)
        : std::runtime_error("divergence at step " + std::to_string(step) + ": " + detail),
          step_(step),
          detail_(detail) {}
    std::size_t step() const { return step_; }
    const std::string& detail() const { return detail_; }

private:
    std::size_t step_;
    std::string detail_;
};

struct StepRecord {
    double recon_loss = 0.0;             // before the step's updates
    double disent_term = 0.0;            // sum_k expected reward, each at its own update time
    std::vector<double> entropy;         // per policy, nats
    std::size_t blocked_transitions = 0; // actions that left the state unchanged
};

struct LogRecord {
    std::size_t step = 0;
    double recon_loss = 0.0;    // mean over the interval
    double disent_term = 0.0;   // mean over the interval
    double heldout_recon = 0.0; // mean 1/2||s - g(f(s))||^2 on the held-out states
    std::vector<double> entropy;
    std::size_t blocked_transitions = 0;
    double wall_seconds = 0.0;  // not written to CSV
};

struct TrainLog {
    std::vector<LogRecord> records;

    /// step,recon_loss,disent_term,heldout_recon,blocked,entropy_0..entropy_{K-1}
    std::string to_csv(std::size_t num_policies) const;

    /// Held-out loss averaged over windows of `window` steps never increases.
    bool heldout_smoothed_nonincreasing(std::size_t window) const;
};

/// One step of the algorithm above on a batch of freshly sampled states.
StepRecord train_step(model::Model& m, const env::GridWorld& world, const TrainConfig& config,
                      const objective::SelectivityConfig& sel, Rng& rng,
                      const objective::ExtrinsicReward& extrinsic = {});

/// Same step on given states (no sampling of s).
StepRecord train_step_on(model::Model& m, const env::GridWorld& world, const std::vector<env::GridState>& batch,
                         const TrainConfig& config, const objective::SelectivityConfig& sel, Rng& rng,
                         const objective::ExtrinsicReward& extrinsic = {});

/// Monte-Carlo score-function estimate of grad_{theta_k} E_{a~pi_k}[reward]:
/// the mean of reward(s, a_i, k) grad log pi_k(a_i|s) over n_samples draws.
/// Returns one gradient tensor per parameter of policy k, in parameter order.
std::vector<Tensor> reinforce_gradient(const model::Model& m, const env::GridState& s, std::size_t k,
                                       const env::GridWorld& world, const objective::SelectivityConfig& sel,
                                       std::size_t n_samples, Rng& rng,
                                       const objective::ExtrinsicReward& extrinsic = {});

/// Exact gradient of the same expectation by enumeration and backpropagation.
std::vector<Tensor> exact_policy_gradient(const model::Model& m, const env::GridState& s, std::size_t k,
                                          const env::GridWorld& world, const objective::SelectivityConfig& sel,
                                          const objective::ExtrinsicReward& extrinsic = {});

struct TrainHooks {
    /// Called after each eval interval and after the last step.
    std::function<void(std::size_t step, const model::Model&, const TrainLog&)> on_eval;
    objective::ExtrinsicReward extrinsic;
};

struct TrainResult {
    std::unique_ptr<model::Model> model;
    TrainLog log;
};

/// Builds the model from `model_config`, then runs `config.steps` steps.
/// Deterministic in (configs, seeds).
TrainResult train(const TrainConfig& config, const objective::SelectivityConfig& sel,
                  const model::ModelConfig& model_config, const env::EnvConfig& env_config,
                  const TrainHooks& hooks = {});

/// Mean 1/2||s - g(f(s))||^2 over `states`.
double mean_reconstruction_loss(const model::Model& m, const std::vector<env::GridState>& states);

/// Held-out states used for the log's reconstruction curve.
std::vector<env::GridState> heldout_states(const env::GridWorld& world, std::size_t count, std::uint64_t seed);

double entropy(const std::vector<double>& probs);

}  // namespace icf::train
