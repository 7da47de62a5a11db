#pragma once

// Encoder f, decoder g and the per-feature policies pi_k.
//
// Two parameterizations are provided:
//   SharedModel    conv trunk shared by f and the policy heads; g mirrors f
//                  with transposed convolutions.
//   SeparateModel  f, g and every pi_k own disjoint parameters;
//                  pi_k(.|s) = softmax(theta_k s) on the flattened observation.

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "icf/autodiff.hpp"
#include "icf/environment.hpp"
#include "icf/kernels.hpp"
#include "icf/tensor.hpp"

namespace icf::model {

enum class Variant { shared, separate };
const char* to_string(Variant v);
Variant parse_variant(const std::string& text);

/// Parameter groups updated by the different lines of the training step.
enum class Group { encoder, decoder, policy };
const char* to_string(Group g);

struct Parameter {
    std::string name;
    Group group = Group::encoder;
    std::size_t policy = 0;  // owning policy for Group::policy
    Tensor value;
};

class ParameterSet {
public:
    std::size_t add(Parameter p);
    std::size_t size() const { return params_.size(); }
    Parameter& operator[](std::size_t i) { return params_[i]; }
    const Parameter& operator[](std::size_t i) const { return params_[i]; }
    std::size_t index_of(const std::string& name) const;
    const Tensor& value(const std::string& name) const { return params_[index_of(name)].value; }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    std::size_t element_count() const;
    bool all_finite() const;
    bool operator==(const ParameterSet& other) const;

private:
    std::vector<Parameter> params_;
};

/// Parameters placed on a tape: differentiable leaves for the selected ones,
/// constants for the rest.
class Bound {
public:
    using Selector = std::function<bool(const Parameter&)>;

    Bound(ad::Tape& tape, const ParameterSet& params, const Selector& trainable);

    ad::Tape& tape() const { return *tape_; }
    ad::Var operator[](std::size_t i) const { return vars_[i]; }
    std::size_t size() const { return vars_.size(); }

private:
    ad::Tape* tape_;
    std::vector<ad::Var> vars_;
};

namespace select {
Bound::Selector none();
Bound::Selector all();
Bound::Selector group(Group g);
Bound::Selector policy(std::size_t k);
}  // namespace select

struct ModelConfig {
    Variant variant = Variant::shared;
    std::size_t num_features = 4;
    // Shared model.
    std::size_t conv_channels = 16;
    std::size_t kernel_size = 3;
    std::size_t conv_stride = 1;
    kernels::Padding conv_padding = kernels::Padding::same;
    std::size_t fc_units = 32;
    ad::Activation shared_decoder_output = ad::Activation::identity;
    bool policy_grad_into_trunk = true;
    // Separate model.
    std::size_t hidden_units = 64;

    bool operator==(const ModelConfig&) const = default;
};

/// Features of one observation together with every policy's logits.
struct Encoded {
    ad::Var features;                // h = f(s), [n]
    std::vector<ad::Var> logits;     // logits[k] of pi_k(.|s), [num_actions]
};

class Model {
public:
    virtual ~Model() = default;

    virtual std::unique_ptr<Model> clone() const = 0;
    virtual Variant variant() const = 0;

    virtual ad::Var encode(const Bound& p, ad::Var obs) const = 0;
    virtual ad::Var decode(const Bound& p, ad::Var h) const = 0;
    virtual Encoded encode_with_policies(const Bound& p, ad::Var obs) const = 0;

    ad::Var policy_logits(const Bound& p, ad::Var obs, std::size_t k) const {
        check_policy(k);
        return encode_with_policies(p, obs).logits[k];
    }

    const ParameterSet& parameters() const { return params_; }
    ParameterSet& parameters() { return params_; }

    std::size_t num_features() const { return num_features_; }
    std::size_t num_policies() const { return num_policies_; }
    std::size_t num_actions() const { return num_actions_; }
    const Shape& observation_shape() const { return obs_shape_; }

protected:
    Model(Shape obs_shape, std::size_t num_features, std::size_t num_policies, std::size_t num_actions)
        : obs_shape_(std::move(obs_shape)),
          num_features_(num_features),
          num_policies_(num_policies),
          num_actions_(num_actions) {}

    void check_observation(ad::Var obs) const;
    void check_features(ad::Var h) const;
    void check_policy(std::size_t k) const;

    ParameterSet params_;
    Shape obs_shape_;
    std::size_t num_features_, num_policies_, num_actions_;
};

class SharedModel final : public Model {
public:
    SharedModel(const ModelConfig& config, Shape obs_shape, std::size_t num_actions, Rng& rng);

    std::unique_ptr<Model> clone() const override { return std::make_unique<SharedModel>(*this); }
    Variant variant() const override { return Variant::shared; }

    ad::Var encode(const Bound& p, ad::Var obs) const override;
    ad::Var decode(const Bound& p, ad::Var h) const override;
    Encoded encode_with_policies(const Bound& p, ad::Var obs) const override;

    const ModelConfig& config() const { return config_; }

private:
    ad::Var trunk(const Bound& p, ad::Var obs) const;
    ad::Var head(const Bound& p, ad::Var trunk) const;

    ModelConfig config_;
    Shape conv_shape_;  // [C x H' x W'] after the second convolution
    std::size_t conv1_w_, conv1_b_, conv2_w_, conv2_b_, fc_w_, fc_b_, out_w_, out_b_;
    std::size_t dfc_in_w_, dfc_in_b_, dfc_w_, dfc_b_, deconv2_w_, deconv2_b_, deconv1_w_, deconv1_b_;
    std::vector<std::size_t> policy_w_, policy_b_;
};

class SeparateModel final : public Model {
public:
    SeparateModel(const ModelConfig& config, Shape obs_shape, std::size_t num_actions, Rng& rng);

    std::unique_ptr<Model> clone() const override { return std::make_unique<SeparateModel>(*this); }
    Variant variant() const override { return Variant::separate; }

    ad::Var encode(const Bound& p, ad::Var obs) const override;
    ad::Var decode(const Bound& p, ad::Var h) const override;
    Encoded encode_with_policies(const Bound& p, ad::Var obs) const override;

    const ModelConfig& config() const { return config_; }

private:
    ModelConfig config_;
    std::size_t enc_w_, enc_b_, enc_out_w_, enc_out_b_, dec_w_, dec_b_, dec_out_w_, dec_out_b_;
    std::vector<std::size_t> theta_;
};

std::unique_ptr<Model> make_model(const ModelConfig& config, const Shape& obs_shape, std::size_t num_actions,
                                  Rng& rng);

// Tape-free conveniences for evaluation.
Tensor encode(const Model& m, const Tensor& obs);
Tensor decode(const Model& m, const Tensor& h);
Tensor reconstruct(const Model& m, const Tensor& obs);
std::vector<double> policy_probs(const Model& m, const Tensor& obs, std::size_t k);
std::size_t sample_action(const Model& m, const Tensor& obs, std::size_t k, Rng& rng);
/// Inverse-CDF draw from a probability vector.
std::size_t sample_categorical(const std::vector<double>& probs, Rng& rng);

}  // namespace icf::model
