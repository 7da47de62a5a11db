#include "icf/model.hpp"

#include <cmath>
#include <stdexcept>

namespace icf::model {

using ad::Var;

const char* to_string(Variant v) { return v == Variant::shared ? "shared" : "separate"; }

Variant parse_variant(const std::string& text) {
    if (text == "shared") return Variant::shared;
    if (text == "separate") return Variant::separate;
    throw std::invalid_argument("unknown model variant '" + text + "' (expected shared|separate)");
}

const char* to_string(Group g) {
    switch (g) {
    case Group::encoder: return "encoder";
    case Group::decoder: return "decoder";
    case Group::policy: return "policy";
    }
    return "?";
}

std::size_t ParameterSet::add(Parameter p) {
    for (const auto& q : params_)
        if (q.name == p.name) throw std::invalid_argument("duplicate parameter name '" + p.name + "'");
    params_.push_back(std::move(p));
    return params_.size() - 1;
}

std::size_t ParameterSet::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i)
        if (params_[i].name == name) return i;
    throw std::out_of_range("no parameter named '" + name + "'");
}

std::size_t ParameterSet::element_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

bool ParameterSet::all_finite() const {
    for (const auto& p : params_)
        if (!p.value.all_finite()) return false;
    return true;
}

bool ParameterSet::operator==(const ParameterSet& other) const {
    if (params_.size() != other.params_.size()) return false;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const auto& a = params_[i];
        const auto& b = other.params_[i];
        if (a.name != b.name || a.group != b.group || a.policy != b.policy || !(a.value == b.value)) return false;
    }
    return true;
}

Bound::Bound(ad::Tape& tape, const ParameterSet& params, const Selector& trainable) : tape_(&tape) {
    vars_.reserve(params.size());
    for (const auto& p : params) vars_.push_back(trainable(p) ? tape.leaf(p.value) : tape.constant(p.value));
}

namespace select {
Bound::Selector none() {
    return [](const Parameter&) { return false; };
}
Bound::Selector all() {
    return [](const Parameter&) { return true; };
}
Bound::Selector group(Group g) {
    return [g](const Parameter& p) { return p.group == g; };
}
Bound::Selector policy(std::size_t k) {
    return [k](const Parameter& p) { return p.group == Group::policy && p.policy == k; };
}
}  // namespace select

void Model::check_observation(Var obs) const {
    if (obs.shape() != obs_shape_)
        throw ShapeError("observation shape " + format_shape(obs.shape()) + " does not match model input " +
                         format_shape(obs_shape_));
}

void Model::check_features(Var h) const {
    if (h.shape() != Shape{num_features_})
        throw ShapeError("feature vector shape " + format_shape(h.shape()) + " does not match [" +
                         std::to_string(num_features_) + "]");
}

void Model::check_policy(std::size_t k) const {
    if (k >= num_policies_)
        throw std::out_of_range("policy index " + std::to_string(k) + " out of range for " +
                                std::to_string(num_policies_) + " policies");
}

namespace {

Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = dist(rng);
    return t;
}

Tensor dense_init(std::size_t out, std::size_t in, Rng& rng) { return glorot({out, in}, in, out, rng); }

Tensor conv_init(std::size_t c_out, std::size_t c_in, std::size_t k, Rng& rng) {
    return glorot({c_out, c_in, k, k}, c_in * k * k, c_out * k * k, rng);
}

Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }

}  // namespace

// ---------------------------------------------------------------------------

SharedModel::SharedModel(const ModelConfig& config, Shape obs_shape, std::size_t num_actions, Rng& rng)
    : Model(std::move(obs_shape), config.num_features, config.num_features, num_actions), config_(config) {
    if (obs_shape_.size() != 3) throw ShapeError("shared model expects [C x H x W] observations");
    if (config.num_features == 0 || config.conv_channels == 0 || config.fc_units == 0 || config.kernel_size == 0)
        throw std::invalid_argument("shared model sizes must be positive");
    const std::size_t c = config.conv_channels, k = config.kernel_size, cin = obs_shape_[0];
    const auto g1 = kernels::conv_geometry(obs_shape_, {c, cin, k, k}, config.conv_stride, config.conv_padding);
    const auto g2 =
        kernels::conv_geometry({c, g1.out_h, g1.out_w}, {c, c, k, k}, config.conv_stride, config.conv_padding);
    conv_shape_ = {c, g2.out_h, g2.out_w};
    // The decoder must invert both shape maps exactly.
    const auto t2 = kernels::conv_transpose_geometry(conv_shape_, {c, c, k, k}, config.conv_stride, config.conv_padding);
    const auto t1 =
        kernels::conv_transpose_geometry({c, g1.out_h, g1.out_w}, {c, cin, k, k}, config.conv_stride, config.conv_padding);
    if (t2.in_h != g1.out_h || t2.in_w != g1.out_w || t1.in_h != obs_shape_[1] || t1.in_w != obs_shape_[2])
        throw ShapeError("stride/padding do not allow the decoder to mirror the encoder for input " +
                         format_shape(obs_shape_));
    const std::size_t flat = element_count(conv_shape_);
    const std::size_t n = config.num_features, fc = config.fc_units;

    conv1_w_ = params_.add({"encoder.conv1.weight", Group::encoder, 0, conv_init(c, cin, k, rng)});
    conv1_b_ = params_.add({"encoder.conv1.bias", Group::encoder, 0, zeros({c})});
    conv2_w_ = params_.add({"encoder.conv2.weight", Group::encoder, 0, conv_init(c, c, k, rng)});
    conv2_b_ = params_.add({"encoder.conv2.bias", Group::encoder, 0, zeros({c})});
    fc_w_ = params_.add({"encoder.fc.weight", Group::encoder, 0, dense_init(fc, flat, rng)});
    fc_b_ = params_.add({"encoder.fc.bias", Group::encoder, 0, zeros({fc})});
    out_w_ = params_.add({"encoder.out.weight", Group::encoder, 0, dense_init(n, fc, rng)});
    out_b_ = params_.add({"encoder.out.bias", Group::encoder, 0, zeros({n})});

    dfc_in_w_ = params_.add({"decoder.fc_in.weight", Group::decoder, 0, dense_init(fc, n, rng)});
    dfc_in_b_ = params_.add({"decoder.fc_in.bias", Group::decoder, 0, zeros({fc})});
    dfc_w_ = params_.add({"decoder.fc.weight", Group::decoder, 0, dense_init(flat, fc, rng)});
    dfc_b_ = params_.add({"decoder.fc.bias", Group::decoder, 0, zeros({flat})});
    deconv2_w_ = params_.add({"decoder.deconv2.weight", Group::decoder, 0, conv_init(c, c, k, rng)});
    deconv2_b_ = params_.add({"decoder.deconv2.bias", Group::decoder, 0, zeros({c})});
    deconv1_w_ = params_.add({"decoder.deconv1.weight", Group::decoder, 0, conv_init(c, cin, k, rng)});
    deconv1_b_ = params_.add({"decoder.deconv1.bias", Group::decoder, 0, zeros({cin})});

    for (std::size_t p = 0; p < num_policies_; ++p) {
        const std::string prefix = "policy." + std::to_string(p);
        policy_w_.push_back(params_.add({prefix + ".weight", Group::policy, p, zeros({num_actions, fc})}));
        policy_b_.push_back(params_.add({prefix + ".bias", Group::policy, p, zeros({num_actions})}));
    }
}

Var SharedModel::trunk(const Bound& p, Var obs) const {
    check_observation(obs);
    const auto s = config_.conv_stride;
    const auto pad = config_.conv_padding;
    Var x = ad::relu(ad::add_channel_bias(ad::conv2d(obs, p[conv1_w_], s, pad), p[conv1_b_]));
    x = ad::relu(ad::add_channel_bias(ad::conv2d(x, p[conv2_w_], s, pad), p[conv2_b_]));
    return ad::relu(ad::linear(p[fc_w_], ad::flatten(x), p[fc_b_]));
}

Var SharedModel::head(const Bound& p, Var trunk) const { return ad::tanh(ad::linear(p[out_w_], trunk, p[out_b_])); }

Var SharedModel::encode(const Bound& p, Var obs) const { return head(p, trunk(p, obs)); }

Var SharedModel::decode(const Bound& p, Var h) const {
    check_features(h);
    const auto s = config_.conv_stride;
    const auto pad = config_.conv_padding;
    Var x = ad::relu(ad::linear(p[dfc_in_w_], h, p[dfc_in_b_]));
    x = ad::relu(ad::linear(p[dfc_w_], x, p[dfc_b_]));
    x = ad::reshape(x, conv_shape_);
    x = ad::relu(ad::add_channel_bias(ad::conv2d_transpose(x, p[deconv2_w_], s, pad), p[deconv2_b_]));
    x = ad::add_channel_bias(ad::conv2d_transpose(x, p[deconv1_w_], s, pad), p[deconv1_b_]);
    return ad::activation(config_.shared_decoder_output, x);
}

Encoded SharedModel::encode_with_policies(const Bound& p, Var obs) const {
    Var t = trunk(p, obs);
    Var policy_input = config_.policy_grad_into_trunk ? t : p.tape().constant(t.value());
    Encoded out{head(p, t), {}};
    for (std::size_t k = 0; k < num_policies_; ++k)
        out.logits.push_back(ad::linear(p[policy_w_[k]], policy_input, p[policy_b_[k]]));
    return out;
}

// ---------------------------------------------------------------------------

SeparateModel::SeparateModel(const ModelConfig& config, Shape obs_shape, std::size_t num_actions, Rng& rng)
    : Model(std::move(obs_shape), config.num_features, config.num_features, num_actions), config_(config) {
    if (config.num_features == 0 || config.hidden_units == 0)
        throw std::invalid_argument("separate model sizes must be positive");
    const std::size_t d = element_count(obs_shape_), n = config.num_features, hid = config.hidden_units;

    enc_w_ = params_.add({"encoder.fc.weight", Group::encoder, 0, dense_init(hid, d, rng)});
    enc_b_ = params_.add({"encoder.fc.bias", Group::encoder, 0, zeros({hid})});
    enc_out_w_ = params_.add({"encoder.out.weight", Group::encoder, 0, dense_init(n, hid, rng)});
    enc_out_b_ = params_.add({"encoder.out.bias", Group::encoder, 0, zeros({n})});
    dec_w_ = params_.add({"decoder.fc.weight", Group::decoder, 0, dense_init(hid, n, rng)});
    dec_b_ = params_.add({"decoder.fc.bias", Group::decoder, 0, zeros({hid})});
    dec_out_w_ = params_.add({"decoder.out.weight", Group::decoder, 0, dense_init(d, hid, rng)});
    dec_out_b_ = params_.add({"decoder.out.bias", Group::decoder, 0, zeros({d})});
    for (std::size_t p = 0; p < num_policies_; ++p)
        theta_.push_back(
            params_.add({"policy." + std::to_string(p) + ".theta", Group::policy, p, zeros({num_actions, d})}));
}

Var SeparateModel::encode(const Bound& p, Var obs) const {
    check_observation(obs);
    Var x = ad::relu(ad::linear(p[enc_w_], ad::flatten(obs), p[enc_b_]));
    return ad::tanh(ad::linear(p[enc_out_w_], x, p[enc_out_b_]));
}

Var SeparateModel::decode(const Bound& p, Var h) const {
    check_features(h);
    Var x = ad::relu(ad::linear(p[dec_w_], h, p[dec_b_]));
    x = ad::relu(ad::linear(p[dec_out_w_], x, p[dec_out_b_]));
    return ad::reshape(x, obs_shape_);
}

Encoded SeparateModel::encode_with_policies(const Bound& p, Var obs) const {
    Encoded out{encode(p, obs), {}};
    Var flat = ad::flatten(obs);
    for (std::size_t k = 0; k < num_policies_; ++k) out.logits.push_back(ad::linear(p[theta_[k]], flat));
    return out;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Model> make_model(const ModelConfig& config, const Shape& obs_shape, std::size_t num_actions,
                                  Rng& rng) {
    if (config.variant == Variant::shared) return std::make_unique<SharedModel>(config, obs_shape, num_actions, rng);
    return std::make_unique<SeparateModel>(config, obs_shape, num_actions, rng);
}

Tensor encode(const Model& m, const Tensor& obs) {
    ad::Tape tape;
    Bound p(tape, m.parameters(), select::none());
    return m.encode(p, tape.constant(obs)).value();
}

Tensor decode(const Model& m, const Tensor& h) {
    ad::Tape tape;
    Bound p(tape, m.parameters(), select::none());
    return m.decode(p, tape.constant(h)).value();
}

Tensor reconstruct(const Model& m, const Tensor& obs) {
    ad::Tape tape;
    Bound p(tape, m.parameters(), select::none());
    return m.decode(p, m.encode(p, tape.constant(obs))).value();
}

std::vector<double> policy_probs(const Model& m, const Tensor& obs, std::size_t k) {
    ad::Tape tape;
    Bound p(tape, m.parameters(), select::none());
    return ad::softmax(m.policy_logits(p, tape.constant(obs), k)).value().values();
}

std::size_t sample_categorical(const std::vector<double>& probs, Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double u = unit(rng);
    double cumulative = 0.0;
    for (std::size_t a = 0; a < probs.size(); ++a) {
        cumulative += probs[a];
        if (u < cumulative) return a;
    }
    // Rounding left the total just under u; return the last action with mass.
    for (std::size_t a = probs.size(); a-- > 0;)
        if (probs[a] > 0.0) return a;
    return probs.size() - 1;
}

std::size_t sample_action(const Model& m, const Tensor& obs, std::size_t k, Rng& rng) {
    return sample_categorical(policy_probs(m, obs, k), rng);
}

}  // namespace icf::model
