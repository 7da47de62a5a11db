#include "icf/config.hpp"

#include <algorithm>
#include <limits>
#include <set>

#include "icf/io.hpp"

namespace icf::config {

namespace {

std::uint64_t to_unsigned(const std::string& text) {
    const long long v = parse_integer(text);
    if (v < 0) throw std::invalid_argument("expected a non-negative integer, got '" + text + "'");
    return static_cast<std::uint64_t>(v);
}

bool to_bool(const std::string& text) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw std::invalid_argument("expected true|false, got '" + text + "'");
}

std::string from_bool(bool b) { return b ? "true" : "false"; }

// Member-pointer binders for the common field kinds.
template <class Owner, class T>
Key unsigned_key(std::string name, std::string help, const Owner& (*view)(const ExperimentConfig&),
                 Owner& (*edit)(ExperimentConfig&), T Owner::*field) {
    return {std::move(name), std::move(help),
            [=](const ExperimentConfig& c) { return std::to_string(view(c).*field); },
            [=](ExperimentConfig& c, const std::string& v) {
                const auto u = to_unsigned(v);
                if (u > std::numeric_limits<T>::max()) throw std::invalid_argument("value out of range");
                edit(c).*field = static_cast<T>(u);
            }};
}

template <class Owner>
Key double_key(std::string name, std::string help, const Owner& (*view)(const ExperimentConfig&),
               Owner& (*edit)(ExperimentConfig&), double Owner::*field) {
    return {std::move(name), std::move(help), [=](const ExperimentConfig& c) { return format_double(view(c).*field); },
            [=](ExperimentConfig& c, const std::string& v) { edit(c).*field = parse_double(v); }};
}

template <class Owner>
Key bool_key(std::string name, std::string help, const Owner& (*view)(const ExperimentConfig&),
             Owner& (*edit)(ExperimentConfig&), bool Owner::*field) {
    return {std::move(name), std::move(help), [=](const ExperimentConfig& c) { return from_bool(view(c).*field); },
            [=](ExperimentConfig& c, const std::string& v) { edit(c).*field = to_bool(v); }};
}

template <class Owner, class E>
Key enum_key(std::string name, std::string help, const Owner& (*view)(const ExperimentConfig&),
             Owner& (*edit)(ExperimentConfig&), E Owner::*field, const char* (*show)(E),
             E (*read)(const std::string&)) {
    return {std::move(name), std::move(help), [=](const ExperimentConfig& c) { return std::string(show(view(c).*field)); },
            [=](ExperimentConfig& c, const std::string& v) { edit(c).*field = read(v); }};
}

const ExperimentConfig& top(const ExperimentConfig& c) { return c; }
ExperimentConfig& top(ExperimentConfig& c) { return c; }
const env::EnvConfig& envc(const ExperimentConfig& c) { return c.env; }
env::EnvConfig& envc(ExperimentConfig& c) { return c.env; }
const model::ModelConfig& modelc(const ExperimentConfig& c) { return c.model; }
model::ModelConfig& modelc(ExperimentConfig& c) { return c.model; }
const objective::SelectivityConfig& selc(const ExperimentConfig& c) { return c.selectivity; }
objective::SelectivityConfig& selc(ExperimentConfig& c) { return c.selectivity; }
const train::TrainConfig& trainc(const ExperimentConfig& c) { return c.training; }
train::TrainConfig& trainc(ExperimentConfig& c) { return c.training; }
const EvalConfig& evalc(const ExperimentConfig& c) { return c.eval; }
EvalConfig& evalc(ExperimentConfig& c) { return c.eval; }

template <class Owner>
using View = const Owner& (*)(const ExperimentConfig&);
template <class Owner>
using Edit = Owner& (*)(ExperimentConfig&);

std::vector<Key> build_schema() {
    const View<ExperimentConfig> tv = top;
    const Edit<ExperimentConfig> te = top;
    const View<env::EnvConfig> ev = envc;
    const Edit<env::EnvConfig> ee = envc;
    const View<model::ModelConfig> mv = modelc;
    const Edit<model::ModelConfig> me = modelc;
    const View<objective::SelectivityConfig> sv = selc;
    const Edit<objective::SelectivityConfig> se = selc;
    const View<train::TrainConfig> rv = trainc;
    const Edit<train::TrainConfig> re = trainc;
    const View<EvalConfig> vv = evalc;
    const Edit<EvalConfig> ve = evalc;

    std::vector<Key> keys;
    keys.push_back({"experiment.name", "experiment name",
                    [](const ExperimentConfig& c) { return c.name; },
                    [](ExperimentConfig& c, const std::string& v) { c.name = v; }});
    keys.push_back({"experiment.output_dir", "output directory",
                    [](const ExperimentConfig& c) { return c.output_dir; },
                    [](ExperimentConfig& c, const std::string& v) { c.output_dir = v; }});
    keys.push_back(bool_key("experiment.allow_mismatch", "allow non-default env/model pairings", tv, te,
                            &ExperimentConfig::allow_mismatch));

    keys.push_back(enum_key("env.variant", "basic|extended", ev, ee, &env::EnvConfig::variant,
                            &env::to_string, &env::parse_variant));
    keys.push_back(unsigned_key("env.grid_height", "grid rows", ev, ee, &env::EnvConfig::grid_height));
    keys.push_back(unsigned_key("env.grid_width", "grid columns", ev, ee, &env::EnvConfig::grid_width));
    keys.push_back(unsigned_key("env.square_size", "square side", ev, ee, &env::EnvConfig::square_size));
    keys.push_back(double_key("env.color_step", "brightness increment", ev, ee, &env::EnvConfig::color_step));
    keys.push_back(double_key("env.color_min", "lowest brightness", ev, ee, &env::EnvConfig::color_min));
    keys.push_back(double_key("env.color_max", "highest brightness", ev, ee, &env::EnvConfig::color_max));
    keys.push_back(unsigned_key("env.seed", "environment seed", ev, ee, &env::EnvConfig::seed));
    keys.push_back(enum_key("env.start", "uniform|wall", ev, ee, &env::EnvConfig::start, &env::to_string,
                            &env::parse_start_mode));

    keys.push_back({"model.variant", "auto|shared|separate",
                    [](const ExperimentConfig& c) {
                        return c.model_variant ? std::string(model::to_string(*c.model_variant)) : "auto";
                    },
                    [](ExperimentConfig& c, const std::string& v) {
                        if (v == "auto") c.model_variant.reset();
                        else c.model_variant = model::parse_variant(v);
                    }});
    keys.push_back({"model.num_features", "latent features (0 = auto)",
                    [](const ExperimentConfig& c) { return std::to_string(c.num_features.value_or(0)); },
                    [](ExperimentConfig& c, const std::string& v) {
                        const auto n = to_unsigned(v);
                        if (n == 0) c.num_features.reset();
                        else c.num_features = static_cast<std::size_t>(n);
                    }});
    keys.push_back(unsigned_key("model.conv_channels", "shared: kernels per conv layer", mv, me,
                                &model::ModelConfig::conv_channels));
    keys.push_back(unsigned_key("model.kernel_size", "shared: conv kernel side", mv, me,
                                &model::ModelConfig::kernel_size));
    keys.push_back(unsigned_key("model.conv_stride", "shared: conv stride", mv, me, &model::ModelConfig::conv_stride));
    keys.push_back(enum_key("model.conv_padding", "shared: same|valid", mv, me, &model::ModelConfig::conv_padding,
                            &kernels::to_string, &kernels::parse_padding));
    keys.push_back(unsigned_key("model.fc_units", "shared: fully connected units", mv, me,
                                &model::ModelConfig::fc_units));
    keys.push_back(enum_key("model.shared_decoder_output", "shared: identity|relu|tanh", mv, me,
                            &model::ModelConfig::shared_decoder_output, &ad::to_string, &ad::parse_activation));
    keys.push_back(bool_key("model.policy_grad_into_trunk", "shared: policy updates reach the trunk", mv, me,
                            &model::ModelConfig::policy_grad_into_trunk));
    keys.push_back(unsigned_key("model.hidden_units", "separate: hidden units", mv, me,
                                &model::ModelConfig::hidden_units));

    keys.push_back(enum_key("selectivity.mode", "directed|undirected", sv, se, &objective::SelectivityConfig::mode,
                            &objective::to_string, &objective::parse_mode));
    keys.push_back(double_key("selectivity.denom_epsilon", "denominator epsilon", sv, se,
                              &objective::SelectivityConfig::denom_epsilon));
    keys.push_back(double_key("selectivity.log_floor_epsilon", "log floor epsilon", sv, se,
                              &objective::SelectivityConfig::log_floor_epsilon));

    keys.push_back(unsigned_key("training.steps", "number of steps", rv, re, &train::TrainConfig::steps));
    keys.push_back(double_key("training.lambda", "weight of the disentanglement objective", sv, se,
                              &objective::SelectivityConfig::lambda));
    keys.push_back(double_key("training.lr_encoder", "encoder learning rate", rv, re, &train::TrainConfig::lr_encoder));
    keys.push_back(double_key("training.lr_decoder", "decoder learning rate", rv, re, &train::TrainConfig::lr_decoder));
    keys.push_back(double_key("training.lr_policy", "policy learning rate", rv, re, &train::TrainConfig::lr_policy));
    keys.push_back(enum_key("training.estimator", "exact|reinforce", rv, re, &train::TrainConfig::estimator,
                            &train::to_string, &train::parse_estimator));
    keys.push_back(unsigned_key("training.reinforce_samples", "actions sampled per REINFORCE estimate", rv, re,
                                &train::TrainConfig::reinforce_samples));
    keys.push_back(unsigned_key("training.seed", "training seed", rv, re, &train::TrainConfig::seed));
    keys.push_back(unsigned_key("training.eval_interval", "steps between log records", rv, re,
                                &train::TrainConfig::eval_interval));
    keys.push_back(unsigned_key("training.batch_size", "states per step", rv, re, &train::TrainConfig::batch_size));
    keys.push_back(bool_key("training.aggregate_policy_updates", "one encoder update for all policies", rv, re,
                            &train::TrainConfig::aggregate_policy_updates));
    keys.push_back(unsigned_key("training.heldout_size", "held-out states for the log", rv, re,
                                &train::TrainConfig::heldout_size));

    keys.push_back(unsigned_key("eval.probe_size", "probe states for metrics", vv, ve, &EvalConfig::probe_size));
    keys.push_back(unsigned_key("eval.seed", "probe set seed", vv, ve, &EvalConfig::seed));
    keys.push_back(unsigned_key("eval.raster_count", "reconstruction rasters to write", vv, ve,
                                &EvalConfig::raster_count));
    return keys;
}

const Key* find_key(const std::string& name) {
    for (const auto& k : schema())
        if (k.name == name) return &k;
    return nullptr;
}

}  // namespace

model::ModelConfig ExperimentConfig::resolved_model() const {
    model::ModelConfig m = model;
    const bool basic = env.variant == env::Variant::basic;
    m.variant = model_variant.value_or(basic ? model::Variant::shared : model::Variant::separate);
    m.num_features = num_features.value_or(basic ? 4 : 8);
    return m;
}

void ExperimentConfig::validate() const {
    try {
        env.validate();
        selectivity.validate();
        training.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    const auto m = resolved_model();
    const bool paired = (env.variant == env::Variant::basic) == (m.variant == model::Variant::shared);
    if (!paired && !allow_mismatch)
        throw ConfigError(std::string("model.variant=") + model::to_string(m.variant) + " does not match env.variant=" +
                          env::to_string(env.variant) + " (set experiment.allow_mismatch=true to force)");
    if (m.variant == model::Variant::shared && m.num_features > m.fc_units)
        throw ConfigError("model.num_features must not exceed model.fc_units");
    if (m.kernel_size == 0 || m.conv_channels == 0 || m.fc_units == 0 || m.hidden_units == 0 || m.conv_stride == 0)
        throw ConfigError("model sizes and strides must be positive");
    if (eval.probe_size == 0) throw ConfigError("eval.probe_size must be positive");
    if (name.empty()) throw ConfigError("experiment.name must not be empty");
    if (output_dir.empty()) throw ConfigError("experiment.output_dir must not be empty");
}

ExperimentConfig extended_defaults() {
    ExperimentConfig c;
    c.name = "extended";
    c.output_dir = "runs/extended";
    c.env.variant = env::Variant::extended;
    return c;
}

const std::vector<Key>& schema() {
    static const std::vector<Key> keys = build_schema();
    return keys;
}

void set_value(ExperimentConfig& config, const std::string& key, const std::string& value) {
    const Key* k = find_key(key);
    if (!k) throw ConfigError("unknown key '" + key + "'");
    try {
        k->set(config, value);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("key '" + key + "': " + e.what());
    }
}

std::string get_value(const ExperimentConfig& config, const std::string& key) {
    const Key* k = find_key(key);
    if (!k) throw ConfigError("unknown key '" + key + "'");
    return k->get(config);
}

ExperimentConfig parse(const std::string& text, const ExperimentConfig& base) {
    ExperimentConfig config = base;
    std::set<std::string> seen;
    const auto lines = split(text, '\n');
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string where = "line " + std::to_string(i + 1);
        std::string_view line = lines[i];
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(where + ": expected 'key = value', got '" + std::string(line) + "'");
        const std::string key(trim(line.substr(0, eq)));
        const std::string value(trim(line.substr(eq + 1)));
        if (key.empty()) throw ConfigError(where + ": missing key");
        if (!seen.insert(key).second) throw ConfigError(where + ": duplicate key '" + key + "'");
        try {
            set_value(config, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + ": " + e.what());
        }
    }
    return config;
}

ExperimentConfig load(const std::string& path, const ExperimentConfig& base) { return parse(read_file(path), base); }

std::string to_text(const ExperimentConfig& config) {
    std::string out;
    for (const auto& k : schema()) out += k.name + " = " + k.get(config) + "\n";
    return out;
}

}  // namespace icf::config
