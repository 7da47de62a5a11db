#pragma once
// Experiment configuration: a flat "section.key = value" text format with
// '#' comments, plus per-key command-line overrides.
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "icf/environment.hpp"
#include "icf/model.hpp"
#include "icf/selectivity.hpp"
#include "icf/trainer.hpp"

namespace icf::config {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EvalConfig {
    std::size_t probe_size = 256;
    std::uint64_t seed = 977;
    std::size_t raster_count = 4;

    bool operator==(const EvalConfig&) const = default;
};

struct ExperimentConfig {
    std::string name = "basic";
    std::string output_dir = "runs/basic";
    /// Permit shared/extended and separate/basic pairings.
    bool allow_mismatch = false;

    env::EnvConfig env;
    /// Unset means: shared for basic, separate for extended.
    std::optional<model::Variant> model_variant;
    /// Unset means: 4 for basic, 8 for extended.
    std::optional<std::size_t> num_features;
    /// Architecture knobs; variant and num_features here are ignored in
    /// favor of the two fields above (see resolved_model()).
    model::ModelConfig model;
    objective::SelectivityConfig selectivity;
    train::TrainConfig training;
    EvalConfig eval;

    model::ModelConfig resolved_model() const;
    /// Throws ConfigError naming the violated constraint.
    void validate() const;

    bool operator==(const ExperimentConfig&) const = default;
};

/// Built-in preset for the extended environment (separate model, 8 features).
ExperimentConfig extended_defaults();

struct Key {
    std::string name;
    std::string help;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

/// Every recognized key, in snapshot order.
const std::vector<Key>& schema();

/// Sets one key; throws ConfigError for unknown keys or malformed values.
void set_value(ExperimentConfig& config, const std::string& key, const std::string& value);
std::string get_value(const ExperimentConfig& config, const std::string& key);

/// Parses text on top of `base`. Errors carry the line number and key.
ExperimentConfig parse(const std::string& text, const ExperimentConfig& base = {});
ExperimentConfig load(const std::string& path, const ExperimentConfig& base = {});

/// Every key, one per line; parse(to_text(c)) == c.
std::string to_text(const ExperimentConfig& config);

}  // namespace icf::config
