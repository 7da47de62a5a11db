#pragma once
// End-to-end runs: train, evaluate, and write every artifact to the output
// directory.
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "icf/config.hpp"
#include "icf/metrics.hpp"
#include "icf/trainer.hpp"

namespace icf::experiment {

enum ExitCode { ok = 0, config_error = 1, divergence = 2, io_error = 3 };

/// Files written by run(), relative to the output directory.
std::vector<std::string> manifest(const config::ExperimentConfig& config);
/// Subset written by evaluate().
std::vector<std::string> evaluation_manifest(const config::ExperimentConfig& config);

struct Check {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Threshold checks applicable to the configured environment.
std::vector<Check> threshold_checks(const metrics::MetricsBundle& metrics, const config::ExperimentConfig& config,
                                    bool all_finite);

/// Largest pi_k(down) + pi_k(down_dup) among policies whose favorite action
/// is one of the two; 0 when no policy prefers moving down.
double down_policy_mass(const metrics::Matrix& policy);

struct RunResult {
    train::TrainLog log;
    metrics::MetricsBundle metrics;
    std::vector<Check> checks;
};

using CheckpointHook = std::function<void(std::size_t step, const model::Model&)>;

/// Validates, trains, and writes manifest(config) into config.output_dir.
/// `on_checkpoint` sees the model each time the checkpoint file is written.
RunResult run(const config::ExperimentConfig& config, const CheckpointHook& on_checkpoint = {});

/// Recomputes the metrics of a saved checkpoint and writes
/// evaluation_manifest(config) into `output_dir`.
metrics::MetricsBundle evaluate(const std::filesystem::path& checkpoint, const config::ExperimentConfig& config,
                                const std::filesystem::path& output_dir);

/// Large training runs allocate and free the same buffers every step; keep
/// the C allocator from returning them to the kernel each time.
void relax_allocator_trimming();

}  // namespace icf::experiment
