#include "icf/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "icf/artifacts.hpp"
#include "icf/checkpoint.hpp"
#include "icf/io.hpp"

namespace icf::experiment {

namespace fs = std::filesystem;

namespace {

constexpr double slope_threshold = 0.8;
constexpr double policy_peak = 0.85;
constexpr double recon_threshold = 0.005;
constexpr double redundancy_tolerance = 1e-9;

std::string raster_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "reconstruction_%02zu.pgm", i);
    return buf;
}

std::string format_check(const Check& c) { return c.name + ": " + (c.passed ? "PASS" : "FAIL") + " (" + c.detail + ")"; }

std::string metrics_csv(const metrics::MetricsBundle& b) {
    std::ostringstream os;
    os << "metric,value\n";
    os << "recon_mse," << format_double(b.recon_mse) << '\n';
    os << "probe_set_size," << b.probe_set_size << '\n';
    return os.str();
}

void write_metric_files(const fs::path& dir, const metrics::MetricsBundle& b,
                        const metrics::ReconstructionReport& report) {
    using artifacts::ColorScale;
    write_file(dir / "metrics.csv", metrics_csv(b));
    write_file(dir / "slope_matrix.csv", artifacts::matrix_csv(b.slope, "feature"));
    write_file(dir / "raw_slope_matrix.csv", artifacts::matrix_csv(b.raw_slope, "feature"));
    write_file(dir / "policy_matrix.csv", artifacts::matrix_csv(b.policy, "policy"));
    write_file(dir / "selectivity_matrix.csv", artifacts::matrix_csv(b.selectivity, "policy"));
    write_file(dir / "objective_matrix.csv", artifacts::matrix_csv(b.objective, "policy"));
    write_file(dir / "slope_matrix.svg", artifacts::heatmap_svg(b.slope, "standardized slope", ColorScale::diverging));
    write_file(dir / "policy_matrix.svg", artifacts::heatmap_svg(b.policy, "policy", ColorScale::sequential));
    write_file(dir / "selectivity_matrix.svg",
               artifacts::heatmap_svg(b.selectivity, "selectivity", ColorScale::diverging));
    write_file(dir / "objective_matrix.svg", artifacts::heatmap_svg(b.objective, "objective", ColorScale::sequential));
    for (std::size_t i = 0; i < report.originals.size(); ++i)
        write_file(dir / raster_name(i), artifacts::pgm_pair(report.originals[i], report.reconstructions[i]));
}

struct Evaluated {
    metrics::MetricsBundle bundle;
    metrics::ReconstructionReport report;
};

Evaluated evaluate_model(const model::Model& m, const config::ExperimentConfig& config) {
    const env::GridWorld world(config.env);
    const auto probes = metrics::probe_states(world, config.eval.probe_size, config.eval.seed);
    Evaluated e;
    e.bundle = metrics::evaluate(m, world, probes, config.selectivity);
    e.report = metrics::reconstruction_report(m, probes, std::min(config.eval.raster_count, probes.size()));
    return e;
}

void ensure_directory(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir.string() + "'");
}

}  // namespace

std::vector<std::string> evaluation_manifest(const config::ExperimentConfig& config) {
    std::vector<std::string> files{"metrics.csv",
                                   "slope_matrix.csv",
                                   "raw_slope_matrix.csv",
                                   "policy_matrix.csv",
                                   "selectivity_matrix.csv",
                                   "objective_matrix.csv",
                                   "slope_matrix.svg",
                                   "policy_matrix.svg",
                                   "selectivity_matrix.svg",
                                   "objective_matrix.svg"};
    for (std::size_t i = 0; i < std::min(config.eval.raster_count, config.eval.probe_size); ++i)
        files.push_back(raster_name(i));
    return files;
}

std::vector<std::string> manifest(const config::ExperimentConfig& config) {
    std::vector<std::string> files{"config.txt", "train_log.csv", "checkpoint.ckpt", "summary.txt"};
    for (auto& f : evaluation_manifest(config)) files.push_back(std::move(f));
    return files;
}

double down_policy_mass(const metrics::Matrix& policy) {
    double best = 0.0;
    for (std::size_t k = 0; k < policy.rows; ++k) {
        if (policy.cols < 2 || metrics::argmax_row(policy, k) > 1) continue;
        best = std::max(best, policy(k, 0) + policy(k, 1));
    }
    return best;
}

std::vector<Check> threshold_checks(const metrics::MetricsBundle& m, const config::ExperimentConfig& config,
                                    bool all_finite) {
    std::vector<Check> checks;
    checks.push_back({"finite parameters", all_finite, all_finite ? "all finite" : "non-finite values present"});
    if (config.env.variant == env::Variant::basic) {
        std::ostringstream slope;
        slope << "threshold " << slope_threshold;
        checks.push_back({"features recover row and col", metrics::disjoint_factor_cover(m.slope, slope_threshold),
                          slope.str()});
        double min_peak = 1.0;
        for (std::size_t k = 0; k < m.policy.rows; ++k) min_peak = std::min(min_peak, m.policy(k, metrics::argmax_row(m.policy, k)));
        checks.push_back({"policies cover all actions", metrics::policies_cover_actions(m.policy, policy_peak),
                          "smallest peak " + format_double(min_peak) + ", threshold " + format_double(policy_peak)});
        checks.push_back({"reconstruction", m.recon_mse < recon_threshold,
                          "mse " + format_double(m.recon_mse) + ", threshold " + format_double(recon_threshold)});
    } else {
        double gap = 0.0;
        for (std::size_t k = 0; k < m.selectivity.rows; ++k)
            gap = std::max(gap, std::fabs(m.selectivity(k, 0) - m.selectivity(k, 1)));
        checks.push_back({"redundant actions share selectivity", gap <= redundancy_tolerance,
                          "max gap " + format_double(gap)});
        const double mass = down_policy_mass(m.policy);
        checks.push_back({"down policy uses down actions", mass > policy_peak,
                          "mass " + format_double(mass) + ", threshold " + format_double(policy_peak)});
    }
    return checks;
}

RunResult run(const config::ExperimentConfig& config, const CheckpointHook& on_checkpoint) {
    config.validate();
    const fs::path dir(config.output_dir);
    ensure_directory(dir);
    write_file(dir / "config.txt", config::to_text(config));

    train::TrainHooks hooks;
    hooks.on_eval = [&](std::size_t step, const model::Model& m, const train::TrainLog&) {
        checkpoint::save(m.parameters(), dir / "checkpoint.ckpt");
        if (on_checkpoint) on_checkpoint(step, m);
    };
    auto trained = train::train(config.training, config.selectivity, config.resolved_model(), config.env, hooks);
    const model::Model& m = *trained.model;
    const std::size_t K = m.num_policies();
    write_file(dir / "train_log.csv", trained.log.to_csv(K));
    checkpoint::save(m.parameters(), dir / "checkpoint.ckpt");

    Evaluated e = evaluate_model(m, config);
    write_metric_files(dir, e.bundle, e.report);

    RunResult result{std::move(trained.log), std::move(e.bundle), {}};
    result.checks = threshold_checks(result.metrics, config, m.parameters().all_finite());

    std::ostringstream summary;
    summary << "experiment " << config.name << "\n";
    summary << "env " << env::to_string(config.env.variant) << ", model "
            << model::to_string(config.resolved_model().variant) << ", steps " << config.training.steps << ", seed "
            << config.training.seed << "\n";
    if (!result.log.records.empty()) {
        const auto& last = result.log.records.back();
        summary << "final held-out reconstruction loss " << format_double(last.heldout_recon) << "\n";
        summary << "held-out loss smoothed non-increasing: "
                << (result.log.heldout_smoothed_nonincreasing(1000) ? "yes" : "no") << "\n";
    }
    summary << "probe recon_mse " << format_double(result.metrics.recon_mse) << "\n\n";
    for (const auto& c : result.checks) summary << format_check(c) << "\n";
    write_file(dir / "summary.txt", summary.str());
    return result;
}

metrics::MetricsBundle evaluate(const fs::path& checkpoint_path, const config::ExperimentConfig& config,
                                const fs::path& output_dir) {
    config.validate();
    const auto saved = checkpoint::load(checkpoint_path);
    const env::GridWorld world(config.env);
    Rng rng(config.training.seed);
    auto m = model::make_model(config.resolved_model(), world.observation_shape(), world.num_actions(), rng);
    checkpoint::restore(*m, saved);
    ensure_directory(output_dir);
    Evaluated e = evaluate_model(*m, config);
    write_metric_files(output_dir, e.bundle, e.report);
    return e.bundle;
}

void relax_allocator_trimming() {
#if defined(__GLIBC__)
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
#endif
}

}  // namespace icf::experiment
