// icf: train and evaluate independently controllable feature models.
//
//   icf run [--config FILE] [--preset basic|extended] [--<section.key> VALUE ...]
//   icf evaluate --checkpoint FILE [--config FILE] [--out DIR] [--<section.key> VALUE ...]
//   icf config [--config FILE] [--preset ...] [--<section.key> VALUE ...]
#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "icf/checkpoint.hpp"
#include "icf/config.hpp"
#include "icf/experiment.hpp"
#include "icf/io.hpp"

namespace {

using icf::config::ExperimentConfig;
using icf::experiment::ExitCode;

struct ConfigSource {
    std::string file;
    std::string preset = "basic";
    std::map<std::string, std::optional<std::string>> overrides;

    void attach(CLI::App& app) {
        app.add_option("--config", file, "config file (section.key = value lines)");
        app.add_option("--preset", preset, "defaults to start from")->check(CLI::IsMember({"basic", "extended"}));
        for (const auto& key : icf::config::schema()) {
            auto& slot = overrides[key.name];
            app.add_option_function<std::string>(
                   "--" + key.name, [&slot](const std::string& v) { slot = v; }, key.help)
                ->group("Config overrides");
        }
    }

    ExperimentConfig resolve() const {
        ExperimentConfig base = preset == "extended" ? icf::config::extended_defaults() : ExperimentConfig{};
        ExperimentConfig c = file.empty() ? base : icf::config::load(file, base);
        for (const auto& [key, value] : overrides)
            if (value) icf::config::set_value(c, key, *value);
        c.validate();
        return c;
    }
};

int report(const char* kind, const std::exception& e, ExitCode code) {
    std::cerr << "icf: " << kind << ": " << e.what() << "\n";
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Jointly trained autoencoder and feature-controlling policies on gridworlds"};
    app.require_subcommand(1);

    ConfigSource run_src, eval_src, show_src;
    auto* run_cmd = app.add_subcommand("run", "train, evaluate and write all artifacts");
    run_src.attach(*run_cmd);

    auto* eval_cmd = app.add_subcommand("evaluate", "recompute metrics from a checkpoint");
    std::string checkpoint_path, eval_out;
    eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    eval_cmd->add_option("--out", eval_out, "output directory (default: <output_dir>/evaluation)");
    eval_src.attach(*eval_cmd);

    auto* show_cmd = app.add_subcommand("config", "print the fully resolved configuration");
    show_src.attach(*show_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ExitCode::ok : ExitCode::config_error;
    }

    icf::experiment::relax_allocator_trimming();
    try {
        if (*run_cmd) {
            const auto config = run_src.resolve();
            const auto result = icf::experiment::run(config);
            for (const auto& c : result.checks)
                std::cout << c.name << ": " << (c.passed ? "PASS" : "FAIL") << " (" << c.detail << ")\n";
            std::cout << "artifacts in " << config.output_dir << "\n";
        } else if (*eval_cmd) {
            const auto config = eval_src.resolve();
            const std::filesystem::path out =
                eval_out.empty() ? std::filesystem::path(config.output_dir) / "evaluation" : std::filesystem::path(eval_out);
            const auto m = icf::experiment::evaluate(checkpoint_path, config, out);
            std::cout << "recon_mse " << icf::format_double(m.recon_mse) << "\nmetrics in " << out.string() << "\n";
        } else if (*show_cmd) {
            std::cout << icf::config::to_text(show_src.resolve());
        }
    } catch (const icf::config::ConfigError& e) {
        return report("config error", e, ExitCode::config_error);
    } catch (const icf::train::DivergenceError& e) {
        return report("divergence", e, ExitCode::divergence);
    } catch (const icf::IoError& e) {
        return report("I/O error", e, ExitCode::io_error);
    } catch (const icf::checkpoint::CheckpointError& e) {
        return report("checkpoint error", e, ExitCode::io_error);
    } catch (const std::filesystem::filesystem_error& e) {
        return report("I/O error", e, ExitCode::io_error);
    } catch (const std::invalid_argument& e) {
        return report("config error", e, ExitCode::config_error);
    }
    return ExitCode::ok;
}
