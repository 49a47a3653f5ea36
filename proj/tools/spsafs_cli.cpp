// Command-line front end: feature-selection experiment runner over the
// config file format documented in the README.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spsafs/bench.hpp"

namespace {

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::string> out_override;
    std::optional<std::size_t> jobs_override;
    bool print_effective = false;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
    cmd->add_option("--config", opts.config_path, "experiment config file")->required();
    cmd->add_option("--seed", opts.seed_override, "override experiment.root_seed");
    cmd->add_option("--out", opts.out_override, "override experiment.output_dir");
    cmd->add_option("--jobs", opts.jobs_override, "concurrent method x repetition cells");
    cmd->add_flag("--print-effective-config", opts.print_effective,
                  "echo the merged configuration and continue");
}

// Loads, merges overrides and validates; on problems prints them and returns
// nothing.
std::optional<spsafs::ExperimentConfig> build_config(const CommonOptions& opts,
                                                     const std::string& mode) {
    spsafs::KeyValueConfig kv;
    try {
        kv = spsafs::KeyValueConfig::parse_file(opts.config_path);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return std::nullopt;
    }

    if (opts.seed_override) {
        kv.set("experiment", "root_seed", std::to_string(*opts.seed_override));
    }
    if (opts.out_override) {
        kv.set("experiment", "output_dir", *opts.out_override);
    } else if (!kv.has("experiment", "output_dir")) {
        if (const char* env = std::getenv("SPSAFS_OUT_DIR")) {
            kv.set("experiment", "output_dir", env);
        }
    }
    if (opts.jobs_override) {
        kv.set("experiment", "jobs", std::to_string(*opts.jobs_override));
    }

    std::vector<std::string> errors;
    spsafs::ExperimentConfig config = spsafs::ExperimentConfig::from_key_values(kv, errors);
    config.validate(mode, errors);
    if (!errors.empty()) {
        for (const auto& error : errors) std::cerr << "config error: " << error << "\n";
        return std::nullopt;
    }
    if (opts.print_effective) std::cout << config.to_key_values().render();
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"BSPSA / SPSA-FS feature-selection benchmark harness"};
    app.require_subcommand(1);

    CommonOptions run_opts, rank_opts, regress_opts, validate_opts;
    CLI::App* cmd_run = app.add_subcommand("run", "run configured methods and write traces");
    CLI::App* cmd_rank = app.add_subcommand("rank", "top-m ranking sweep");
    CLI::App* cmd_regress = app.add_subcommand("regress", "regression subset-size sweep");
    CLI::App* cmd_validate =
        app.add_subcommand("validate-config", "check a config file and exit");
    add_common(cmd_run, run_opts);
    add_common(cmd_rank, rank_opts);
    add_common(cmd_regress, regress_opts);
    add_common(cmd_validate, validate_opts);

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_run->parsed()) {
            const auto config = build_config(run_opts, "run");
            if (!config) return spsafs::kExitConfigError;
            const auto outputs = spsafs::cmd_run(*config);
            for (const auto& cell : outputs.cells) {
                if (cell.failed) {
                    std::cerr << "cell failed: " << cell.method << " rep " << cell.repetition
                              << ": " << cell.error << "\n";
                }
            }
            return outputs.exit_code;
        }
        if (cmd_rank->parsed()) {
            const auto config = build_config(rank_opts, "rank");
            if (!config) return spsafs::kExitConfigError;
            return spsafs::cmd_rank(*config);
        }
        if (cmd_regress->parsed()) {
            const auto config = build_config(regress_opts, "regress");
            if (!config) return spsafs::kExitConfigError;
            return spsafs::cmd_regress(*config);
        }
        if (cmd_validate->parsed()) {
            // validate against the least restrictive mode
            const auto config = build_config(validate_opts, "run");
            if (!config) return spsafs::kExitConfigError;
            std::cout << "config ok\n";
            return spsafs::kExitOk;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return spsafs::kExitConfigError;
    }
    return spsafs::kExitOk;
}
