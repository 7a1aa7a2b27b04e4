#include "fedcap/config.hpp"
#include "fedcap/errors.hpp"
#include "fedcap/experiment.hpp"

#include "CLI11.hpp"

#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const fedcap::ConfigError*>(&e)) return 2;
    if (dynamic_cast<const fedcap::NumericalError*>(&e)) return 3;
    if (dynamic_cast<const fedcap::ProtocolError*>(&e)) return 4;
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated learning simulator with customized aggregation and attack suite"};
    app.require_subcommand(1);

    auto* run_cmd = app.add_subcommand("run", "Run one experiment or a sweep");
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::string> sweep_path;
    std::vector<std::string> overrides;
    bool force = false;
    bool export_shards = false;
    run_cmd->add_option("--config", config_path, "INI config file")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--seed", seed, "Root seed (overrides run.seed)");
    run_cmd->add_option("--out", out_dir, "Output directory (overrides run.output_dir)");
    run_cmd->add_option("--set", overrides, "section.key=value override, repeatable");
    run_cmd->add_option("--sweep", sweep_path, "Sweep grid file")->check(CLI::ExistingFile);
    run_cmd->add_flag("--force", force, "Overwrite existing artifacts");
    run_cmd->add_flag("--export-shards", export_shards, "Also write shards.csv");

    auto* export_cmd = app.add_subcommand("export", "Merge run directories into plot data");
    std::string export_out;
    std::vector<std::string> run_dirs;
    export_cmd->add_option("--out", export_out, "Output CSV (stdout when omitted)");
    export_cmd->add_option("dirs", run_dirs, "Run directories")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) {
            auto cfg = fedcap::load_config(config_path);
            for (const auto& kv : overrides) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) {
                    throw fedcap::ConfigError(fmt::format("--set expects section.key=value, got '{}'", kv));
                }
                fedcap::apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
            }
            if (seed) cfg.seed = *seed;
            if (out_dir) cfg.output_dir = *out_dir;
            cfg.validate();
            const fedcap::RunOptions opts{force, export_shards};
            if (sweep_path) {
                const auto points = fedcap::sweep(cfg, fedcap::load_sweep(*sweep_path), opts);
                fmt::print("{} runs written under {}\n", points.size(), cfg.output_dir);
            } else {
                const auto result = fedcap::run(cfg, opts);
                fmt::print("{} rounds written to {}\n", result.reports.size(), cfg.output_dir);
            }
        } else if (*export_cmd) {
            std::vector<std::filesystem::path> dirs(run_dirs.begin(), run_dirs.end());
            if (export_out.empty()) {
                fedcap::export_plotdata(dirs, std::cout);
            } else {
                std::ofstream out(export_out);
                if (!out) throw fedcap::ConfigError(fmt::format("cannot write {}", export_out));
                fedcap::export_plotdata(dirs, out);
            }
        }
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return exit_code_for(e);
    }
    return 0;
}
