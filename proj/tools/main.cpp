#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "nsrl/harness.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nsrl::ExperimentConfig load_config(const std::string& path) {
    return nsrl::parse_config(read_file(path));
}

std::vector<double> parse_values(const std::string& csv) {
    std::vector<double> values;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        values.push_back(std::stod(tok));
    }
    if (values.empty()) throw std::runtime_error("--values: no values parsed from '" + csv + "'");
    return values;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Non-stationary tabular RL experiment harness"};
    app.require_subcommand(1);
    app.fallthrough();  // accept --out/--workers/--seed-offset after the subcommand

    std::string config_path;
    nsrl::CliOptions cli;
    std::uint64_t seed_offset = 0;
    app.add_option("--out", cli.out_dir, "Output directory (overrides out.dir)");
    app.add_option("--workers", cli.workers, "Parallel workers across seeds")->default_val(1);
    app.add_option("--seed-offset", seed_offset, "Added to every seed in run.seeds")
        ->default_val(0);

    CLI::App* cmd_run = app.add_subcommand("run", "Run every seed of a config");
    cmd_run->add_option("config", config_path, "Config file")->required();

    CLI::App* cmd_sweep = app.add_subcommand("sweep", "Run a config across axis values");
    std::string axis, values_csv;
    cmd_sweep->add_option("config", config_path, "Config file")->required();
    cmd_sweep->add_option("--axis", axis, "Numeric config key to vary")->required();
    cmd_sweep->add_option("--values", values_csv, "Comma-separated axis values")->required();

    CLI::App* cmd_check = app.add_subcommand("check", "Run the invariant battery");
    cmd_check->add_option("config", config_path, "Config file")->required();

    CLI::App* cmd_oracle =
        app.add_subcommand("oracle", "Print realized variation budgets and optimal values");
    cmd_oracle->add_option("config", config_path, "Config file")->required();

    CLI11_PARSE(app, argc, argv);
    cli.seed_offset = seed_offset;

    try {
        if (cmd_run->parsed()) {
            nsrl::ExperimentConfig cfg = load_config(config_path);
            nsrl::ExperimentResult result = nsrl::run_experiment(cfg, cli);
            if (!result.all_diag_ok) {
                std::cerr << "deterministic invariant failure; see rows.csv diag_ok column\n";
                return 1;
            }
            return 0;
        }
        if (cmd_sweep->parsed()) {
            nsrl::ExperimentConfig cfg = load_config(config_path);
            return nsrl::sweep(cfg, axis, parse_values(values_csv), cli) ? 0 : 1;
        }
        if (cmd_check->parsed()) {
            nsrl::ExperimentConfig cfg = load_config(config_path);
            return nsrl::run_checks(cfg, cli) ? 0 : 1;
        }
        if (cmd_oracle->parsed()) {
            nsrl::ExperimentConfig cfg = load_config(config_path);
            return nsrl::run_oracle(cfg, cli) ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }
    return 2;
}
