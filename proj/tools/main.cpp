// oasis: command line front end for the experiment harness.
//
// Exit status: 0 success, 1 run failure, 2 config error, 3 oracle failure.

#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "oasis/harness.hpp"

namespace {

enum Exit { kOk = 0, kRunFailure = 1, kConfigError = 2, kOracleFailure = 3 };

oasis::ExperimentConfig load_with_overrides(const std::string& path,
                                            const std::vector<std::string>& overrides) {
    oasis::ExperimentConfig cfg = oasis::load_config(path);
    for (const std::string& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw oasis::ConfigError("--set expects key=value, got " + kv);
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

std::vector<std::string> split_values(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Online activation-subspace training experiments"};
    app.require_subcommand(1);

    std::string config;
    std::vector<std::string> overrides;

    auto* train = app.add_subcommand("train", "run one experiment");
    train->add_option("--config", config, "config file")->required();
    train->add_option("--set", overrides, "override a config key (key=value)");

    std::string axis;
    std::string values;
    std::size_t seeds = 1;
    std::size_t jobs = 1;
    auto* sweep = app.add_subcommand("sweep", "run a one-axis sweep over seeds");
    sweep->add_option("--config", config, "base config file")->required();
    sweep->add_option("--axis", axis, "config key to vary (rank, gamma, interval, ...)")->required();
    sweep->add_option("--values", values, "comma separated axis values")->required();
    sweep->add_option("--seeds", seeds, "repeats per value")->check(CLI::PositiveNumber);
    sweep->add_option("--jobs", jobs, "cells run concurrently")->check(CLI::PositiveNumber);
    sweep->add_option("--set", overrides, "override a config key (key=value)");

    std::vector<std::string> runs;
    std::size_t window = 50;
    auto* drift = app.add_subcommand("drift", "summarize drift from run directories");
    drift->add_option("--runs", runs, "run directories or metrics files")->required();
    drift->add_option("--window", window, "trailing window in steps")->check(CLI::PositiveNumber);

    std::string suite = "all";
    auto* oracle = app.add_subcommand("oracle", "run the reference checks");
    oracle->add_option("--suite", suite, "suite name or all");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (*train) {
            const oasis::ExperimentConfig cfg = load_with_overrides(config, overrides);
            const oasis::RunResult r = oasis::run_experiment(cfg);
            if (!r.ok) {
                std::cerr << "run failed: " << r.failure << " (" << r.dir.string() << ")\n";
                return kRunFailure;
            }
            std::cout << "final_eval " << oasis::format_real(r.final_eval) << "\n"
                      << "output " << r.dir.string() << "\n";
        } else if (*sweep) {
            const oasis::ExperimentConfig cfg = load_with_overrides(config, overrides);
            const oasis::SweepResult r = oasis::run_sweep(cfg, axis, split_values(values), seeds, jobs);
            bool any_failed = false;
            std::cout << "value\tmean\tstddev\tfailures\n";
            for (const auto& c : r.cells) {
                std::cout << c.value << '\t' << oasis::format_real(c.mean) << '\t'
                          << oasis::format_real(c.stddev) << '\t' << c.failures << '\n';
                any_failed = any_failed || c.failures > 0;
            }
            if (any_failed) return kRunFailure;
        } else if (*drift) {
            std::vector<oasis::DriftSummary> reports;
            for (const auto& run : runs) reports.push_back(oasis::drift_report(run, window));
            std::cout << oasis::drift_to_json(reports).dump(2) << "\n";
        } else if (*oracle) {
            const auto rows = oasis::oracle_check(suite);
            oasis::print_oracle_table(std::cout, rows);
            for (const auto& r : rows)
                if (!r.pass) return kOracleFailure;
        }
    } catch (const oasis::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRunFailure;
    }
    return kOk;
}
