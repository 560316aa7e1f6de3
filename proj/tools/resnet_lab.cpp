// resnet_lab: oracle, train-verify, counterexample, sweep and check subcommands.
//
// Exit status: 0 success, 1 infrastructure failure (I/O, numerics, failed
// checks), 2 invalid configuration or input file.

#include <cstdio>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "reslab/experiments.hpp"
#include "reslab/properties.hpp"

namespace {

struct Common {
    std::string config;
    std::string seed;
    std::string out;
    std::string restarts;
    std::string grad_tol;
    std::string format = "csv";
};

void add_common(CLI::App* sub, Common& c, bool training) {
    sub->add_option("--config", c.config, "configuration file (key = value)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", c.seed, "override the config seed (unsigned 64-bit)");
    sub->add_option("--out", c.out, "output directory (overrides out.dir)");
    sub->add_option("--format", c.format, "output format")->check(CLI::IsMember({"csv"}));
    if (training) {
        sub->add_option("--restarts", c.restarts, "override train.restarts");
        sub->add_option("--grad-tol", c.grad_tol, "override train.grad_tol");
    }
}

reslab::ExperimentConfig load(const Common& c) {
    std::map<std::string, std::string> overrides;
    if (!c.seed.empty()) overrides["seed"] = c.seed;
    if (!c.out.empty()) overrides["out.dir"] = c.out;
    if (!c.restarts.empty()) overrides["train.restarts"] = c.restarts;
    if (!c.grad_tol.empty()) overrides["train.grad_tol"] = c.grad_tol;
    return reslab::load_config_file(c.config, overrides);
}

void emit(const reslab::CsvTable& t, const reslab::fs::path& file) {
    const std::string text = t.str();
    reslab::write_text_file(file, text);
    std::cout << text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ResNet loss-landscape laboratory"};
    app.require_subcommand(1);

    Common oracle_opts, train_opts, ce_opts, sweep_opts;
    auto* oracle = app.add_subcommand("oracle", "basis-function minima L*_x, L*_xz and the improvement term");
    add_common(oracle, oracle_opts, false);
    auto* train = app.add_subcommand("train-verify", "train restarts, certify, compare with the oracle");
    add_common(train, train_opts, true);
    auto* ce = app.add_subcommand("counterexample", "dead-ReLU local minimum of a plain network");
    add_common(ce, ce_opts, false);
    auto* sweep = app.add_subcommand("sweep", "train-verify over a grid of sweep.* values");
    add_common(sweep, sweep_opts, true);

    std::uint64_t check_seed = 1;
    bool check_quick = false;
    auto* check = app.add_subcommand("check", "run the property suite");
    check->add_option("--seed", check_seed, "seed for the random instances");
    check->add_flag("--quick", check_quick, "fewer random instances");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*oracle) {
            const auto cfg = load(oracle_opts);
            emit(reslab::cmd_oracle(cfg), reslab::fs::path(cfg.out_dir) / "oracle.csv");
        } else if (*train) {
            const auto cfg = load(train_opts);
            const auto res = reslab::cmd_train_verify(cfg, cfg.out_dir);
            std::cout << reslab::train_verify_table(res).str();
        } else if (*ce) {
            const auto cfg = load(ce_opts);
            emit(reslab::cmd_counterexample(cfg), reslab::fs::path(cfg.out_dir) / "counterexample.csv");
        } else if (*sweep) {
            const auto cfg = load(sweep_opts);
            emit(reslab::cmd_sweep(cfg, cfg.out_dir), reslab::fs::path(cfg.out_dir) / "sweep.csv");
        } else if (*check) {
            const auto results = reslab::run_property_suite(check_seed, check_quick ? 0.1 : 1.0);
            bool all = true;
            for (const auto& r : results) {
                std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << "  " << r.detail << "\n";
                all = all && r.passed;
            }
            return all ? 0 : 1;
        }
    } catch (const reslab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const reslab::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
