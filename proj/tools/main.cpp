#include "qmlsec/errors.hpp"
#include "qmlsec/pipeline.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace {

struct GlobalArgs {
    std::string config_path;
    std::string run_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> heuristic;
    std::optional<std::string> view;
    std::optional<double> alpha;
};

qmlsec::CliOverrides overrides_of(const GlobalArgs& args) {
    qmlsec::CliOverrides o;
    o.seed = args.seed;
    o.heuristic = args.heuristic;
    o.view = args.view;
    o.alpha = args.alpha;
    return o;
}

std::filesystem::path require_run_dir(const GlobalArgs& args) {
    if (args.run_dir.empty())
        throw qmlsec::ConfigError("--run-dir is required for this command");
    return args.run_dir;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quantum neural network training-data extraction testbed"};
    app.require_subcommand(1);

    GlobalArgs args;
    app.add_option("--config", args.config_path, "Run configuration JSON");
    app.add_option("--run-dir", args.run_dir, "Run directory (artifacts live here)");
    app.add_option("--seed", args.seed, "Seed override");
    app.add_option("--heuristic", args.heuristic, "majority | wlinear | wexp | all")
        ->check(CLI::IsMember({"majority", "wlinear", "wexp", "all"}));
    app.add_option("--view", args.view, "Adversary view: expvals | class_probs")
        ->check(CLI::IsMember({"expvals", "class_probs"}));
    app.add_option("--alpha", args.alpha, "Defense loss weight override");

    auto* train = app.add_subcommand("train", "Train the victim model and record the epoch log");
    auto* attack = app.add_subcommand("attack", "Extract a labeled dataset from the epoch log");
    auto* refine = app.add_subcommand("refine", "k-fold ensemble refinement of the extraction");
    auto* clone = app.add_subcommand("clone", "Train a clone on the refined extraction");
    auto* defend = app.add_subcommand("defend", "Masked-label defense run plus baseline");
    auto* report = app.add_subcommand("report", "Consolidate artifacts into plot-ready CSVs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (train->parsed()) {
            const auto cfg = qmlsec::load_run_config(args.config_path, overrides_of(args));
            const auto dir = qmlsec::resolve_run_dir(cfg, args.run_dir);
            qmlsec::cmd_train(cfg, dir);
            std::cout << dir.string() << '\n';
        } else if (attack->parsed()) {
            qmlsec::cmd_attack(require_run_dir(args), overrides_of(args));
        } else if (refine->parsed()) {
            qmlsec::cmd_refine(require_run_dir(args));
        } else if (clone->parsed()) {
            qmlsec::cmd_clone(require_run_dir(args));
        } else if (defend->parsed()) {
            auto cfg = qmlsec::load_run_config(args.config_path, overrides_of(args));
            if (!cfg.defense)
                cfg.defense = qmlsec::DefenseConfig{};
            const auto dir = qmlsec::resolve_run_dir(cfg, args.run_dir);
            qmlsec::cmd_defend(cfg, dir);
            std::cout << dir.string() << '\n';
        } else if (report->parsed()) {
            qmlsec::cmd_report(require_run_dir(args));
        }
    } catch (const qmlsec::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const qmlsec::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 4;
    }
    return 0;
}
