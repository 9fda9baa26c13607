#pragma once

#include "qmlsec/adversary.hpp"
#include "qmlsec/classifiers.hpp"
#include "qmlsec/defense.hpp"
#include "qmlsec/qnn.hpp"
#include "qmlsec/refinery.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace qmlsec {

struct DatasetSpec {
    std::string kind = "iris"; // iris | csv | blobs
    std::string path;          // csv only
    std::string label_column = "label";
    int blobs_n = 120;
    int blobs_d = 4;
    int blobs_classes = 3;
    double blobs_spread = 0.5;
};

struct AttackOptions {
    std::string heuristic = "all"; // majority | wlinear | wexp | all
    AdversaryView view = AdversaryView::class_probs;
};

struct RunConfig {
    std::uint64_t seed = 0;
    DatasetSpec dataset;
    int n_train = 90;
    int n_test = 60;
    QnnConfig qnn;
    AttackOptions attack;
    RefineConfig refine;
    std::vector<ClassifierSpec> ensemble = default_ensemble();
    std::optional<DefenseConfig> defense;
    std::string out_dir;

    void validate() const;
};

// Flag-level overrides applied on top of the config document.
struct CliOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> heuristic;
    std::optional<std::string> view;
    std::optional<double> alpha;
};

// Empty path loads the built-in iris defaults.
RunConfig load_run_config(const std::string& config_path, const CliOverrides& overrides);

// Reads the resolved config persisted by cmd_train / cmd_defend.
RunConfig load_run_config_from_dir(const std::filesystem::path& run_dir);

std::filesystem::path resolve_run_dir(const RunConfig& config,
                                      const std::string& cli_run_dir);

// Loads / generates, splits and scales per the config.
Dataset prepare_dataset(const RunConfig& config);

// Pipeline stages. Every command takes the run-directory lock and writes only
// inside it.
void cmd_train(const RunConfig& config, const std::filesystem::path& run_dir);
void cmd_attack(const std::filesystem::path& run_dir, const CliOverrides& overrides = {});
void cmd_refine(const std::filesystem::path& run_dir);
void cmd_clone(const std::filesystem::path& run_dir);
void cmd_defend(const RunConfig& config, const std::filesystem::path& run_dir);
void cmd_report(const std::filesystem::path& run_dir);

// Environment variable naming the default output root for run directories.
inline constexpr const char* kRunRootEnv = "QMLSEC_RUN_ROOT";

} // namespace qmlsec
