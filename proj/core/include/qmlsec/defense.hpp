#pragma once

#include "qmlsec/adversary.hpp"
#include "qmlsec/qnn.hpp"

#include <optional>
#include <string>
#include <vector>

namespace qmlsec {

enum class TargetScheme { constant_mask_class, label_permutation };

const char* target_scheme_name(TargetScheme s);
TargetScheme target_scheme_from_name(const std::string& name);

struct DefenseConfig {
    int n_mask_classes = 1;
    std::vector<int> user_qubits; // secret subset S; defaults to first C qubits
    double alpha = 1.0;
    TargetScheme scheme = TargetScheme::constant_mask_class;
};

// Extends the class set by the masking classes, switches the head to read
// only the secret subset and arms the defended loss. Throws ConfigError when
// the subset covers the whole register (the defense would be vacuous).
QnnConfig make_defended_config(const QnnConfig& base, const DefenseConfig& def);

// Per-sample adversarial targets; never equal to the true label.
std::vector<int> assign_adversarial_targets(const std::vector<int>& labels,
                                            TargetScheme scheme, int n_classes,
                                            int n_mask_classes);

struct HeuristicAccuracies {
    double majority = 0.0;
    double weighted_linear = 0.0;
    double weighted_exp = 0.0;
};

// Everything evaluate_defense needs from one observed training run.
struct ObservedRun {
    const LogStore* log = nullptr;
    std::vector<std::vector<double>> true_angles; // train rows, log order
    std::vector<int> true_labels;
    TrainReport report;
};

struct DefenseReport {
    HeuristicAccuracies adversary_defended; // all-qubit view on the defended log
    HeuristicAccuracies adversary_baseline; // same view on the undefended log
    double relative_drop_weighted_exp = 0.0;
    double user_train_accuracy = 0.0;
    double baseline_train_accuracy = 0.0;
    std::optional<double> user_test_accuracy;
    std::optional<double> baseline_test_accuracy;
    // Epochs the defended run needed to reach the baseline's final train
    // accuracy; unset when it never did.
    std::optional<int> epochs_to_baseline_accuracy;
};

// Runs all three heuristics with the all-qubit expectation view over both
// logs and reports the attack degradation alongside the user's cost.
DefenseReport evaluate_defense(const ObservedRun& defended, const ObservedRun& baseline,
                               int n_qubits);

} // namespace qmlsec
