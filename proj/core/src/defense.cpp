#include "qmlsec/defense.hpp"

#include "qmlsec/errors.hpp"

#include <algorithm>
#include <numeric>

namespace qmlsec {

const char* target_scheme_name(TargetScheme s) {
    return s == TargetScheme::constant_mask_class ? "constant_mask_class" : "label_permutation";
}

TargetScheme target_scheme_from_name(const std::string& name) {
    if (name == "constant_mask_class")
        return TargetScheme::constant_mask_class;
    if (name == "label_permutation")
        return TargetScheme::label_permutation;
    throw ConfigError("unknown adversarial target scheme '" + name + "'");
}

QnnConfig make_defended_config(const QnnConfig& base, const DefenseConfig& def) {
    if (base.n_mask_classes > 0)
        throw ConfigError("base config is already defended");
    if (def.n_mask_classes < 1)
        throw ConfigError("defense needs at least one masking class");
    if (def.alpha < 0.0)
        throw ConfigError("alpha must be >= 0");

    QnnConfig cfg = base;
    cfg.n_mask_classes = def.n_mask_classes;
    cfg.alpha = def.alpha;
    cfg.head_kind = HeadKind::linear; // the subset head must map |S| readouts
                                      // onto C + m classes
    cfg.measured_qubits = def.user_qubits;
    if (cfg.measured_qubits.empty()) {
        for (int q = 0; q < std::min(base.n_classes, base.n_qubits); ++q)
            cfg.measured_qubits.push_back(q);
    }
    if (static_cast<int>(cfg.measured_qubits.size()) >= cfg.n_qubits)
        throw ConfigError("defense is vacuous when the user subset covers all qubits");
    cfg.validate();
    return cfg;
}

std::vector<int> assign_adversarial_targets(const std::vector<int>& labels,
                                            TargetScheme scheme, int n_classes,
                                            int n_mask_classes) {
    if (n_mask_classes < 1)
        throw ConfigError("adversarial targets need at least one masking class");
    std::vector<int> targets;
    targets.reserve(labels.size());
    for (int label : labels) {
        if (label < 0 || label >= n_classes)
            throw DataError("label out of range");
        int target;
        if (scheme == TargetScheme::constant_mask_class) {
            target = n_classes; // first masking class
        } else {
            target = (label + 1) % (n_classes + n_mask_classes);
        }
        targets.push_back(target);
    }
    return targets;
}

namespace {

HeuristicAccuracies all_heuristic_accuracies(const ObservedRun& run, int n_qubits) {
    std::vector<int> all_qubits(static_cast<std::size_t>(n_qubits));
    std::iota(all_qubits.begin(), all_qubits.end(), 0);
    const int total = run.log->max_epoch();

    HeuristicAccuracies acc;
    const auto score = [&](Heuristic h) {
        const auto extracted =
            extract(*run.log, h, AdversaryView::expvals, all_qubits, total);
        return extraction_accuracy(extracted, run.true_angles, run.true_labels);
    };
    acc.majority = score(Heuristic::majority);
    acc.weighted_linear = score(Heuristic::weighted_linear);
    acc.weighted_exp = score(Heuristic::weighted_exp);
    return acc;
}

} // namespace

DefenseReport evaluate_defense(const ObservedRun& defended, const ObservedRun& baseline,
                               int n_qubits) {
    if (!defended.log || !baseline.log)
        throw DataError("evaluate_defense needs both observation logs");
    if (defended.log->empty() || baseline.log->empty())
        throw DataError("evaluate_defense needs nonempty observation logs");

    DefenseReport report;
    report.adversary_defended = all_heuristic_accuracies(defended, n_qubits);
    report.adversary_baseline = all_heuristic_accuracies(baseline, n_qubits);
    report.relative_drop_weighted_exp =
        report.adversary_baseline.weighted_exp > 0.0
            ? 1.0 - report.adversary_defended.weighted_exp /
                        report.adversary_baseline.weighted_exp
            : 0.0;

    if (!defended.report.epochs.empty())
        report.user_train_accuracy = defended.report.epochs.back().train_accuracy;
    if (!baseline.report.epochs.empty())
        report.baseline_train_accuracy = baseline.report.epochs.back().train_accuracy;
    report.user_test_accuracy = defended.report.test_accuracy;
    report.baseline_test_accuracy = baseline.report.test_accuracy;

    for (std::size_t e = 0; e < defended.report.epochs.size(); ++e) {
        if (defended.report.epochs[e].train_accuracy >= report.baseline_train_accuracy) {
            report.epochs_to_baseline_accuracy = static_cast<int>(e) + 1;
            break;
        }
    }
    return report;
}

} // namespace qmlsec
