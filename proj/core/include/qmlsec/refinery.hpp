#pragma once

#include "qmlsec/classifiers.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace qmlsec {

struct RefineConfig {
    std::vector<int> k_values = {5, 7, 10, 15};
    double confidence_threshold = 0.8;
    int max_iterations = 5;
    std::uint64_t seed = 0;

    void validate() const;
};

struct LabeledData {
    std::vector<std::vector<double>> features;
    std::vector<int> labels;
    int class_count = 0;

    std::size_t size() const { return features.size(); }
};

// Seeded shuffle dealt into k folds whose sizes differ by at most one.
std::vector<std::vector<int>> kfold_indices(int n, int k, std::uint64_t seed);

// Out-of-fold probabilities: each row predicted by the model trained without
// its fold. If some class is missing from a training partition the fold
// assignment is resampled once, then the call fails.
std::vector<std::vector<double>> fit_predict_oof(const LabeledData& data,
                                                 const ClassifierSpec& spec, int k,
                                                 std::uint64_t seed);

// Mean of out-of-fold probabilities across all k values for one classifier,
// plus the per-point argmax.
struct ClassifierView {
    std::vector<std::vector<double>> mean_probs;
    std::vector<int> predicted;
};

ClassifierView aggregate_classifier_view(const LabeledData& data, const ClassifierSpec& spec,
                                         const std::vector<int>& k_values, std::uint64_t seed);

// A point is flagged only when every classifier's prediction disagrees with
// its current label.
std::vector<int> flag_mislabeled(const LabeledData& data,
                                 const std::vector<ClassifierView>& views);

enum class RefineAction { kept, relabeled, pruned };

const char* refine_action_name(RefineAction a);

struct UpdateResult {
    std::vector<int> new_labels;   // labels after the pass, original indexing
    std::vector<bool> keep;        // false for pruned points
    int relabeled = 0;
    int pruned = 0;
};

// Flagged points are relabeled when all classifiers agree on the replacement
// class and its mean confidence strictly exceeds the threshold; otherwise
// they are pruned.
UpdateResult update_or_prune(const LabeledData& data, const std::vector<int>& flagged,
                             const std::vector<ClassifierView>& views, double threshold);

struct RefineIteration {
    int flagged = 0;
    int relabeled = 0;
    int pruned = 0;
};

struct PointProvenance {
    int original_label = 0;
    int final_label = 0;
    RefineAction action = RefineAction::kept;
};

struct RefineReport {
    std::vector<RefineIteration> iterations;
    LabeledData final_data;
    // Aligned with the input dataset rows.
    std::vector<PointProvenance> provenance;
    bool emptied = false;
};

// Repeats flag -> update/prune until nothing is flagged or max_iterations.
RefineReport refine(const LabeledData& data, const RefineConfig& config,
                    const std::vector<ClassifierSpec>& specs);

// CSV with provenance columns (original_label, final_label, action).
void save_refined_csv(const LabeledData& input, const RefineReport& report,
                      const std::string& path);

} // namespace qmlsec
