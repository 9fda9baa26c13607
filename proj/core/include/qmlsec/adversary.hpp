#pragma once

#include "qmlsec/qnn.hpp"

#include <string>
#include <vector>

namespace qmlsec {

// One observed forward pass. user_probs is only visible to the stronger
// adversary modeled by AdversaryView::class_probs; it is empty when the
// victim keeps its classical head off the cloud.
struct LogRecord {
    int epoch = 0; // 1-based
    std::vector<double> angles;
    std::vector<double> expvals;
    std::vector<double> user_probs;
};

// Append-only store of everything the cloud saw during victim training.
class LogStore : public TrainObserver {
  public:
    void observe(int epoch_index, LogRecord record);
    void on_epoch(int epoch_index, const std::vector<ForwardRecord>& records) override;

    const std::vector<LogRecord>& records() const { return records_; }
    bool empty() const { return records_.empty(); }
    int max_epoch() const { return max_epoch_; }

    // Records up to and including the given epoch.
    LogStore prefix(int epoch) const;

    void save_jsonl(const std::string& path) const;
    // Throws DataError naming the offending line on corrupt input.
    static LogStore load_jsonl(const std::string& path);

  private:
    std::vector<LogRecord> records_;
    int max_epoch_ = 0;
};

enum class AdversaryView { expvals, class_probs };

struct EpochGuess {
    int epoch = 0;
    int cls = 0;
};

struct PointHistory {
    std::vector<double> angles; // canonical (first observed) encoding
    std::vector<EpochGuess> guesses; // at most one per epoch, epoch-ascending
};

// Argmax over the expectation values of assumed_qubits; the class id is the
// position within the subset. Lowest index wins ties.
int infer_epoch_label(const LogRecord& record, const std::vector<int>& assumed_qubits);

// Matches records across epochs by angle-vector equality (1e-9 per
// coordinate) and attaches one class guess per epoch.
std::vector<PointHistory> group_points(const LogStore& store, AdversaryView view,
                                       const std::vector<int>& assumed_qubits);

int majority_vote(const PointHistory& history);
int weighted_linear_vote(const PointHistory& history);
// Weights double per epoch up to the rollover R = ceil(0.9 * total_epochs)
// and stay constant after it.
int weighted_exp_vote(const PointHistory& history, int total_epochs);

enum class Heuristic { majority, weighted_linear, weighted_exp };

const char* heuristic_name(Heuristic h);
Heuristic heuristic_from_name(const std::string& name);

struct ExtractedPoint {
    std::vector<double> angles;
    int label = 0;
    double margin = 0.0; // winning weight share in (0, 1]
};

struct ExtractedDataset {
    std::vector<ExtractedPoint> points;
    Heuristic heuristic = Heuristic::majority;
    int label_space = 0; // number of classes the guesses can take
};

ExtractedDataset extract(const LogStore& store, Heuristic heuristic, AdversaryView view,
                         const std::vector<int>& assumed_qubits, int total_epochs);

void save_extracted_csv(const ExtractedDataset& ds, const std::string& path);
ExtractedDataset load_extracted_csv(const std::string& path);

// Harness-side scoring: fraction of extracted points whose voted label equals
// the ground-truth label of the matching angle vector. Unmatched points count
// as wrong.
double extraction_accuracy(const ExtractedDataset& extracted,
                           const std::vector<std::vector<double>>& true_angles,
                           const std::vector<int>& true_labels);

} // namespace qmlsec
