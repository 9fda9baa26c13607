#pragma once

#include "qmlsec/data.hpp"
#include "qmlsec/simulator.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace qmlsec {

enum class HeadKind { direct_softmax, linear };

struct QnnConfig {
    int n_qubits = 4;
    int n_layers = 6;
    int n_classes = 3;      // true classes C
    int n_mask_classes = 0; // extra masking classes m
    std::vector<int> measured_qubits; // user subset S; defaults to first C qubits
    HeadKind head_kind = HeadKind::linear;
    std::int64_t shots = 0; // 0 = analytic expectation values
    NoiseSpec noise;
    double lr = 1e-3;
    int batch_size = 16;
    int epochs = 30;
    double alpha = 0.0; // weight of the adversarial loss term
    std::uint64_t seed = 0;

    int output_classes() const { return n_classes + n_mask_classes; }
    bool defended() const { return n_mask_classes > 0; }
    void validate() const;
};

struct QnnModel {
    QnnConfig config;
    // (n_layers, n_qubits, 3) row-major.
    std::vector<double> quantum_params;
    // (output_classes x |S|) row-major plus bias; linear head only.
    std::vector<double> head_weights;
    std::vector<double> head_bias;

    static QnnModel init(const QnnConfig& config);

    double& qparam(int layer, int qubit, int k);
    double qparam(int layer, int qubit, int k) const;
};

struct ForwardRecord {
    std::vector<double> angles;
    std::vector<double> expvals;    // all n_qubits
    std::vector<double> user_probs; // softmax over the user head
    int predicted_class = 0;        // argmax, lowest-index tie-break
};

struct EpochMetrics {
    double mean_loss = 0.0;
    double train_accuracy = 0.0;
};

struct TrainReport {
    std::vector<EpochMetrics> epochs;
    std::optional<double> test_accuracy;
};

// Receives the full forward pass over the training set after each epoch.
// Epoch indices are 1-based.
class TrainObserver {
  public:
    virtual ~TrainObserver() = default;
    virtual void on_epoch(int epoch_index, const std::vector<ForwardRecord>& records) = 0;
};

// H on every qubit, then RZ(features[i]) on qubit i. Features must already be
// angles in [0, 2pi).
Circuit encode(const std::vector<double>& features, int n_qubits);

// Strongly entangling ansatz: per layer, a three-angle rotation on every
// qubit followed by a CNOT ring with range (layer mod (n_qubits-1)) + 1.
Circuit build_ansatz(const std::vector<double>& params, int n_layers, int n_qubits);

ForwardRecord forward(const QnnModel& model, const std::vector<double>& features);

double cross_entropy(const std::vector<double>& probs, int label);

// L_correct + alpha * L_adversary, where L_adversary is the cross-entropy of
// the weight-free softmax over all-qubit expectations against adv_label.
double defended_loss(const QnnModel& model, const std::vector<double>& features,
                     int true_label, int adv_label);

// Loss value and its analytic derivatives at a forward pass. dexpvals has one
// entry per qubit; dweights/dbias are empty for the direct head.
struct LossGrad {
    double value = 0.0;
    std::vector<double> dexpvals;
    std::vector<double> dweights;
    std::vector<double> dbias;
};

using LossFn = std::function<LossGrad(const QnnModel&, const ForwardRecord&,
                                      int true_label, int adv_label)>;

// Standard cross-entropy over the user head.
LossFn standard_loss();
// Cross-entropy over the user head plus alpha times the all-qubit adversarial
// term; requires a defended config.
LossFn defended_loss_fn();

struct Batch {
    std::vector<std::vector<double>> features;
    std::vector<int> labels;
    std::vector<int> adv_labels; // empty when undefended
};

struct Gradients {
    std::vector<double> quantum;
    std::vector<double> head_weights;
    std::vector<double> head_bias;
    double mean_loss = 0.0;
};

// Quantum gradients by the parameter-shift rule (two evaluations at +-pi/2
// per parameter); head gradients analytic. Averaged over the batch in index
// order.
Gradients param_shift_grad(const QnnModel& model, const Batch& batch, const LossFn& loss_fn);

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t t = 0;
};

// Standard Adam with beta1 0.9, beta2 0.999, eps 1e-8 and bias correction.
void adam_step(std::vector<double>& params, const std::vector<double>& grads,
               AdamState& state, double lr);

struct OptimizerState {
    AdamState quantum;
    AdamState weights;
    AdamState bias;
};

// Mini-batch training with a seeded shuffle per epoch. adv_targets, when
// given, is indexed by dataset row and supplies the adversarial label per
// sample for defended runs. opt, when given, is reused and updated in place.
TrainReport train(QnnModel& model, const Dataset& dataset, TrainObserver* observer,
                  const std::vector<int>* adv_targets = nullptr,
                  OptimizerState* opt = nullptr);

double evaluate_accuracy(const QnnModel& model, const Dataset& dataset,
                         const std::vector<int>& indices);

// Structured-text checkpoint (JSON): config, parameters and optimizer state.
struct Checkpoint {
    QnnModel model;
    OptimizerState opt;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

std::vector<double> softmax(const std::vector<double>& logits);

} // namespace qmlsec
