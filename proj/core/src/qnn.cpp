#include "qmlsec/qnn.hpp"

#include "qmlsec/errors.hpp"

#include "json_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace qmlsec {

namespace {

constexpr double kHalfPi = 1.5707963267948966192313216916398;
constexpr double kProbFloor = 1e-12;

std::uint64_t fnv64_doubles(std::uint64_t h, const std::vector<double>& values) {
    for (double v : values) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        for (int b = 0; b < 8; ++b) {
            h ^= (bits >> (8 * b)) & 0xff;
            h *= 1099511628211ULL;
        }
    }
    return h;
}

void apply_encode(StateVector& state, const std::vector<double>& angles) {
    for (int q = 0; q < state.n_qubits(); ++q)
        state.apply(GateOp::h(q));
    for (int q = 0; q < state.n_qubits(); ++q)
        state.apply(GateOp::rz(q, angles[static_cast<std::size_t>(q)]));
}

void apply_ansatz(StateVector& state, const std::vector<double>& params,
                  int n_layers, int n_qubits) {
    std::size_t p = 0;
    for (int l = 0; l < n_layers; ++l) {
        for (int q = 0; q < n_qubits; ++q) {
            state.apply(GateOp::rot(q, params[p], params[p + 1], params[p + 2]));
            p += 3;
        }
        if (n_qubits > 1) {
            const int range = l % (n_qubits - 1) + 1;
            for (int q = 0; q < n_qubits; ++q)
                state.apply(GateOp::cnot(q, (q + range) % n_qubits));
        }
    }
}

std::vector<double> all_expvals_analytic(const StateVector& state) {
    const int n = state.n_qubits();
    std::vector<double> ev(static_cast<std::size_t>(n), 0.0);
    const auto& amps = state.amplitudes();
    for (std::size_t i = 0; i < amps.size(); ++i) {
        const double p = std::norm(amps[i]);
        for (int q = 0; q < n; ++q)
            ev[static_cast<std::size_t>(q)] += (i >> q) & 1 ? -p : p;
    }
    return ev;
}

std::vector<double> circuit_expvals(const QnnConfig& config,
                                    const std::vector<double>& qparams,
                                    const std::vector<double>& angles) {
    StateVector state(config.n_qubits);
    apply_encode(state, angles);
    apply_ansatz(state, qparams, config.n_layers, config.n_qubits);
    if (config.shots == 0)
        return all_expvals_analytic(state);

    std::uint64_t h = 1469598103934665603ULL ^ config.seed;
    h = fnv64_doubles(h, angles);
    h = fnv64_doubles(h, qparams);
    const Counts counts = sample_counts(state, config.shots, h, config.noise);
    std::vector<double> ev(static_cast<std::size_t>(config.n_qubits));
    for (int q = 0; q < config.n_qubits; ++q)
        ev[static_cast<std::size_t>(q)] = estimate_expval_z(counts, q);
    return ev;
}

int argmax_lowest(const std::vector<double>& values) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(values.size()); ++i) {
        if (values[static_cast<std::size_t>(i)] > values[static_cast<std::size_t>(best)])
            best = i;
    }
    return best;
}

} // namespace

void QnnConfig::validate() const {
    if (n_qubits < 1 || n_qubits > kMaxQubits)
        throw ConfigError("n_qubits must be in [1, " + std::to_string(kMaxQubits) + "]");
    if (n_layers < 1)
        throw ConfigError("n_layers must be >= 1");
    if (n_classes < 1)
        throw ConfigError("n_classes must be >= 1");
    if (n_mask_classes < 0)
        throw ConfigError("n_mask_classes must be >= 0");
    if (measured_qubits.empty())
        throw ConfigError("measured_qubits must be nonempty");
    if (static_cast<int>(measured_qubits.size()) > n_qubits)
        throw ConfigError("measured_qubits larger than register");
    std::vector<bool> seen(static_cast<std::size_t>(n_qubits), false);
    for (int q : measured_qubits) {
        if (q < 0 || q >= n_qubits)
            throw ConfigError("measured qubit index out of range");
        if (seen[static_cast<std::size_t>(q)])
            throw ConfigError("measured_qubits must be distinct");
        seen[static_cast<std::size_t>(q)] = true;
    }
    if (head_kind == HeadKind::direct_softmax &&
        static_cast<int>(measured_qubits.size()) != output_classes())
        throw ConfigError("direct_softmax head needs one measured qubit per output class");
    if (defended() && output_classes() > n_qubits)
        throw ConfigError("defended config needs output_classes <= n_qubits");
    if (shots < 0)
        throw ConfigError("shots must be >= 0");
    noise.validate();
    if (!(lr > 0.0))
        throw ConfigError("lr must be > 0");
    if (batch_size < 1)
        throw ConfigError("batch_size must be >= 1");
    if (epochs < 0)
        throw ConfigError("epochs must be >= 0");
    if (alpha < 0.0)
        throw ConfigError("alpha must be >= 0");
}

QnnModel QnnModel::init(const QnnConfig& config) {
    QnnModel model;
    model.config = config;
    if (model.config.measured_qubits.empty()) {
        for (int q = 0; q < std::min(config.n_classes, config.n_qubits); ++q)
            model.config.measured_qubits.push_back(q);
    }
    model.config.validate();

    const std::size_t n_params = static_cast<std::size_t>(config.n_layers) *
                                 static_cast<std::size_t>(config.n_qubits) * 3;
    model.quantum_params.resize(n_params);
    std::mt19937_64 rng(mix_seed(config.seed, 0x1417));
    for (auto& p : model.quantum_params)
        p = uniform01(rng()) * kTwoPi;

    if (config.head_kind == HeadKind::linear) {
        const std::size_t k = static_cast<std::size_t>(model.config.output_classes());
        const std::size_t s = model.config.measured_qubits.size();
        model.head_weights.assign(k * s, 0.0);
        model.head_bias.assign(k, 0.0);
    }
    return model;
}

double& QnnModel::qparam(int layer, int qubit, int k) {
    return quantum_params[static_cast<std::size_t>((layer * config.n_qubits + qubit) * 3 + k)];
}

double QnnModel::qparam(int layer, int qubit, int k) const {
    return quantum_params[static_cast<std::size_t>((layer * config.n_qubits + qubit) * 3 + k)];
}

Circuit encode(const std::vector<double>& features, int n_qubits) {
    if (static_cast<int>(features.size()) != n_qubits)
        throw ConfigError("expected " + std::to_string(n_qubits) + " features, got " +
                          std::to_string(features.size()));
    for (double f : features) {
        if (!(f >= 0.0 && f < kTwoPi))
            throw DataError("encoded feature outside [0, 2pi): " + std::to_string(f));
    }
    Circuit c;
    c.n_qubits = n_qubits;
    for (int q = 0; q < n_qubits; ++q)
        c.ops.push_back(GateOp::h(q));
    for (int q = 0; q < n_qubits; ++q)
        c.ops.push_back(GateOp::rz(q, features[static_cast<std::size_t>(q)]));
    return c;
}

Circuit build_ansatz(const std::vector<double>& params, int n_layers, int n_qubits) {
    if (params.size() != static_cast<std::size_t>(n_layers) * static_cast<std::size_t>(n_qubits) * 3)
        throw ConfigError("ansatz parameter count must be n_layers * n_qubits * 3");
    Circuit c;
    c.n_qubits = n_qubits;
    std::size_t p = 0;
    for (int l = 0; l < n_layers; ++l) {
        for (int q = 0; q < n_qubits; ++q) {
            c.ops.push_back(GateOp::rot(q, params[p], params[p + 1], params[p + 2]));
            p += 3;
        }
        if (n_qubits > 1) {
            const int range = l % (n_qubits - 1) + 1;
            for (int q = 0; q < n_qubits; ++q)
                c.ops.push_back(GateOp::cnot(q, (q + range) % n_qubits));
        }
    }
    return c;
}

std::vector<double> softmax(const std::vector<double>& logits) {
    const double top = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - top);
        sum += out[i];
    }
    for (auto& v : out)
        v /= sum;
    return out;
}

ForwardRecord forward(const QnnModel& model, const std::vector<double>& features) {
    const auto& cfg = model.config;
    if (static_cast<int>(features.size()) != cfg.n_qubits)
        throw ConfigError("feature count does not match qubit count");

    ForwardRecord rec;
    rec.angles = features;
    rec.expvals = circuit_expvals(cfg, model.quantum_params, features);

    const std::size_t n_out = static_cast<std::size_t>(cfg.output_classes());
    std::vector<double> logits;
    if (cfg.head_kind == HeadKind::direct_softmax) {
        for (int q : cfg.measured_qubits)
            logits.push_back(rec.expvals[static_cast<std::size_t>(q)]);
    } else {
        logits.assign(n_out, 0.0);
        const std::size_t s = cfg.measured_qubits.size();
        for (std::size_t k = 0; k < n_out; ++k) {
            double z = model.head_bias[k];
            for (std::size_t j = 0; j < s; ++j)
                z += model.head_weights[k * s + j] *
                     rec.expvals[static_cast<std::size_t>(cfg.measured_qubits[j])];
            logits[k] = z;
        }
    }
    rec.user_probs = softmax(logits);
    rec.predicted_class = argmax_lowest(rec.user_probs);
    return rec;
}

double cross_entropy(const std::vector<double>& probs, int label) {
    if (label < 0 || label >= static_cast<int>(probs.size()))
        throw ConfigError("label out of range");
    return -std::log(std::max(probs[static_cast<std::size_t>(label)], kProbFloor));
}

LossFn standard_loss() {
    return [](const QnnModel& model, const ForwardRecord& rec, int true_label,
              int /*adv_label*/) {
        const auto& cfg = model.config;
        LossGrad lg;
        lg.value = cross_entropy(rec.user_probs, true_label);
        lg.dexpvals.assign(static_cast<std::size_t>(cfg.n_qubits), 0.0);

        const std::size_t n_out = rec.user_probs.size();
        const std::size_t s = cfg.measured_qubits.size();
        if (cfg.head_kind == HeadKind::direct_softmax) {
            for (std::size_t k = 0; k < n_out; ++k) {
                const double delta = rec.user_probs[k] - (static_cast<int>(k) == true_label ? 1.0 : 0.0);
                lg.dexpvals[static_cast<std::size_t>(cfg.measured_qubits[k])] += delta;
            }
        } else {
            lg.dweights.assign(n_out * s, 0.0);
            lg.dbias.assign(n_out, 0.0);
            for (std::size_t k = 0; k < n_out; ++k) {
                const double delta = rec.user_probs[k] - (static_cast<int>(k) == true_label ? 1.0 : 0.0);
                lg.dbias[k] = delta;
                for (std::size_t j = 0; j < s; ++j) {
                    const double e = rec.expvals[static_cast<std::size_t>(cfg.measured_qubits[j])];
                    lg.dweights[k * s + j] = delta * e;
                    lg.dexpvals[static_cast<std::size_t>(cfg.measured_qubits[j])] +=
                        model.head_weights[k * s + j] * delta;
                }
            }
        }
        return lg;
    };
}

LossFn defended_loss_fn() {
    return [](const QnnModel& model, const ForwardRecord& rec, int true_label,
              int adv_label) {
        const auto& cfg = model.config;
        if (!cfg.defended())
            throw ConfigError("defended loss requires n_mask_classes > 0");
        if (adv_label < 0 || adv_label >= cfg.n_qubits)
            throw ConfigError("adversarial label out of range for all-qubit view");

        LossGrad lg = standard_loss()(model, rec, true_label, adv_label);
        // The adversary's only statistic is the weight-free softmax over all
        // qubit expectations.
        const std::vector<double> q = softmax(rec.expvals);
        lg.value += cfg.alpha * cross_entropy(q, adv_label);
        for (std::size_t i = 0; i < q.size(); ++i) {
            const double delta = q[i] - (static_cast<int>(i) == adv_label ? 1.0 : 0.0);
            lg.dexpvals[i] += cfg.alpha * delta;
        }
        return lg;
    };
}

double defended_loss(const QnnModel& model, const std::vector<double>& features,
                     int true_label, int adv_label) {
    const ForwardRecord rec = forward(model, features);
    return defended_loss_fn()(model, rec, true_label, adv_label).value;
}

Gradients param_shift_grad(const QnnModel& model, const Batch& batch, const LossFn& loss_fn) {
    if (batch.features.empty())
        throw DataError("empty batch");
    if (batch.labels.size() != batch.features.size())
        throw ConfigError("batch labels/features size mismatch");
    if (!batch.adv_labels.empty() && batch.adv_labels.size() != batch.features.size())
        throw ConfigError("batch adv_labels size mismatch");

    const auto& cfg = model.config;
    Gradients g;
    g.quantum.assign(model.quantum_params.size(), 0.0);
    g.head_weights.assign(model.head_weights.size(), 0.0);
    g.head_bias.assign(model.head_bias.size(), 0.0);

    std::vector<double> shifted = model.quantum_params;
    for (std::size_t i = 0; i < batch.features.size(); ++i) {
        const auto& x = batch.features[i];
        const int label = batch.labels[i];
        const int adv = batch.adv_labels.empty() ? -1 : batch.adv_labels[i];

        const ForwardRecord rec = forward(model, x);
        const LossGrad lg = loss_fn(model, rec, label, adv);
        g.mean_loss += lg.value;
        for (std::size_t k = 0; k < lg.dweights.size(); ++k)
            g.head_weights[k] += lg.dweights[k];
        for (std::size_t k = 0; k < lg.dbias.size(); ++k)
            g.head_bias[k] += lg.dbias[k];

        const bool any_sensitivity =
            std::any_of(lg.dexpvals.begin(), lg.dexpvals.end(),
                        [](double v) { return v != 0.0; });
        if (!any_sensitivity)
            continue;

        for (std::size_t j = 0; j < shifted.size(); ++j) {
            const double original = shifted[j];
            shifted[j] = original + kHalfPi;
            const auto plus = circuit_expvals(cfg, shifted, x);
            shifted[j] = original - kHalfPi;
            const auto minus = circuit_expvals(cfg, shifted, x);
            shifted[j] = original;

            double dl = 0.0;
            for (int q = 0; q < cfg.n_qubits; ++q) {
                const double sens = lg.dexpvals[static_cast<std::size_t>(q)];
                if (sens != 0.0)
                    dl += sens * (plus[static_cast<std::size_t>(q)] -
                                  minus[static_cast<std::size_t>(q)]) / 2.0;
            }
            g.quantum[j] += dl;
        }
    }

    const double inv = 1.0 / static_cast<double>(batch.features.size());
    for (auto& v : g.quantum)
        v *= inv;
    for (auto& v : g.head_weights)
        v *= inv;
    for (auto& v : g.head_bias)
        v *= inv;
    g.mean_loss *= inv;
    return g;
}

void adam_step(std::vector<double>& params, const std::vector<double>& grads,
               AdamState& state, double lr) {
    if (grads.size() != params.size())
        throw ConfigError("adam_step shape mismatch");
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size() || state.v.size() != params.size())
        throw ConfigError("adam_step state shape mismatch");

    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;
    ++state.t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

double evaluate_accuracy(const QnnModel& model, const Dataset& dataset,
                         const std::vector<int>& indices) {
    if (indices.empty())
        return 0.0;
    int hits = 0;
    for (int idx : indices) {
        const auto rec = forward(model, dataset.features[static_cast<std::size_t>(idx)]);
        if (rec.predicted_class == dataset.labels[static_cast<std::size_t>(idx)])
            ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(indices.size());
}

TrainReport train(QnnModel& model, const Dataset& dataset, TrainObserver* observer,
                  const std::vector<int>* adv_targets, OptimizerState* opt) {
    const auto& cfg = model.config;
    cfg.validate();
    if (dataset.size() == 0)
        throw DataError("cannot train on an empty dataset");
    if (dataset.train_indices.empty())
        throw DataError("cannot train: empty train split");
    if (cfg.defended() && adv_targets == nullptr)
        throw ConfigError("defended training requires adversarial targets");
    if (adv_targets && adv_targets->size() != dataset.size())
        throw ConfigError("adversarial targets must cover every dataset row");

    const LossFn loss_fn = cfg.defended() ? defended_loss_fn() : standard_loss();

    OptimizerState local;
    OptimizerState& states = opt ? *opt : local;
    TrainReport report;
    std::vector<int> order = dataset.train_indices;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::mt19937_64 rng(mix_seed(cfg.seed, 0xe90c40ULL + static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform01(rng()) * static_cast<double>(i));
            std::swap(order[i - 1], order[std::min(j, i - 1)]);
        }

        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            Batch batch;
            for (std::size_t i = start; i < stop; ++i) {
                const int idx = order[i];
                batch.features.push_back(dataset.features[static_cast<std::size_t>(idx)]);
                batch.labels.push_back(dataset.labels[static_cast<std::size_t>(idx)]);
                if (adv_targets)
                    batch.adv_labels.push_back((*adv_targets)[static_cast<std::size_t>(idx)]);
            }
            const Gradients g = param_shift_grad(model, batch, loss_fn);
            adam_step(model.quantum_params, g.quantum, states.quantum, cfg.lr);
            if (cfg.head_kind == HeadKind::linear) {
                adam_step(model.head_weights, g.head_weights, states.weights, cfg.lr);
                adam_step(model.head_bias, g.head_bias, states.bias, cfg.lr);
            }
        }

        // Epoch log: one full forward pass over the train split in row order.
        std::vector<ForwardRecord> records;
        records.reserve(dataset.train_indices.size());
        EpochMetrics metrics;
        int hits = 0;
        for (int idx : dataset.train_indices) {
            ForwardRecord rec = forward(model, dataset.features[static_cast<std::size_t>(idx)]);
            const int label = dataset.labels[static_cast<std::size_t>(idx)];
            const int adv = adv_targets ? (*adv_targets)[static_cast<std::size_t>(idx)] : -1;
            metrics.mean_loss += loss_fn(model, rec, label, adv).value;
            if (rec.predicted_class == label)
                ++hits;
            records.push_back(std::move(rec));
        }
        metrics.mean_loss /= static_cast<double>(dataset.train_indices.size());
        metrics.train_accuracy = static_cast<double>(hits) /
                                 static_cast<double>(dataset.train_indices.size());
        report.epochs.push_back(metrics);
        if (observer)
            observer->on_epoch(epoch, records);
    }

    if (cfg.epochs > 0 && !dataset.test_indices.empty())
        report.test_accuracy = evaluate_accuracy(model, dataset, dataset.test_indices);
    return report;
}

namespace {

nlohmann::json adam_to_json(const AdamState& s) {
    return {{"m", s.m}, {"v", s.v}, {"t", s.t}};
}

AdamState adam_from_json(const nlohmann::json& j) {
    AdamState s;
    s.m = j.at("m").get<std::vector<double>>();
    s.v = j.at("v").get<std::vector<double>>();
    s.t = j.at("t").get<std::int64_t>();
    return s;
}

} // namespace

nlohmann::json config_to_json(const QnnConfig& cfg) {
    return {
        {"n_qubits", cfg.n_qubits},
        {"n_layers", cfg.n_layers},
        {"n_classes", cfg.n_classes},
        {"n_mask_classes", cfg.n_mask_classes},
        {"measured_qubits", cfg.measured_qubits},
        {"head_kind", cfg.head_kind == HeadKind::linear ? "linear" : "direct_softmax"},
        {"shots", cfg.shots},
        {"readout_flip_prob", cfg.noise.readout_flip_prob},
        {"lr", cfg.lr},
        {"batch_size", cfg.batch_size},
        {"epochs", cfg.epochs},
        {"alpha", cfg.alpha},
        {"seed", cfg.seed},
    };
}

QnnConfig config_from_json(const nlohmann::json& j) {
    QnnConfig cfg;
    cfg.n_qubits = j.at("n_qubits").get<int>();
    cfg.n_layers = j.at("n_layers").get<int>();
    cfg.n_classes = j.at("n_classes").get<int>();
    cfg.n_mask_classes = j.value("n_mask_classes", 0);
    cfg.measured_qubits = j.at("measured_qubits").get<std::vector<int>>();
    const std::string head = j.value("head_kind", "linear");
    if (head == "linear") {
        cfg.head_kind = HeadKind::linear;
    } else if (head == "direct_softmax") {
        cfg.head_kind = HeadKind::direct_softmax;
    } else {
        throw ConfigError("unknown head_kind '" + head + "'");
    }
    cfg.shots = j.value("shots", std::int64_t{0});
    cfg.noise.readout_flip_prob = j.value("readout_flip_prob", 0.0);
    cfg.lr = j.value("lr", 1e-3);
    cfg.batch_size = j.value("batch_size", 16);
    cfg.epochs = j.value("epochs", 30);
    cfg.alpha = j.value("alpha", 0.0);
    cfg.seed = j.value("seed", std::uint64_t{0});
    return cfg;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    nlohmann::json j = {
        {"format", "qmlsec-checkpoint-v1"},
        {"config", config_to_json(ckpt.model.config)},
        {"quantum_params", ckpt.model.quantum_params},
        {"head_weights", ckpt.model.head_weights},
        {"head_bias", ckpt.model.head_bias},
        {"adam", {{"quantum", adam_to_json(ckpt.opt.quantum)},
                  {"head_weights", adam_to_json(ckpt.opt.weights)},
                  {"head_bias", adam_to_json(ckpt.opt.bias)}}},
    };
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write checkpoint '" + path + "'");
    out << j.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open checkpoint '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed checkpoint '" + path + "': " + e.what());
    }
    if (j.value("format", "") != "qmlsec-checkpoint-v1")
        throw DataError("unsupported checkpoint format in '" + path + "'");

    Checkpoint ckpt;
    ckpt.model.config = config_from_json(j.at("config"));
    ckpt.model.quantum_params = j.at("quantum_params").get<std::vector<double>>();
    ckpt.model.head_weights = j.at("head_weights").get<std::vector<double>>();
    ckpt.model.head_bias = j.at("head_bias").get<std::vector<double>>();
    ckpt.opt.quantum = adam_from_json(j.at("adam").at("quantum"));
    ckpt.opt.weights = adam_from_json(j.at("adam").at("head_weights"));
    ckpt.opt.bias = adam_from_json(j.at("adam").at("head_bias"));
    return ckpt;
}

} // namespace qmlsec
