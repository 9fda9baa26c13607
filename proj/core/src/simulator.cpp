#include "qmlsec/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace qmlsec {

namespace {

int required_params(GateKind kind) {
    switch (kind) {
    case GateKind::H:
    case GateKind::CNOT:
        return 0;
    case GateKind::RX:
    case GateKind::RY:
    case GateKind::RZ:
        return 1;
    case GateKind::ROT:
        return 3;
    }
    throw std::invalid_argument("unknown gate kind");
}

int required_targets(GateKind kind) {
    return kind == GateKind::CNOT ? 2 : 1;
}

void validate_op(const GateOp& op, int n_qubits) {
    if (static_cast<int>(op.params.size()) != required_params(op.kind))
        throw std::invalid_argument("gate param count mismatch");
    if (static_cast<int>(op.targets.size()) != required_targets(op.kind))
        throw std::invalid_argument("gate target count mismatch");
    for (int q : op.targets) {
        if (q < 0 || q >= n_qubits)
            throw std::out_of_range("qubit index out of range");
    }
    if (op.kind == GateKind::CNOT && op.targets[0] == op.targets[1])
        throw std::invalid_argument("CNOT control and target must differ");
}

} // namespace

void Circuit::validate() const {
    if (n_qubits < 1 || n_qubits > kMaxQubits)
        throw std::invalid_argument("circuit qubit count must be in [1, " +
                                    std::to_string(kMaxQubits) + "]");
    for (const auto& op : ops)
        validate_op(op, n_qubits);
}

void NoiseSpec::validate() const {
    if (!(readout_flip_prob >= 0.0 && readout_flip_prob <= 1.0))
        throw std::invalid_argument("readout_flip_prob must be in [0, 1]");
}

StateVector::StateVector(int n_qubits) : n_qubits_(n_qubits) {
    if (n_qubits < 1 || n_qubits > kMaxQubits)
        throw std::invalid_argument("qubit count must be in [1, " +
                                    std::to_string(kMaxQubits) + "]");
    amps_.assign(std::size_t{1} << n_qubits, complex_t{0.0, 0.0});
    amps_[0] = complex_t{1.0, 0.0};
}

double StateVector::norm() const {
    double s = 0.0;
    for (const auto& a : amps_)
        s += std::norm(a);
    return std::sqrt(s);
}

void StateVector::apply_single(int q, const complex_t u[4]) {
    const std::size_t mask = std::size_t{1} << q;
    const std::size_t n = amps_.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (i & mask)
            continue;
        const complex_t a = amps_[i];
        const complex_t b = amps_[i | mask];
        amps_[i] = u[0] * a + u[1] * b;
        amps_[i | mask] = u[2] * a + u[3] * b;
    }
}

void StateVector::apply_cnot(int control, int target) {
    const std::size_t cmask = std::size_t{1} << control;
    const std::size_t tmask = std::size_t{1} << target;
    const std::size_t n = amps_.size();
    for (std::size_t i = 0; i < n; ++i) {
        if ((i & cmask) && !(i & tmask))
            std::swap(amps_[i], amps_[i | tmask]);
    }
}

void StateVector::apply(const GateOp& op) {
    validate_op(op, n_qubits_);
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    switch (op.kind) {
    case GateKind::H: {
        const complex_t u[4] = {{inv_sqrt2, 0}, {inv_sqrt2, 0}, {inv_sqrt2, 0}, {-inv_sqrt2, 0}};
        apply_single(op.targets[0], u);
        break;
    }
    case GateKind::RX: {
        const double h = op.params[0] / 2.0;
        const complex_t u[4] = {{std::cos(h), 0}, {0, -std::sin(h)}, {0, -std::sin(h)}, {std::cos(h), 0}};
        apply_single(op.targets[0], u);
        break;
    }
    case GateKind::RY: {
        const double h = op.params[0] / 2.0;
        const complex_t u[4] = {{std::cos(h), 0}, {-std::sin(h), 0}, {std::sin(h), 0}, {std::cos(h), 0}};
        apply_single(op.targets[0], u);
        break;
    }
    case GateKind::RZ: {
        const double h = op.params[0] / 2.0;
        const complex_t u[4] = {std::polar(1.0, -h), {0, 0}, {0, 0}, std::polar(1.0, h)};
        apply_single(op.targets[0], u);
        break;
    }
    case GateKind::ROT: {
        // RZ(phi) * RY(theta) * RZ(omega), omega acting first.
        const double phi = op.params[0];
        const double theta = op.params[1];
        const double omega = op.params[2];
        const double c = std::cos(theta / 2.0);
        const double s = std::sin(theta / 2.0);
        const complex_t u[4] = {
            std::polar(c, -(phi + omega) / 2.0),
            std::polar(-s, -(phi - omega) / 2.0),
            std::polar(s, (phi - omega) / 2.0),
            std::polar(c, (phi + omega) / 2.0),
        };
        apply_single(op.targets[0], u);
        break;
    }
    case GateKind::CNOT:
        apply_cnot(op.targets[0], op.targets[1]);
        break;
    }
}

StateVector apply_gate(StateVector state, const GateOp& op) {
    state.apply(op);
    return state;
}

StateVector run(const Circuit& circuit) {
    circuit.validate();
    StateVector state(circuit.n_qubits);
    for (const auto& op : circuit.ops)
        state.apply(op);
    return state;
}

double expval_z(const StateVector& state, int qubit) {
    if (qubit < 0 || qubit >= state.n_qubits())
        throw std::out_of_range("qubit index out of range");
    const std::size_t mask = std::size_t{1} << qubit;
    const auto& amps = state.amplitudes();
    double value = 0.0;
    for (std::size_t i = 0; i < amps.size(); ++i) {
        const double p = std::norm(amps[i]);
        value += (i & mask) ? -p : p;
    }
    return value;
}

Counts sample_counts(const StateVector& state, std::int64_t shots,
                     std::uint64_t seed, const NoiseSpec& noise) {
    if (shots < 1)
        throw std::invalid_argument("shots must be >= 1");
    noise.validate();

    const auto& amps = state.amplitudes();
    std::vector<double> cdf(amps.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < amps.size(); ++i) {
        acc += std::norm(amps[i]);
        cdf[i] = acc;
    }
    cdf.back() = std::max(cdf.back(), 1.0);

    const int n = state.n_qubits();
    std::mt19937_64 rng(seed);
    Counts counts;
    std::string key(static_cast<std::size_t>(n), '0');
    for (std::int64_t s = 0; s < shots; ++s) {
        const double u = uniform01(rng());
        std::size_t idx = static_cast<std::size_t>(
            std::lower_bound(cdf.begin(), cdf.end(), u,
                             [](double lhs, double rhs) { return lhs <= rhs; }) -
            cdf.begin());
        if (idx >= amps.size())
            idx = amps.size() - 1;
        if (noise.readout_flip_prob > 0.0) {
            for (int q = 0; q < n; ++q) {
                if (uniform01(rng()) < noise.readout_flip_prob)
                    idx ^= std::size_t{1} << q;
            }
        }
        // Rightmost character is qubit 0.
        for (int q = 0; q < n; ++q)
            key[static_cast<std::size_t>(n - 1 - q)] = (idx >> q) & 1 ? '1' : '0';
        ++counts[key];
    }
    return counts;
}

double estimate_expval_z(const Counts& counts, int qubit) {
    if (counts.empty())
        throw std::invalid_argument("counts must be nonempty");
    std::int64_t plus = 0, minus = 0;
    for (const auto& [bits, c] : counts) {
        if (qubit < 0 || static_cast<std::size_t>(qubit) >= bits.size())
            throw std::out_of_range("qubit index out of range");
        const char bit = bits[bits.size() - 1 - static_cast<std::size_t>(qubit)];
        (bit == '1' ? minus : plus) += c;
    }
    return static_cast<double>(plus - minus) / static_cast<double>(plus + minus);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace qmlsec
