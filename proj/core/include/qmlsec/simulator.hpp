#pragma once

#include <complex>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace qmlsec {

using complex_t = std::complex<double>;

// Dense statevector simulation is capped well below memory limits; the models
// in scope use 4-8 qubits.
inline constexpr int kMaxQubits = 12;

enum class GateKind { H, RX, RY, RZ, ROT, CNOT };

// A single gate application. ROT carries three Euler angles (phi, theta,
// omega) and acts as the matrix product RZ(phi) * RY(theta) * RZ(omega).
struct GateOp {
    GateKind kind;
    std::vector<int> targets;
    std::vector<double> params;

    static GateOp h(int q) { return {GateKind::H, {q}, {}}; }
    static GateOp rx(int q, double theta) { return {GateKind::RX, {q}, {theta}}; }
    static GateOp ry(int q, double theta) { return {GateKind::RY, {q}, {theta}}; }
    static GateOp rz(int q, double theta) { return {GateKind::RZ, {q}, {theta}}; }
    static GateOp rot(int q, double phi, double theta, double omega) {
        return {GateKind::ROT, {q}, {phi, theta, omega}};
    }
    static GateOp cnot(int control, int target) {
        return {GateKind::CNOT, {control, target}, {}};
    }
};

struct Circuit {
    int n_qubits = 0;
    std::vector<GateOp> ops;

    // Throws std::invalid_argument on out-of-range qubits, duplicate
    // two-qubit targets, or param-count mismatches.
    void validate() const;
};

// Pure state on n qubits. Qubit 0 is the least-significant bit of the basis
// state index.
class StateVector {
  public:
    explicit StateVector(int n_qubits);

    int n_qubits() const { return n_qubits_; }
    std::size_t dim() const { return amps_.size(); }
    const std::vector<complex_t>& amplitudes() const { return amps_; }
    double norm() const;

    void apply(const GateOp& op);

  private:
    int n_qubits_;
    std::vector<complex_t> amps_;

    void apply_single(int q, const complex_t u[4]);
    void apply_cnot(int control, int target);
};

// Readout bit-flip channel applied per measured bit during sampling.
struct NoiseSpec {
    double readout_flip_prob = 0.0;

    void validate() const;
};

// Keys are bitstrings with qubit 0 as the rightmost character.
using Counts = std::map<std::string, std::int64_t>;

StateVector apply_gate(StateVector state, const GateOp& op);
StateVector run(const Circuit& circuit);
double expval_z(const StateVector& state, int qubit);
Counts sample_counts(const StateVector& state, std::int64_t shots,
                     std::uint64_t seed, const NoiseSpec& noise = {});
double estimate_expval_z(const Counts& counts, int qubit);

// Deterministic uniform in [0, 1) from a 64-bit generator output.
inline double uniform01(std::uint64_t raw) {
    return static_cast<double>(raw >> 11) * 0x1.0p-53;
}

// splitmix64; used to derive independent seeds from a base seed and a tag.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag);

} // namespace qmlsec
