#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dlgn/gates.hpp"
#include "dlgn/matrix.hpp"

namespace dlgn {

// One layer of two-input neurons. Wiring indexes the previous layer's
// outputs (or the network input for layer 0) and never changes after
// construction. Each neuron owns 16 logits, one per GateKind.
struct LogicLayer {
    std::vector<std::uint32_t> in_a;
    std::vector<std::uint32_t> in_b;
    std::vector<double> logits;  // width * kNumGates, neuron-major

    std::size_t width() const { return in_a.size(); }
    std::span<double> neuron_logits(std::size_t j) {
        return {logits.data() + j * kNumGates, static_cast<std::size_t>(kNumGates)};
    }
    std::span<const double> neuron_logits(std::size_t j) const {
        return {logits.data() + j * kNumGates, static_cast<std::size_t>(kNumGates)};
    }

    bool operator==(const LogicLayer&) const = default;
};

class LogicNetwork {
public:
    LogicNetwork() = default;
    // Validates wiring bounds and shapes; throws std::invalid_argument.
    LogicNetwork(std::size_t input_dim, std::vector<LogicLayer> layers, std::uint64_t seed);

    std::size_t input_dim() const { return input_dim_; }
    std::size_t output_dim() const { return layers_.back().width(); }
    std::size_t num_layers() const { return layers_.size(); }
    std::size_t num_neurons() const;
    std::vector<std::size_t> widths() const;
    std::uint64_t seed() const { return seed_; }

    const std::vector<LogicLayer>& layers() const { return layers_; }
    const LogicLayer& layer(std::size_t l) const { return layers_[l]; }
    // Logits are mutable; wiring is not exposed for mutation.
    std::span<double> logits(std::size_t l) { return layers_[l].logits; }

    bool operator==(const LogicNetwork&) const = default;

private:
    std::size_t input_dim_ = 0;
    std::vector<LogicLayer> layers_;
    std::uint64_t seed_ = 0;
};

// Random wiring (uniform over the previous layer, in_b resampled once when it
// collides with in_a) and N(0, 1) logits. Deterministic in seed.
LogicNetwork build_network(std::size_t input_dim, std::span<const std::size_t> widths,
                           std::uint64_t seed);

// softmax over one neuron's logits.
std::array<double, kNumGates> gate_probabilities(std::span<const double> logits);

// Highest logit wins; ties go to the lowest gate id.
GateKind argmax_gate(std::span<const double> logits);

// values[0] is the input batch, values[l + 1] the output of layer l. Stored
// feature-major (one row per neuron, one column per sample) so the inner
// loops run over contiguous samples.
struct Activations {
    std::vector<Matrix<double>> values;
    // Network output, one row per sample.
    Matrix<double> output() const { return values.back().transposed(); }
};

Activations forward_relaxed(const LogicNetwork& net, const Matrix<double>& x);

struct NetworkGradients {
    std::vector<std::vector<double>> logits;  // same layout as LogicLayer::logits
    Matrix<double> input;                     // empty unless requested
};

// Reverse pass for a scalar loss whose gradient wrt the network output is
// grad_out. Per-neuron reductions run over samples in index order, so the
// result is bit-reproducible.
NetworkGradients backward(const LogicNetwork& net, const Activations& acts,
                          const Matrix<double>& grad_out, bool want_input_grad = true);

// Reference discrete path: each neuron applies its argmax gate to 0/1 inputs.
Matrix<std::uint8_t> forward_discrete(const LogicNetwork& net, const Matrix<std::uint8_t>& x);

// Number of distinct network inputs that output neuron `output` depends on.
std::size_t receptive_field(const LogicNetwork& net, std::size_t output);

}  // namespace dlgn
