#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "dlgn/compile.hpp"
#include "dlgn/network.hpp"

namespace dlgn::oracle {

// Logits 0 for the chosen gate and -1000 elsewhere: softmax is exactly one-hot.
inline void make_one_hot(LogicNetwork& net, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> pick(0, kNumGates - 1);
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        auto w = net.logits(l);
        for (std::size_t j = 0; j < w.size() / kNumGates; ++j) {
            const int g = pick(rng);
            for (int i = 0; i < kNumGates; ++i) w[j * kNumGates + i] = i == g ? 0.0 : -1000.0;
        }
    }
}

inline Matrix<std::uint8_t> random_bits(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    Matrix<std::uint8_t> m(rows, cols);
    for (auto& v : m.values()) v = static_cast<std::uint8_t>(rng() & 1);
    return m;
}

inline Matrix<double> random_unit(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.05, 0.95);
    Matrix<double> m(rows, cols);
    for (auto& v : m.values()) v = u(rng);
    return m;
}

// Random circuit with uniformly drawn gates and wiring.
inline DiscreteCircuit random_circuit(std::size_t inputs, const std::vector<std::size_t>& widths,
                                      std::mt19937_64& rng) {
    DiscreteCircuit c;
    c.input_dim = inputs;
    std::size_t prev = inputs;
    for (auto w : widths) {
        CircuitLayer layer;
        std::uniform_int_distribution<std::uint32_t> src(0, static_cast<std::uint32_t>(prev - 1));
        for (std::size_t j = 0; j < w; ++j) {
            layer.gates.push_back(static_cast<GateKind>(rng() % kNumGates));
            layer.in_a.push_back(src(rng));
            layer.in_b.push_back(src(rng));
        }
        c.layers.push_back(std::move(layer));
        prev = w;
    }
    c.kept_outputs.assign(prev, 1);
    for (std::size_t j = 0; j < prev; ++j) c.output_origin.push_back(static_cast<std::uint32_t>(j));
    return c;
}

// Central difference of f at x[i].
inline double central_difference(std::vector<double>& x, std::size_t i,
                                 const std::function<double()>& f, double h = 1e-6) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double down = f();
    x[i] = keep;
    return (up - down) / (2 * h);
}

// Relative error with an absolute floor so near-zero gradients compare sanely.
inline double rel_err(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

}  // namespace dlgn::oracle
