#include "dlgn/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace dlgn {

namespace {

const std::array<std::array<double, 4>, kNumGates>& coefficient_table() {
    static const auto table = [] {
        std::array<std::array<double, 4>, kNumGates> t{};
        for (int i = 0; i < kNumGates; ++i) t[i] = multilinear_coefficients(gate_from_id(i));
        return t;
    }();
    return table;
}

// Mixture coefficients of every neuron in a layer, structure-of-arrays.
struct LayerMixture {
    std::vector<double> c0, ca, cb, cab;

    explicit LayerMixture(const LogicLayer& layer) {
        const std::size_t w = layer.width();
        c0.resize(w);
        ca.resize(w);
        cb.resize(w);
        cab.resize(w);
        const auto& table = coefficient_table();
        for (std::size_t j = 0; j < w; ++j) {
            const auto p = gate_probabilities(layer.neuron_logits(j));
            double k0 = 0, ka = 0, kb = 0, kab = 0;
            for (int i = 0; i < kNumGates; ++i) {
                k0 += p[i] * table[i][0];
                ka += p[i] * table[i][1];
                kb += p[i] * table[i][2];
                kab += p[i] * table[i][3];
            }
            c0[j] = k0;
            ca[j] = ka;
            cb[j] = kb;
            cab[j] = kab;
        }
    }
};

constexpr std::size_t kLanes = 8;

}  // namespace

LogicNetwork::LogicNetwork(std::size_t input_dim, std::vector<LogicLayer> layers,
                           std::uint64_t seed)
    : input_dim_(input_dim), layers_(std::move(layers)), seed_(seed) {
    if (input_dim_ < 2) throw std::invalid_argument("network input_dim must be >= 2");
    if (layers_.empty()) throw std::invalid_argument("network needs at least one layer");
    std::size_t prev = input_dim_;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& layer = layers_[l];
        const std::size_t w = layer.width();
        if (w == 0) throw std::invalid_argument("layer " + std::to_string(l) + " has width 0");
        if (layer.in_b.size() != w || layer.logits.size() != w * kNumGates) {
            throw std::invalid_argument("layer " + std::to_string(l) + " has inconsistent shapes");
        }
        for (std::size_t j = 0; j < w; ++j) {
            if (layer.in_a[j] >= prev || layer.in_b[j] >= prev) {
                throw std::invalid_argument("layer " + std::to_string(l) + " neuron " +
                                            std::to_string(j) + " wired out of range");
            }
        }
        prev = w;
    }
}

std::size_t LogicNetwork::num_neurons() const {
    std::size_t n = 0;
    for (const auto& layer : layers_) n += layer.width();
    return n;
}

std::vector<std::size_t> LogicNetwork::widths() const {
    std::vector<std::size_t> w;
    w.reserve(layers_.size());
    for (const auto& layer : layers_) w.push_back(layer.width());
    return w;
}

LogicNetwork build_network(std::size_t input_dim, std::span<const std::size_t> widths,
                           std::uint64_t seed) {
    if (input_dim < 2) throw std::invalid_argument("build_network: input_dim must be >= 2");
    if (widths.empty()) throw std::invalid_argument("build_network: no layers requested");
    for (auto w : widths) {
        if (w == 0) throw std::invalid_argument("build_network: layer width must be >= 1");
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> init(0.0, 1.0);
    std::vector<LogicLayer> layers;
    layers.reserve(widths.size());
    std::size_t prev = input_dim;
    for (auto w : widths) {
        LogicLayer layer;
        layer.in_a.resize(w);
        layer.in_b.resize(w);
        layer.logits.resize(w * kNumGates);
        std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(prev - 1));
        for (std::size_t j = 0; j < w; ++j) {
            layer.in_a[j] = pick(rng);
            layer.in_b[j] = pick(rng);
            if (layer.in_a[j] == layer.in_b[j]) layer.in_b[j] = pick(rng);
        }
        for (auto& v : layer.logits) v = init(rng);
        layers.push_back(std::move(layer));
        prev = w;
    }
    return LogicNetwork(input_dim, std::move(layers), seed);
}

std::array<double, kNumGates> gate_probabilities(std::span<const double> logits) {
    std::array<double, kNumGates> p{};
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0;
    for (int i = 0; i < kNumGates; ++i) {
        p[i] = std::exp(logits[i] - m);
        z += p[i];
    }
    for (auto& v : p) v /= z;
    return p;
}

GateKind argmax_gate(std::span<const double> logits) {
    int best = 0;
    for (int i = 1; i < kNumGates; ++i) {
        if (logits[i] > logits[best]) best = i;
    }
    return static_cast<GateKind>(best);
}

Activations forward_relaxed(const LogicNetwork& net, const Matrix<double>& x) {
    if (x.cols() != net.input_dim()) {
        throw std::invalid_argument("forward_relaxed: expected " + std::to_string(net.input_dim()) +
                                    " input columns, got " + std::to_string(x.cols()));
    }
    const std::size_t batch = x.rows();
    Activations acts;
    acts.values.reserve(net.num_layers() + 1);
    acts.values.push_back(x.transposed());
    for (const auto& layer : net.layers()) {
        const LayerMixture mix(layer);
        const auto& in = acts.values.back();
        const std::size_t w = layer.width();
        Matrix<double> out(w, batch);
        for (std::size_t j = 0; j < w; ++j) {
            const double* a = in.row(layer.in_a[j]).data();
            const double* b = in.row(layer.in_b[j]).data();
            double* o = out.row(j).data();
            const double c0 = mix.c0[j], ca = mix.ca[j], cb = mix.cb[j], cab = mix.cab[j];
            for (std::size_t s = 0; s < batch; ++s) {
                // Rounding can push a convex mixture a few ulps outside [0, 1].
                // Written so that NaN passes through and training can detect it.
                const double v = c0 + ca * a[s] + cb * b[s] + cab * a[s] * b[s];
                o[s] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
            }
        }
        acts.values.push_back(std::move(out));
    }
    return acts;
}

NetworkGradients backward(const LogicNetwork& net, const Activations& acts,
                          const Matrix<double>& grad_out, bool want_input_grad) {
    const std::size_t L = net.num_layers();
    if (acts.values.size() != L + 1) {
        throw std::invalid_argument("backward: activations do not match network depth");
    }
    const std::size_t batch = acts.values.front().cols();
    if (grad_out.rows() != batch || grad_out.cols() != net.output_dim()) {
        throw std::invalid_argument("backward: grad_out shape mismatch");
    }

    const auto& table = coefficient_table();
    NetworkGradients grads;
    grads.logits.resize(L);
    Matrix<double> upstream = grad_out.transposed();
    for (std::size_t l = L; l-- > 0;) {
        const auto& layer = net.layer(l);
        const LayerMixture mix(layer);
        const auto& in = acts.values[l];
        const std::size_t w = layer.width();
        const bool need_input = l > 0 || want_input_grad;
        Matrix<double> down = need_input ? Matrix<double>(in.rows(), batch) : Matrix<double>();

        auto& gw = grads.logits[l];
        gw.assign(w * kNumGates, 0.0);
        for (std::size_t j = 0; j < w; ++j) {
            const double* a = in.row(layer.in_a[j]).data();
            const double* b = in.row(layer.in_b[j]).data();
            const double* g = upstream.row(j).data();
            // Sums of g, g*a, g*b, g*a*b over the batch. Sample s feeds lane
            // s % kLanes and the lanes are combined in a fixed order, so the
            // result depends only on the batch, never on scheduling.
            double acc[4][kLanes] = {};
            std::size_t s = 0;
            for (; s + kLanes <= batch; s += kLanes) {
                for (std::size_t k = 0; k < kLanes; ++k) {
                    const double gs = g[s + k];
                    const double ga = gs * a[s + k];
                    acc[0][k] += gs;
                    acc[1][k] += ga;
                    acc[2][k] += gs * b[s + k];
                    acc[3][k] += ga * b[s + k];
                }
            }
            for (std::size_t k = 0; s < batch; ++s, ++k) {
                const double ga = g[s] * a[s];
                acc[0][k] += g[s];
                acc[1][k] += ga;
                acc[2][k] += g[s] * b[s];
                acc[3][k] += ga * b[s];
            }
            double m[4] = {};
            for (int q = 0; q < 4; ++q) {
                for (std::size_t k = 0; k < kLanes; ++k) m[q] += acc[q][k];
            }
            const double m0 = m[0], ma = m[1], mb = m[2], mab = m[3];
            if (need_input) {
                double* da = down.row(layer.in_a[j]).data();
                const double ca = mix.ca[j], cab = mix.cab[j];
                for (std::size_t s = 0; s < batch; ++s) da[s] += g[s] * (ca + cab * b[s]);
                double* db = down.row(layer.in_b[j]).data();
                const double cb = mix.cb[j];
                for (std::size_t s = 0; s < batch; ++s) db[s] += g[s] * (cb + cab * a[s]);
            }

            const auto p = gate_probabilities(layer.neuron_logits(j));
            std::array<double, kNumGates> dp{};
            double mean = 0;
            for (int i = 0; i < kNumGates; ++i) {
                dp[i] = table[i][0] * m0 + table[i][1] * ma + table[i][2] * mb + table[i][3] * mab;
                mean += p[i] * dp[i];
            }
            for (int i = 0; i < kNumGates; ++i) gw[j * kNumGates + i] = p[i] * (dp[i] - mean);
        }
        if (l == 0) {
            if (want_input_grad) grads.input = down.transposed();
        } else {
            upstream = std::move(down);
        }
    }
    return grads;
}

Matrix<std::uint8_t> forward_discrete(const LogicNetwork& net, const Matrix<std::uint8_t>& x) {
    if (x.cols() != net.input_dim()) {
        throw std::invalid_argument("forward_discrete: expected " +
                                    std::to_string(net.input_dim()) + " input columns, got " +
                                    std::to_string(x.cols()));
    }
    Matrix<std::uint8_t> cur = x;
    for (const auto& v : cur.values()) {
        if (v > 1) throw std::invalid_argument("forward_discrete: inputs must be 0 or 1");
    }
    for (const auto& layer : net.layers()) {
        const std::size_t w = layer.width();
        std::vector<GateKind> gates(w);
        for (std::size_t j = 0; j < w; ++j) gates[j] = argmax_gate(layer.neuron_logits(j));
        Matrix<std::uint8_t> next(cur.rows(), w);
        for (std::size_t s = 0; s < cur.rows(); ++s) {
            const auto src = cur.row(s);
            auto dst = next.row(s);
            for (std::size_t j = 0; j < w; ++j) {
                dst[j] = bool_eval(gates[j], src[layer.in_a[j]] != 0, src[layer.in_b[j]] != 0);
            }
        }
        cur = std::move(next);
    }
    return cur;
}

std::size_t receptive_field(const LogicNetwork& net, std::size_t output) {
    if (output >= net.output_dim()) throw std::out_of_range("receptive_field: bad output index");
    std::vector<std::uint8_t> live(net.output_dim(), 0);
    live[output] = 1;
    for (std::size_t l = net.num_layers(); l-- > 0;) {
        const auto& layer = net.layer(l);
        const std::size_t prev = l == 0 ? net.input_dim() : net.layer(l - 1).width();
        std::vector<std::uint8_t> below(prev, 0);
        for (std::size_t j = 0; j < layer.width(); ++j) {
            if (!live[j]) continue;
            below[layer.in_a[j]] = 1;
            below[layer.in_b[j]] = 1;
        }
        live = std::move(below);
    }
    return static_cast<std::size_t>(std::count(live.begin(), live.end(), 1));
}

}  // namespace dlgn
