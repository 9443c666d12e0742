#include <gtest/gtest.h>

#include <random>

#include "dlgn/network.hpp"
#include "test_util.hpp"

using namespace dlgn;

namespace {

double weighted_output(const LogicNetwork& net, const Matrix<double>& x, const Matrix<double>& weights) {
    const auto acts = forward_relaxed(net, x);
    double s = 0;
    for (std::size_t i = 0; i < weights.values().size(); ++i) s += weights.values()[i] * acts.output().values()[i];
    return s;
}

// Large enough that roundoff in the summed output stays below the tolerance.
constexpr double kStep = 1e-4;

}  // namespace

TEST(Network, BuildIsDeterministicAndInRange) {
    const std::vector<std::size_t> widths{64, 32, 8};
    const auto a = build_network(20, widths, 7);
    const auto b = build_network(20, widths, 7);
    const auto c = build_network(20, widths, 8);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
    EXPECT_EQ(a.num_neurons(), 104u);
    EXPECT_EQ(a.output_dim(), 8u);
    for (std::size_t j = 0; j < 64; ++j) {
        EXPECT_LT(a.layer(0).in_a[j], 20u);
        EXPECT_LT(a.layer(0).in_b[j], 20u);
    }
    EXPECT_THROW(build_network(1, widths, 0), std::invalid_argument);
    const std::vector<std::size_t> zero{4, 0};
    EXPECT_THROW(build_network(8, zero, 0), std::invalid_argument);
}

TEST(Network, InitialLogitsLookStandardNormal) {
    const std::vector<std::size_t> widths{4096};
    const auto net = build_network(100, widths, 1);
    double sum = 0, sq = 0;
    for (double v : net.layer(0).logits) {
        sum += v;
        sq += v * v;
    }
    const double n = static_cast<double>(net.layer(0).logits.size());
    EXPECT_NEAR(sum / n, 0.0, 0.02);
    EXPECT_NEAR(sq / n, 1.0, 0.03);
}

TEST(Network, ArgmaxTiesGoToLowestId) {
    std::vector<double> w(16, 0.0);
    EXPECT_EQ(argmax_gate(w), GateKind::False);
    w[9] = 1;
    w[12] = 1;
    EXPECT_EQ(argmax_gate(w), GateKind::Xnor);
}

TEST(Network, GateProbabilitiesSumToOne) {
    std::vector<double> w{3, -2, 0.5, 7, 1, 1, 1, 1, 0, 0, 0, 0, -50, 2, 2, 2};
    const auto p = gate_probabilities(w);
    double s = 0;
    for (double v : p) s += v;
    EXPECT_NEAR(s, 1.0, 1e-15);
    EXPECT_GT(p[3], p[0]);
}

TEST(Network, SingleXorNeuronExamples) {
    LogicLayer layer{{0}, {1}, std::vector<double>(16, -1000.0)};
    layer.logits[6] = 0;
    const LogicNetwork net(2, {layer}, 0);
    Matrix<double> x(2, 2, {1, 0, 0.5, 0.5});
    const auto acts = forward_relaxed(net, x);
    EXPECT_EQ(acts.output()(0, 0), 1.0);
    EXPECT_EQ(acts.output()(1, 0), 0.5);
}

TEST(Network, RelaxedOutputsStayInUnitInterval) {
    std::mt19937_64 rng(2);
    const std::vector<std::size_t> widths{50, 50, 20};
    const auto net = build_network(30, widths, 3);
    const auto acts = forward_relaxed(net, oracle::random_unit(40, 30, rng));
    for (const auto& m : acts.values) {
        for (double v : m.values()) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(Network, BackwardMatchesFiniteDifferences) {
    std::mt19937_64 rng(11);
    std::size_t checked = 0;
    for (int trial = 0; trial < 6; ++trial) {
        const std::vector<std::size_t> widths{32, 32, 12};
        auto net = build_network(10, widths, 100 + trial);
        const auto x = oracle::random_unit(4, 10, rng);
        const auto weights = oracle::random_unit(4, 12, rng);
        const auto grads = backward(net, forward_relaxed(net, x), weights, true);

        for (std::size_t l = 0; l < net.num_layers(); ++l) {
            std::vector<double> logits(net.layer(l).logits);
            for (int probe = 0; probe < 40; ++probe) {
                const std::size_t i = rng() % logits.size();
                const double numeric = oracle::central_difference(logits, i, [&] {
                    std::copy(logits.begin(), logits.end(), net.logits(l).begin());
                    return weighted_output(net, x, weights);
                }, kStep);
                std::copy(logits.begin(), logits.end(), net.logits(l).begin());
                EXPECT_LE(oracle::rel_err(grads.logits[l][i], numeric, 1e-5), 1e-4)
                    << "layer " << l << " logit " << i;
                ++checked;
            }
        }
        std::vector<double> xv(x.values().begin(), x.values().end());
        for (std::size_t i = 0; i < xv.size(); ++i) {
            const double numeric = oracle::central_difference(xv, i, [&] {
                return weighted_output(net, Matrix<double>(4, 10, xv), weights);
            }, kStep);
            EXPECT_LE(oracle::rel_err(grads.input.values()[i], numeric, 1e-5), 1e-4) << "input " << i;
            ++checked;
        }
    }
    EXPECT_GE(checked, 900u);
}

TEST(Network, BackwardSkipsInputGradientOnRequest) {
    std::mt19937_64 rng(1);
    const std::vector<std::size_t> widths{8, 4};
    const auto net = build_network(6, widths, 0);
    const auto x = oracle::random_unit(3, 6, rng);
    const auto acts = forward_relaxed(net, x);
    const auto g = backward(net, acts, oracle::random_unit(3, 4, rng), false);
    EXPECT_EQ(g.input.rows(), 0u);
    EXPECT_EQ(g.logits.size(), 2u);
}

TEST(Network, OneHotRelaxedEqualsDiscrete) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        const std::vector<std::size_t> widths{40, 30, 10};
        auto net = build_network(16, widths, trial);
        oracle::make_one_hot(net, rng);
        const auto bits = oracle::random_bits(32, 16, rng);
        Matrix<double> x(32, 16);
        for (std::size_t i = 0; i < bits.values().size(); ++i) x.values()[i] = bits.values()[i];
        const auto relaxed = forward_relaxed(net, x).output();
        const auto discrete = forward_discrete(net, bits);
        for (std::size_t i = 0; i < relaxed.values().size(); ++i) {
            ASSERT_EQ(relaxed.values()[i], static_cast<double>(discrete.values()[i]));
        }
    }
}

TEST(Network, ShapeErrors) {
    const std::vector<std::size_t> widths{4};
    const auto net = build_network(5, widths, 0);
    EXPECT_THROW(forward_relaxed(net, Matrix<double>(2, 4)), std::invalid_argument);
    Matrix<std::uint8_t> bad(1, 5);
    bad(0, 0) = 2;
    EXPECT_THROW(forward_discrete(net, bad), std::invalid_argument);
    LogicLayer l{{0}, {9}, std::vector<double>(16, 0.0)};
    EXPECT_THROW(LogicNetwork(5, {l}, 0), std::invalid_argument);
}

TEST(Network, ReceptiveFieldBoundedByFanIn) {
    const std::vector<std::size_t> widths{100, 100, 100};
    const auto net = build_network(500, widths, 4);
    for (std::size_t j = 0; j < 100; ++j) EXPECT_LE(receptive_field(net, j), 8u);
}
