#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dlgn/heads.hpp"
#include "test_util.hpp"

using namespace dlgn;

namespace {

std::vector<double> random_outputs(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.02, 0.98);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

// Hamming scan written independently of the library.
std::size_t brute_decode(const std::vector<std::uint8_t>& bits, const Codebook& cb) {
    std::size_t best = 0, best_d = bits.size() + 1;
    for (std::size_t c = 0; c < cb.k(); ++c) {
        std::size_t d = 0;
        for (std::size_t i = 0; i < bits.size(); ++i) d += bits[i] ^ cb.code(c)[i];
        if (d < best_d) best = c, best_d = d;
    }
    return best;
}

}  // namespace

TEST(Heads, GroupSumExamples) {
    const GroupSumHead head(4, 2, 1.0);
    const std::vector<double> out{1, 1, 0, 0};
    const auto logits = group_sum_logits(out, head);
    EXPECT_EQ(logits, (std::vector<double>{2, 0}));
    const auto p = softmax(logits);
    EXPECT_NEAR(p[0], 0.8808, 1e-4);
    const GroupSumHead hot(4, 2, 10.0);
    EXPECT_NEAR(softmax(group_sum_logits(out, hot))[0], 0.5498, 1e-4);
    EXPECT_THROW(GroupSumHead(10, 3, 1.0), std::invalid_argument);
    EXPECT_THROW(GroupSumHead(10, 2, 0.0), std::invalid_argument);
}

TEST(Heads, SoftmaxIsStableForLargeLogits) {
    const std::vector<double> big{1000, 1001, 999};
    const auto p = softmax(big);
    for (double v : p) EXPECT_TRUE(std::isfinite(v));
    EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-15);
}

TEST(Heads, GroupSumLossGradientMatchesFiniteDifference) {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 100; ++t) {
        const std::size_t k = 2 + rng() % 5, g = 1 + rng() % 4;
        const double tau = 0.5 + (rng() % 100) / 10.0;
        const GroupSumHead head(k * g, k, tau);
        auto out = random_outputs(k * g, rng);
        const std::size_t label = rng() % k;
        const auto r = group_sum_loss_and_grad(out, label, head);
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double num = oracle::central_difference(
                out, i, [&] { return group_sum_loss_and_grad(out, label, head).loss; });
            EXPECT_LE(oracle::rel_err(r.grad[i], num), 1e-4);
        }
    }
}

TEST(Heads, BinaryLogitGradientMatchesFiniteDifference) {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 100; ++t) {
        const std::size_t k = 2 + rng() % 4, g = 1 + rng() % 4;
        const GroupSumHead head(k * g, k, 1.0);
        auto out = random_outputs(k * g, rng);
        const std::size_t label = rng() % k;
        const auto r = binary_logit_loss(out, label, head);
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double num = oracle::central_difference(
                out, i, [&] { return binary_logit_loss(out, label, head).loss; });
            EXPECT_LE(oracle::rel_err(r.grad[i], num), 1e-4);
        }
    }
}

TEST(Heads, CodebookLossGradientMatchesFiniteDifference) {
    std::mt19937_64 rng(6);
    for (int t = 0; t < 100; ++t) {
        const std::size_t o = 3 + rng() % 6;
        const bool reduce = t % 2 == 1;
        std::optional<CodeReduction> red;
        if (reduce) red = CodeReduction{o * 3, 3.0};
        const auto cb = codebook_generate(4, o, t, red);
        auto out = random_outputs(cb.input_width(), rng);
        const double tau = 0.5 + (rng() % 20);
        const std::size_t label = rng() % 4;
        const auto r = codebook_train_loss(out, label, cb, tau);
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double num = oracle::central_difference(
                out, i, [&] { return codebook_train_loss(out, label, cb, tau).loss; });
            EXPECT_LE(oracle::rel_err(r.grad[i], num), 1e-4);
        }
    }
}

TEST(Heads, PredictBitsTiesGoToLowestClass) {
    const GroupSumHead head(6, 3, 1.0);
    const std::vector<std::uint8_t> bits{0, 1, 1, 0, 1, 1};
    EXPECT_EQ(group_sum_predict_bits(bits, head), 2u);
    const std::vector<std::uint8_t> tie{1, 0, 0, 1, 0, 0};
    EXPECT_EQ(group_sum_predict_bits(tie, head), 0u);
    // Dropping the last neuron leaves a three-way tie.
    const std::vector<std::uint8_t> kept{1, 1, 1, 1, 1, 0};
    EXPECT_EQ(group_sum_predict_bits(bits, head, kept), 0u);
    const std::vector<std::uint8_t> kept2{1, 0, 1, 1, 1, 0};
    EXPECT_EQ(group_sum_predict_bits(bits, head, kept2), 1u);
}

TEST(Heads, ArgmaxInvariantUnderTau) {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 500; ++t) {
        const std::size_t k = 2 + rng() % 8, g = 1 + rng() % 5;
        const auto out = random_outputs(k * g, rng);
        const auto ref = group_sum_predict_relaxed(out, GroupSumHead(k * g, k, 1.0));
        for (double tau : {0.1, 3.0, 100.0}) {
            const auto p = softmax(group_sum_logits(out, GroupSumHead(k * g, k, tau)));
            const auto arg = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
            EXPECT_EQ(arg, ref);
        }
    }
}

TEST(Heads, DropoutMasksAndScope) {
    std::mt19937_64 rng(8);
    const auto mask = dropout_mask(10000, 0.3, rng);
    const auto kept = std::count(mask.begin(), mask.end(), 1);
    EXPECT_NEAR(static_cast<double>(kept) / 10000.0, 0.7, 0.02);
    std::vector<double> out(4, 0.5);
    const std::vector<std::uint8_t> m{1, 0, 1, 0};
    apply_groupsum_dropout(out, m, 0.5, false);
    EXPECT_EQ(out, (std::vector<double>{0.5, 0, 0.5, 0}));
    std::vector<double> scaled(4, 0.5);
    apply_groupsum_dropout(scaled, m, 0.5, true);
    EXPECT_EQ(scaled, (std::vector<double>{1.0, 0, 1.0, 0}));
    std::vector<double> eval(4, 0.5);
    apply_groupsum_dropout(eval, 0.5, rng, false);
    EXPECT_EQ(eval, (std::vector<double>(4, 0.5)));
    EXPECT_THROW(dropout_mask(4, 1.0, rng), std::invalid_argument);
}

TEST(Heads, CodebookExamples) {
    const Codebook cb({{0, 0, 0}, {1, 1, 1}});
    const std::vector<std::uint8_t> v{1, 1, 0};
    EXPECT_EQ(codebook_predict(v, cb), 1u);
    const Codebook tie({{0, 1}, {1, 0}});
    const std::vector<std::uint8_t> zeros{0, 0};
    EXPECT_EQ(codebook_predict(zeros, tie), 0u);
    EXPECT_THROW(codebook_generate(9, 3, 0), std::invalid_argument);
    EXPECT_THROW(Codebook({{0, 1}, {0, 1}}), std::invalid_argument);
}

TEST(Heads, CodebookGenerateIsDistinctAndSeeded) {
    for (std::size_t o : {3u, 8u, 20u}) {
        const std::size_t k = std::min<std::size_t>(std::size_t{1} << o, 100);
        const auto a = codebook_generate(k, o, 1);
        const auto b = codebook_generate(k, o, 1);
        EXPECT_EQ(a, b);
        std::set<std::vector<std::uint8_t>> s(a.codes().begin(), a.codes().end());
        EXPECT_EQ(s.size(), k);
    }
}

TEST(Heads, CodebookDecodeMatchesExhaustiveScan) {
    std::mt19937_64 rng(10);
    for (std::size_t o = 1; o <= 10; ++o) {
        const std::size_t k = 1 + rng() % std::min<std::size_t>(std::size_t{1} << o, 20);
        const auto cb = codebook_generate(k, o, o);
        for (std::size_t v = 0; v < (std::size_t{1} << o); ++v) {
            std::vector<std::uint8_t> bits(o);
            for (std::size_t b = 0; b < o; ++b) bits[b] = (v >> b) & 1;
            ASSERT_EQ(codebook_predict(bits, cb), brute_decode(bits, cb));
        }
    }
}

TEST(Heads, CodebookReduction) {
    const Codebook cb({{1, 0}, {0, 1}}, CodeReduction{6, 3.0});
    const std::vector<std::uint8_t> bits{1, 1, 0, 0, 0, 1};
    EXPECT_EQ(codebook_reduce_bits(bits, cb), (std::vector<std::uint8_t>{1, 0}));
    const std::vector<double> out{1, 1, 1, 0, 0, 0.3};
    const auto r = codebook_reduce(out, cb);
    EXPECT_DOUBLE_EQ(r[0], 1.0);
    EXPECT_DOUBLE_EQ(r[1], 0.1);
    EXPECT_EQ(codebook_predict_relaxed(out, cb), 0u);
}

TEST(Heads, BatchLossAveragesSamples) {
    const auto head = make_group_sum_head(4, 2, 2.0);
    Matrix<double> out(2, 4, {0.9, 0.8, 0.1, 0.2, 0.3, 0.1, 0.7, 0.9});
    const std::vector<std::uint32_t> labels{0, 1};
    const auto b = head_loss(head, out, labels);
    const GroupSumHead gs = head.group_sum();
    const auto r0 = group_sum_loss_and_grad(out.row(0), 0, gs);
    const auto r1 = group_sum_loss_and_grad(out.row(1), 1, gs);
    EXPECT_NEAR(b.loss, (r0.loss + r1.loss) / 2, 1e-15);
    EXPECT_NEAR(b.grad(1, 3), r1.grad[3] / 2, 1e-15);
}

TEST(Heads, HeadConfigValidation) {
    EXPECT_THROW(make_group_sum_head(10, 3, 1.0), std::invalid_argument);
    auto h = make_group_sum_head(10, 2, 1.0);
    h.tau = -1;
    EXPECT_THROW(h.validate(), std::invalid_argument);
    auto cbh = make_codebook_head(codebook_generate(5, 4, 0), 1.0);
    EXPECT_EQ(cbh.n, 4u);
    EXPECT_EQ(cbh.k, 5u);
    const std::vector<std::uint8_t> kept{1, 0, 1, 1};
    const std::vector<std::uint8_t> bits{1, 0, 1, 1};
    EXPECT_THROW(head_predict_bits(cbh, bits, kept), std::invalid_argument);
}
