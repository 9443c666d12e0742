#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "dlgn/checkpoint.hpp"
#include "dlgn/train.hpp"

using namespace dlgn;

namespace {

SyntheticDataset small_task(std::size_t k, std::uint64_t seed, std::size_t per_class = 200) {
    SyntheticSpec s;
    s.num_classes = k;
    s.samples_per_class = per_class;
    s.seed = seed;
    auto syn = generate_synthetic(s);
    make_validation_split(syn.data, 0.2, seed);
    return syn;
}

}  // namespace

TEST(Train, AdamFirstStepsMatchHandComputation) {
    std::vector<double> x{1.0, -2.0};
    const std::vector<double> g1{0.5, -4.0};
    AdamState st;
    adam_step(x, g1, st, 0.1);
    // Bias correction makes the first step lr * g / (|g| + eps).
    EXPECT_NEAR(x[0], 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
    EXPECT_NEAR(x[1], -2.0 + 0.1 * 4.0 / (4.0 + 1e-8), 1e-15);

    const std::vector<double> g2{-1.0, -4.0};
    adam_step(x, g2, st, 0.1);
    const double m = 0.9 * 0.05 + 0.1 * -1.0;
    const double v = 0.999 * 0.00025 + 0.001 * 1.0;
    const double mhat = m / (1 - 0.81), vhat = v / (1 - 0.999 * 0.999);
    EXPECT_NEAR(x[0], 1.0 - 0.1 * 0.5 / (0.5 + 1e-8) - 0.1 * mhat / (std::sqrt(vhat) + 1e-8), 1e-12);
    EXPECT_EQ(st.t, 2u);
}

TEST(Train, AdamMinimisesQuadratic) {
    std::vector<double> x{5.0, -3.0};
    AdamState st;
    for (int i = 0; i < 2000; ++i) {
        const std::vector<double> g{2 * (x[0] - 1), 2 * (x[1] + 2)};
        adam_step(x, g, st, 0.05);
    }
    EXPECT_NEAR(x[0], 1.0, 1e-3);
    EXPECT_NEAR(x[1], -2.0, 1e-3);
}

TEST(Train, ConfigHashTracksEveryField) {
    TrainConfig a;
    a.head = make_group_sum_head(100, 10, 10.0);
    TrainConfig b = a;
    EXPECT_EQ(a.hash(), b.hash());
    b.head.tau = 10.5;
    EXPECT_NE(a.hash(), b.hash());
    b = a;
    b.seed = 1;
    EXPECT_NE(a.hash(), b.hash());
    b = a;
    b.lr = 0.02;
    EXPECT_NE(a.hash(), b.hash());
    EXPECT_EQ(a.hash().size(), 16u);
}

TEST(Train, ConfigValidation) {
    TrainConfig c;
    c.head = make_group_sum_head(10, 2, 1.0);
    c.epochs = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c.epochs = 1;
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Train, UntrainedNetIsNearChance) {
    const auto syn = small_task(10, 3);
    const std::vector<std::size_t> widths{512, 512, 500};
    const auto net = build_network(784, widths, 1);
    const auto head = make_group_sum_head(500, 10, 10.0);
    const double acc = evaluate(net, syn.data, Split::Test, EvalMode::Discrete, head);
    // 400 test samples: chance 10%, binomial sd 1.5%.
    EXPECT_GT(acc, 2.0);
    EXPECT_LT(acc, 25.0);
}

TEST(Train, DiscreteEvaluationMatchesReferencePath) {
    const auto syn = small_task(4, 5, 50);
    const std::vector<std::size_t> widths{64, 64, 40};
    const auto net = build_network(784, widths, 2);
    const auto head = make_group_sum_head(40, 4, 3.0);
    const auto& rows = syn.data.splits.test;
    const auto outs = forward_discrete(net, gather_bits(syn.data, rows));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        correct += group_sum_predict_bits(outs.row(i), head.group_sum()) == syn.data.labels[rows[i]];
    }
    EXPECT_DOUBLE_EQ(evaluate(net, syn.data, Split::Test, EvalMode::Discrete, head),
                     100.0 * static_cast<double>(correct) / static_cast<double>(rows.size()));
    EXPECT_DOUBLE_EQ(evaluate_circuit(harden(net), syn.data, Split::Test, head),
                     evaluate(net, syn.data, Split::Test, EvalMode::Discrete, head));
}

TEST(Train, TwoClassSyntheticIsLearned) {
    const auto syn = small_task(2, 7);
    const std::vector<std::size_t> widths{1024, 1024, 1024};
    const auto net = build_network(784, widths, 7);
    TrainConfig c;
    c.epochs = 20;
    c.batch_size = 32;
    c.head = make_group_sum_head(1024, 2, 30.0);
    c.seed = 7;
    const auto r = train(net, syn.data, c);
    EXPECT_GE(r.record.acc_discrete_test, 95.0);
    EXPECT_EQ(r.record.epochs.size(), 20u);
    EXPECT_LT(r.record.epochs.back().train_loss, r.record.epochs.front().train_loss);
    EXPECT_GE(r.record.best_epoch, 1u);
}

TEST(Train, RunsAreBitReproducible) {
    const auto syn = small_task(3, 9, 60);
    const std::vector<std::size_t> widths{128, 120};
    const auto net = build_network(784, widths, 3);
    TrainConfig c;
    c.epochs = 3;
    c.batch_size = 16;
    c.head = make_group_sum_head(120, 3, 5.0, 0.2);
    c.seed = 11;
    const auto a = train(net, syn.data, c);
    const auto b = train(net, syn.data, c);
    EXPECT_TRUE(a.record.same_result(b.record));
    EXPECT_EQ(save_checkpoint(a.net, &c.head), save_checkpoint(b.net, &c.head));
    EXPECT_EQ(run_record_csv(a.record), run_record_csv(b.record));
    c.seed = 12;
    const auto d = train(net, syn.data, c);
    EXPECT_NE(save_checkpoint(a.net), save_checkpoint(d.net));
}

TEST(Train, OtherHeadsTrain) {
    const auto syn = small_task(4, 13, 100);
    const std::vector<std::size_t> widths{256, 256, 240};
    const auto net = build_network(784, widths, 5);
    TrainConfig c;
    c.epochs = 4;
    c.batch_size = 32;
    c.seed = 1;
    c.head = make_binary_logit_head(240, 4);
    const auto bl = train(net, syn.data, c);
    EXPECT_LT(bl.record.epochs.back().train_loss, bl.record.epochs.front().train_loss);
    c.head = make_codebook_head(codebook_generate(4, 8, 1, CodeReduction{240, 30.0}), 1.0);
    const auto cb = train(net, syn.data, c);
    EXPECT_LT(cb.record.epochs.back().train_loss, cb.record.epochs.front().train_loss);
    EXPECT_GT(cb.record.acc_discrete_test, 25.0);
}

TEST(Train, NonFiniteLossRaises) {
    auto syn = small_task(2, 15, 20);
    syn.data.real = Matrix<float>(syn.data.size(), 784, 0.5f);
    for (auto& v : syn.data.real->row(syn.data.splits.train[0])) v = std::numeric_limits<float>::quiet_NaN();
    const std::vector<std::size_t> widths{784, 64};
    auto net = build_network(784, widths, 1);
    TrainConfig c;
    c.epochs = 1;
    c.continuous_inputs = true;
    c.batch_size = 1000;
    c.head = make_group_sum_head(64, 2, 1.0);
    EXPECT_THROW(train(net, syn.data, c), TrainingDiverged);
}

TEST(Train, MismatchedShapesAreRejected) {
    const auto syn = small_task(2, 1, 20);
    const std::vector<std::size_t> widths{64, 10};
    const auto net = build_network(100, widths, 1);
    TrainConfig c;
    c.head = make_group_sum_head(10, 2, 1.0);
    EXPECT_THROW(train(net, syn.data, c), std::invalid_argument);
}

TEST(Train, ActivationRatesOfConstantOutputs) {
    const auto syn = small_task(2, 1, 20);
    DiscreteCircuit c;
    c.input_dim = 784;
    c.layers.push_back({{GateKind::True, GateKind::False, GateKind::A}, {0, 0, 5}, {1, 1, 6}});
    c.kept_outputs = {1, 1, 1};
    c.output_origin = {0, 1, 2};
    const auto rates = activation_rates(c, syn.data, syn.data.splits.train);
    EXPECT_EQ(rates[0], 1.0);
    EXPECT_EQ(rates[1], 0.0);
    EXPECT_GT(rates[2], 0.2);
    EXPECT_LT(rates[2], 0.8);
}
