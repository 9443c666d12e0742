#include "dlgn/train.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "dlgn/bytes.hpp"

namespace dlgn {

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               const AdamParams& p) {
    if (params.size() != grads.size()) throw std::invalid_argument("adam_step: size mismatch");
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: state size mismatch");
    state.t += 1;
    const double t = static_cast<double>(state.t);
    const double bc1 = 1.0 - std::pow(p.beta1, t);
    const double bc2 = 1.0 - std::pow(p.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = p.beta1 * state.m[i] + (1.0 - p.beta1) * g;
        state.v[i] = p.beta2 * state.v[i] + (1.0 - p.beta2) * g * g;
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + p.eps);
    }
}

void TrainConfig::validate() const {
    if (!(lr >= 0) || !std::isfinite(lr)) throw std::invalid_argument("train: lr must be >= 0");
    if (epochs == 0) throw std::invalid_argument("train: epochs must be >= 1");
    if (batch_size == 0) throw std::invalid_argument("train: batch_size must be >= 1");
    if (eval_every == 0) throw std::invalid_argument("train: eval_every must be >= 1");
    head.validate();
}

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_acc(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

const char* head_kind_name(HeadKind k) {
    switch (k) {
        case HeadKind::GroupSum: return "group_sum";
        case HeadKind::Codebook: return "codebook";
        case HeadKind::BinaryLogit: return "binary_logit";
    }
    return "?";
}

}  // namespace

std::string TrainConfig::canonical() const {
    std::ostringstream os;
    os << "lr=" << fmt_double(lr) << ";epochs=" << epochs << ";batch_size=" << batch_size
       << ";beta1=" << fmt_double(adam.beta1) << ";beta2=" << fmt_double(adam.beta2)
       << ";adam_eps=" << fmt_double(adam.eps) << ";head=" << head_kind_name(head.kind) << ";n=" << head.n
       << ";k=" << head.k << ";tau=" << fmt_double(head.tau) << ";dropout=" << fmt_double(head.dropout_p)
       << ";dropout_rescale=" << head.dropout_rescale
       << ";dropout_scope=" << (head.dropout_scope == DropoutScope::PerSample ? "sample" : "batch")
       << ";seed=" << seed << ";eval_every=" << eval_every << ";eval_relaxed=" << eval_relaxed
       << ";continuous=" << continuous_inputs;
    if (head.codebook) {
        std::uint64_t h = fnv1a(std::string_view("codebook"));
        for (const auto& code : head.codebook->codes()) h = fnv1a(code, h);
        os << ";codebook=" << hex64(h);
        if (head.codebook->reduction()) {
            os << ";reduce_n=" << head.codebook->reduction()->n
               << ";reduce_tau=" << fmt_double(head.codebook->reduction()->tau);
        }
    }
    return os.str();
}

std::string TrainConfig::hash() const { return hex64(fnv1a(canonical())); }

bool RunRecord::same_result(const RunRecord& o) const {
    if (config_hash != o.config_hash || net_seed != o.net_seed || epochs.size() != o.epochs.size()) return false;
    for (std::size_t i = 0; i < epochs.size(); ++i) {
        const auto& a = epochs[i];
        const auto& b = o.epochs[i];
        if (a.epoch != b.epoch || a.train_loss != b.train_loss || a.acc_relaxed_val != b.acc_relaxed_val ||
            a.acc_discrete_val != b.acc_discrete_val) {
            return false;
        }
    }
    return acc_discrete_test == o.acc_discrete_test && acc_relaxed_test == o.acc_relaxed_test &&
           best_epoch == o.best_epoch && acc_discrete_test_best == o.acc_discrete_test_best;
}

PackedBatch pack_rows(const BinaryDataset& ds, std::span<const std::uint32_t> rows) {
    PackedBatch p(ds.dim(), rows.size());
    for (std::size_t s = 0; s < rows.size(); ++s) {
        const auto words = ds.bits.row_words(rows[s]);
        const std::size_t lane_word = s / 64;
        const std::uint64_t lane_bit = std::uint64_t{1} << (s % 64);
        for (std::size_t w = 0; w < words.size(); ++w) {
            std::uint64_t bits = words[w];
            while (bits) {
                const std::size_t f = w * 64 + static_cast<std::size_t>(std::countr_zero(bits));
                p.feature(f)[lane_word] |= lane_bit;
                bits &= bits - 1;
            }
        }
    }
    return p;
}

namespace {

constexpr std::size_t kEvalChunk = 4096;

void check_compatible(const LogicNetwork& net, const BinaryDataset& ds, const HeadConfig& head) {
    if (ds.dim() != net.input_dim()) {
        throw std::invalid_argument("dataset dimension " + std::to_string(ds.dim()) +
                                    " does not match network input " + std::to_string(net.input_dim()));
    }
    if (head.n != net.output_dim()) {
        throw std::invalid_argument("head consumes " + std::to_string(head.n) + " outputs but network has " +
                                    std::to_string(net.output_dim()));
    }
    if (head.k < ds.num_classes) {
        throw std::invalid_argument("head has " + std::to_string(head.k) + " classes, dataset has " +
                                    std::to_string(ds.num_classes));
    }
}

double relaxed_accuracy(const LogicNetwork& net, const BinaryDataset& ds,
                        std::span<const std::uint32_t> rows, const HeadConfig& head) {
    std::size_t correct = 0;
    for (std::size_t b = 0; b < rows.size(); b += 512) {
        const auto chunk = rows.subspan(b, std::min<std::size_t>(512, rows.size() - b));
        const auto out = forward_relaxed(net, gather_inputs(ds, chunk)).output();
        for (std::size_t s = 0; s < chunk.size(); ++s) {
            correct += head_predict_relaxed(head, out.row(s)) == ds.labels[chunk[s]];
        }
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(rows.size());
}

double circuit_accuracy(const DiscreteCircuit& circ, const BinaryDataset& ds,
                        std::span<const std::uint32_t> rows, const HeadConfig& head) {
    std::size_t correct = 0;
    for (std::size_t b = 0; b < rows.size(); b += kEvalChunk) {
        const auto chunk = rows.subspan(b, std::min(kEvalChunk, rows.size() - b));
        const auto outputs = eval_packed(circ, pack_rows(ds, chunk));
        const auto pred = predict_packed(circ, outputs, head);
        for (std::size_t s = 0; s < chunk.size(); ++s) correct += pred[s] == ds.labels[chunk[s]];
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(rows.size());
}

}  // namespace

double evaluate(const LogicNetwork& net, const BinaryDataset& ds, Split split, EvalMode mode,
                const HeadConfig& head) {
    check_compatible(net, ds, head);
    const auto& rows = ds.indices(split);
    if (rows.empty()) throw std::invalid_argument(std::string("evaluate: split '") + split_name(split) + "' is empty");
    if (mode == EvalMode::Relaxed) return relaxed_accuracy(net, ds, rows, head);
    return circuit_accuracy(harden(net), ds, rows, head);
}

double evaluate_circuit(const DiscreteCircuit& circ, const BinaryDataset& ds, Split split,
                        const HeadConfig& head) {
    if (ds.dim() != circ.input_dim) throw std::invalid_argument("evaluate_circuit: dimension mismatch");
    const auto& rows = ds.indices(split);
    if (rows.empty()) throw std::invalid_argument(std::string("evaluate: split '") + split_name(split) + "' is empty");
    return circuit_accuracy(circ, ds, rows, head);
}

std::vector<double> activation_rates(const DiscreteCircuit& circ, const BinaryDataset& ds,
                                     std::span<const std::uint32_t> rows) {
    if (rows.empty()) throw std::invalid_argument("activation_rates: no samples");
    std::vector<std::size_t> ones(circ.output_dim(), 0);
    for (std::size_t b = 0; b < rows.size(); b += kEvalChunk) {
        const auto chunk = rows.subspan(b, std::min(kEvalChunk, rows.size() - b));
        const auto outputs = eval_packed(circ, pack_rows(ds, chunk));
        for (std::size_t j = 0; j < outputs.features(); ++j) {
            for (auto w : outputs.feature(j)) ones[j] += static_cast<std::size_t>(std::popcount(w));
        }
    }
    std::vector<double> rates(ones.size());
    for (std::size_t j = 0; j < ones.size(); ++j) rates[j] = static_cast<double>(ones[j]) / static_cast<double>(rows.size());
    return rates;
}

TrainResult train(LogicNetwork net, const BinaryDataset& ds, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
    config.validate();
    const HeadConfig& head = config.head;
    check_compatible(net, ds, head);
    if (ds.splits.train.empty()) throw std::invalid_argument("train: training split is empty");
    if (config.continuous_inputs && !ds.real) throw std::invalid_argument("train: dataset has no real-valued inputs");

    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(config.seed);
    std::vector<std::uint32_t> order = ds.splits.train;
    std::vector<AdamState> adam(net.num_layers());
    std::vector<std::uint32_t> labels;

    TrainResult result{net, net, {}};
    RunRecord& rec = result.record;
    rec.config_hash = config.hash();
    rec.net_seed = net.seed();
    std::optional<double> best_val;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0;
        for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
            const auto rows = std::span(order).subspan(b, std::min(config.batch_size, order.size() - b));
            labels.resize(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) labels[i] = ds.labels[rows[i]];

            const auto acts = forward_relaxed(net, gather_inputs(ds, rows, config.continuous_inputs));
            BatchLoss loss;
            if (head.dropout_p > 0) {
                Matrix<double> out = acts.output();
                Matrix<std::uint8_t> masks(head.dropout_scope == DropoutScope::PerBatch ? 1 : out.rows(), out.cols());
                for (std::size_t m = 0; m < masks.rows(); ++m) {
                    const auto mask = dropout_mask(out.cols(), head.dropout_p, rng);
                    std::copy(mask.begin(), mask.end(), masks.row(m).begin());
                }
                for (std::size_t s = 0; s < out.rows(); ++s) {
                    apply_groupsum_dropout(out.row(s), masks.row(masks.rows() == 1 ? 0 : s), head.dropout_p,
                                           head.dropout_rescale);
                }
                loss = head_loss(head, out, labels);
                for (std::size_t s = 0; s < out.rows(); ++s) {
                    apply_groupsum_dropout(loss.grad.row(s), masks.row(masks.rows() == 1 ? 0 : s), head.dropout_p,
                                           head.dropout_rescale);
                }
            } else {
                loss = head_loss(head, acts.output(), labels);
            }
            if (!std::isfinite(loss.loss)) {
                throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) +
                                       ": non-finite loss (lr " + fmt_double(config.lr) + ", tau " +
                                       fmt_double(head.tau) + "); lower the learning rate or raise tau");
            }
            loss_sum += loss.loss * static_cast<double>(rows.size());
            const auto grads = backward(net, acts, loss.grad, false);
            for (std::size_t l = 0; l < net.num_layers(); ++l) {
                adam_step(net.logits(l), grads.logits[l], adam[l], config.lr, config.adam);
            }
        }

        EpochRecord er;
        er.epoch = epoch;
        er.train_loss = loss_sum / static_cast<double>(order.size());
        const bool eval_now = epoch % config.eval_every == 0 || epoch == config.epochs;
        if (eval_now && !ds.splits.val.empty()) {
            if (config.eval_relaxed) er.acc_relaxed_val = relaxed_accuracy(net, ds, ds.splits.val, head);
            er.acc_discrete_val = circuit_accuracy(harden(net), ds, ds.splits.val, head);
            if (!best_val || *er.acc_discrete_val > *best_val) {
                best_val = er.acc_discrete_val;
                rec.best_epoch = epoch;
                result.best_net = net;
            }
        }
        rec.epochs.push_back(er);
        if (on_epoch) on_epoch(er);
    }
    if (!best_val) {
        rec.best_epoch = config.epochs;
        result.best_net = net;
    }
    result.net = std::move(net);

    if (!ds.splits.test.empty()) {
        rec.acc_discrete_test = circuit_accuracy(harden(result.net), ds, ds.splits.test, head);
        rec.acc_relaxed_test = config.eval_relaxed ? relaxed_accuracy(result.net, ds, ds.splits.test, head) : 0.0;
        rec.acc_discrete_test_best = circuit_accuracy(harden(result.best_net), ds, ds.splits.test, head);
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

std::string run_record_csv(const RunRecord& r) {
    std::ostringstream os;
    os << "config_hash,net_seed,epoch,train_loss,acc_relaxed_val,acc_discrete_val\n";
    for (const auto& e : r.epochs) {
        os << r.config_hash << ',' << r.net_seed << ',' << e.epoch << ',' << fmt_double(e.train_loss) << ','
           << (e.acc_relaxed_val ? fmt_acc(*e.acc_relaxed_val) : "") << ','
           << (e.acc_discrete_val ? fmt_acc(*e.acc_discrete_val) : "") << '\n';
    }
    return os.str();
}

std::string run_summary_csv(const RunRecord& r) {
    std::ostringstream os;
    os << "config_hash,net_seed,epochs,best_epoch,acc_discrete_test,acc_relaxed_test,acc_discrete_test_best\n";
    os << r.config_hash << ',' << r.net_seed << ',' << r.epochs.size() << ',' << r.best_epoch << ','
       << fmt_acc(r.acc_discrete_test) << ',' << fmt_acc(r.acc_relaxed_test) << ','
       << fmt_acc(r.acc_discrete_test_best) << '\n';
    return os.str();
}

}  // namespace dlgn
