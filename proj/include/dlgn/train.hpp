#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dlgn/compile.hpp"
#include "dlgn/data.hpp"
#include "dlgn/heads.hpp"
#include "dlgn/network.hpp"

namespace dlgn {

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;
};

// One bias-corrected Adam update; `state` is sized on first use.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               const AdamParams& p = {});

// Defaults follow the baseline DLGN recipe: Adam, lr 0.01, 100 epochs,
// cross-entropy over a Group-Sum head with tau = 10.
struct TrainConfig {
    double lr = 0.01;
    std::size_t epochs = 100;
    std::size_t batch_size = 256;
    AdamParams adam;
    HeadConfig head;
    std::uint64_t seed = 0;       // batch order and dropout masks
    std::size_t eval_every = 1;   // validation cadence in epochs; the last epoch is always evaluated
    bool eval_relaxed = true;     // also track relaxed validation accuracy
    bool continuous_inputs = false;  // train on the dataset's real-valued copy

    void validate() const;
    // Canonical key=value text; its FNV-1a hash tags every exported row.
    std::string canonical() const;
    std::string hash() const;
};

// Loss went non-finite; the message names the epoch and suggests remedies.
class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0;
    std::optional<double> acc_relaxed_val;
    std::optional<double> acc_discrete_val;
};

struct RunRecord {
    std::string config_hash;
    std::uint64_t net_seed = 0;
    std::vector<EpochRecord> epochs;
    double acc_discrete_test = 0;
    double acc_relaxed_test = 0;
    std::size_t best_epoch = 0;             // epoch of best discrete validation accuracy
    double acc_discrete_test_best = 0;      // test accuracy of that checkpoint
    double seconds = 0;                     // wall clock, excluded from CSV output

    // Everything except wall clock.
    bool same_result(const RunRecord& o) const;
};

struct TrainResult {
    LogicNetwork net;       // after the final epoch
    LogicNetwork best_net;  // best discrete validation accuracy
    RunRecord record;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(LogicNetwork net, const BinaryDataset& ds, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

enum class EvalMode { Relaxed, Discrete };

// Accuracy in percent. Discrete mode hardens the network and evaluates the
// circuit bit-parallel on the binarized samples.
double evaluate(const LogicNetwork& net, const BinaryDataset& ds, Split split, EvalMode mode,
                const HeadConfig& head);

// Discrete accuracy of an already compiled circuit.
double evaluate_circuit(const DiscreteCircuit& circ, const BinaryDataset& ds, Split split,
                        const HeadConfig& head);

// Bit-slices the chosen dataset rows into a PackedBatch.
PackedBatch pack_rows(const BinaryDataset& ds, std::span<const std::uint32_t> rows);

// Per-output activation rate (fraction of samples emitting 1) of a circuit.
std::vector<double> activation_rates(const DiscreteCircuit& circ, const BinaryDataset& ds,
                                     std::span<const std::uint32_t> rows);

std::string run_record_csv(const RunRecord& r);
std::string run_summary_csv(const RunRecord& r);

}  // namespace dlgn
