#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "dlgn/matrix.hpp"

namespace dlgn {

// Group-Sum output layer: n outputs split into k contiguous segments of n/k
// neurons, segment sums scaled by 1/tau feed a softmax.
class GroupSumHead {
public:
    GroupSumHead(std::size_t n, std::size_t k, double tau, double dropout_p = 0.0);

    std::size_t n() const { return n_; }
    std::size_t k() const { return k_; }
    double tau() const { return tau_; }
    double dropout_p() const { return dropout_p_; }
    std::size_t group_size() const { return n_ / k_; }
    std::size_t class_of(std::size_t neuron) const { return neuron / group_size(); }

    bool operator==(const GroupSumHead&) const = default;

private:
    std::size_t n_;
    std::size_t k_;
    double tau_;
    double dropout_p_;
};

struct LossAndGrad {
    double loss = 0;
    std::vector<double> grad;
};

// Numerically stable softmax.
std::vector<double> softmax(std::span<const double> logits);

std::vector<double> group_sum_logits(std::span<const double> out, const GroupSumHead& head);

// Cross-entropy of softmax(group_sum_logits) against one label.
LossAndGrad group_sum_loss_and_grad(std::span<const double> out, std::size_t label,
                                    const GroupSumHead& head);

// Per-neuron BCE; target 1 inside the label's segment, 0 elsewhere; mean over n.
LossAndGrad binary_logit_loss(std::span<const double> out, std::size_t label,
                              const GroupSumHead& head);

// Discrete decision: argmax of segment popcounts over kept neurons, ties to the
// lowest class. `kept` may be empty (all neurons kept).
std::size_t group_sum_predict_bits(std::span<const std::uint8_t> bits, const GroupSumHead& head,
                                   std::span<const std::uint8_t> kept = {});

// Relaxed decision: argmax of segment sums, ties to the lowest class.
std::size_t group_sum_predict_relaxed(std::span<const double> out, const GroupSumHead& head);

enum class DropoutScope { PerBatch, PerSample };

// Keep-mask over n neurons (1 = keep). Throws for p outside [0, 1).
std::vector<std::uint8_t> dropout_mask(std::size_t n, double p, std::mt19937_64& rng);

// Zeroes the outputs whose mask entry is 0. Applied only during training;
// with rescale the survivors are multiplied by 1/(1-p).
void apply_groupsum_dropout(std::span<double> out, std::span<const std::uint8_t> mask, double p,
                            bool rescale = false);

// Convenience wrapper: draws a fresh mask and applies it in place.
void apply_groupsum_dropout(std::span<double> out, double p, std::mt19937_64& rng,
                            bool training = true, bool rescale = false);

// Optional Group-Sum reduction of n outputs down to the code length o.
struct CodeReduction {
    std::size_t n = 0;
    double tau = 1.0;  // segment sum is divided by tau
    bool operator==(const CodeReduction&) const = default;
};

// k distinct binary codes of length o.
class Codebook {
public:
    Codebook(std::vector<std::vector<std::uint8_t>> codes,
             std::optional<CodeReduction> reduction = std::nullopt);

    std::size_t k() const { return codes_.size(); }
    std::size_t o() const { return codes_.front().size(); }
    const std::vector<std::uint8_t>& code(std::size_t c) const { return codes_[c]; }
    const std::vector<std::vector<std::uint8_t>>& codes() const { return codes_; }
    const std::optional<CodeReduction>& reduction() const { return reduction_; }
    // Number of network outputs this codebook consumes.
    std::size_t input_width() const { return reduction_ ? reduction_->n : o(); }

    bool operator==(const Codebook&) const = default;

private:
    std::vector<std::vector<std::uint8_t>> codes_;
    std::optional<CodeReduction> reduction_;
};

// Throws when 2^o < k.
Codebook codebook_generate(std::size_t k, std::size_t o, std::uint64_t seed,
                           std::optional<CodeReduction> reduction = std::nullopt);

// Nearest code by Hamming distance; ties to the lowest class.
std::size_t codebook_predict(std::span<const std::uint8_t> out_bits, const Codebook& cb);

// Maps n relaxed outputs to o code positions (identity without a reduction).
std::vector<double> codebook_reduce(std::span<const double> out, const Codebook& cb);
// Discrete counterpart: reduced value (popcount / tau) > 0.5.
std::vector<std::uint8_t> codebook_reduce_bits(std::span<const std::uint8_t> bits,
                                               const Codebook& cb);

// Mean per-bit BCE between clamped outputs and the class code, divided by tau.
inline constexpr double kCodebookEps = 1e-7;
LossAndGrad codebook_train_loss(std::span<const double> out, std::size_t label,
                                const Codebook& cb, double tau);

// Relaxed decision: nearest code in L1 distance.
std::size_t codebook_predict_relaxed(std::span<const double> out, const Codebook& cb);

enum class HeadKind : std::uint8_t { GroupSum = 1, Codebook = 2, BinaryLogit = 3 };

// Output-layer strategy used by training and evaluation. n is the number of
// network outputs consumed, k the number of classes.
struct HeadConfig {
    HeadKind kind = HeadKind::GroupSum;
    std::size_t n = 1;
    std::size_t k = 1;
    double tau = 1.0;
    double dropout_p = 0.0;
    bool dropout_rescale = false;
    DropoutScope dropout_scope = DropoutScope::PerBatch;
    std::optional<Codebook> codebook;  // required for HeadKind::Codebook

    // Throws std::invalid_argument if the fields are inconsistent.
    void validate() const;
    GroupSumHead group_sum() const { return GroupSumHead(n, k, tau, dropout_p); }
    bool operator==(const HeadConfig&) const = default;
};

HeadConfig make_group_sum_head(std::size_t n, std::size_t k, double tau, double dropout_p = 0.0);
HeadConfig make_binary_logit_head(std::size_t n, std::size_t k, double tau = 1.0);
HeadConfig make_codebook_head(Codebook cb, double tau, double dropout_p = 0.0);

// Mean loss over a batch and its gradient wrt every output.
struct BatchLoss {
    double loss = 0;
    Matrix<double> grad;
};
BatchLoss head_loss(const HeadConfig& head, const Matrix<double>& out,
                    std::span<const std::uint32_t> labels);

std::size_t head_predict_relaxed(const HeadConfig& head, std::span<const double> out);
std::size_t head_predict_bits(const HeadConfig& head, std::span<const std::uint8_t> bits,
                              std::span<const std::uint8_t> kept = {});

}  // namespace dlgn
