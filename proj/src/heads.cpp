#include "dlgn/heads.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>

namespace dlgn {

GroupSumHead::GroupSumHead(std::size_t n, std::size_t k, double tau, double dropout_p)
    : n_(n), k_(k), tau_(tau), dropout_p_(dropout_p) {
    if (k_ == 0 || n_ == 0) throw std::invalid_argument("GroupSumHead: n and k must be >= 1");
    if (n_ % k_ != 0) {
        throw std::invalid_argument("GroupSumHead: k=" + std::to_string(k_) +
                                    " does not divide n=" + std::to_string(n_));
    }
    if (!(tau_ > 0) || !std::isfinite(tau_)) throw std::invalid_argument("GroupSumHead: tau must be > 0");
    if (!(dropout_p_ >= 0 && dropout_p_ < 1)) {
        throw std::invalid_argument("GroupSumHead: dropout p must be in [0, 1)");
    }
}

std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> p(logits.begin(), logits.end());
    if (p.empty()) return p;
    const double m = *std::max_element(p.begin(), p.end());
    double z = 0;
    for (auto& v : p) {
        v = std::exp(v - m);
        z += v;
    }
    for (auto& v : p) v /= z;
    return p;
}

std::vector<double> group_sum_logits(std::span<const double> out, const GroupSumHead& head) {
    if (out.size() != head.n()) {
        throw std::invalid_argument("group_sum_logits: expected " + std::to_string(head.n()) +
                                    " outputs, got " + std::to_string(out.size()));
    }
    const std::size_t g = head.group_size();
    std::vector<double> logits(head.k(), 0.0);
    for (std::size_t c = 0; c < head.k(); ++c) {
        double s = 0;
        for (std::size_t j = c * g; j < (c + 1) * g; ++j) s += out[j];
        logits[c] = s / head.tau();
    }
    return logits;
}

namespace {

void check_label(std::size_t label, std::size_t k) {
    if (label >= k) {
        throw std::invalid_argument("invalid label " + std::to_string(label) + " for " +
                                    std::to_string(k) + " classes");
    }
}

// BCE on a clamped probability and d(loss)/d(y) (zero where the clamp is active).
std::pair<double, double> bce(double y, double target) {
    constexpr double eps = kCodebookEps;
    const bool inside = y > eps && y < 1.0 - eps;
    const double yc = std::clamp(y, eps, 1.0 - eps);
    const double loss = -(target * std::log(yc) + (1.0 - target) * std::log(1.0 - yc));
    const double grad = inside ? (yc - target) / (yc * (1.0 - yc)) : 0.0;
    return {loss, grad};
}

}  // namespace

LossAndGrad group_sum_loss_and_grad(std::span<const double> out, std::size_t label,
                                    const GroupSumHead& head) {
    check_label(label, head.k());
    const auto logits = group_sum_logits(out, head);
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0;
    for (double v : logits) z += std::exp(v - m);
    const double lse = m + std::log(z);
    const auto p = softmax(logits);

    LossAndGrad r;
    r.loss = lse - logits[label];
    r.grad.resize(head.n());
    const std::size_t g = head.group_size();
    for (std::size_t c = 0; c < head.k(); ++c) {
        const double d = (p[c] - (c == label ? 1.0 : 0.0)) / head.tau();
        std::fill(r.grad.begin() + c * g, r.grad.begin() + (c + 1) * g, d);
    }
    return r;
}

LossAndGrad binary_logit_loss(std::span<const double> out, std::size_t label,
                              const GroupSumHead& head) {
    check_label(label, head.k());
    if (out.size() != head.n()) throw std::invalid_argument("binary_logit_loss: length mismatch");
    const double inv_n = 1.0 / static_cast<double>(head.n());
    LossAndGrad r;
    r.grad.resize(head.n());
    for (std::size_t j = 0; j < head.n(); ++j) {
        const double target = head.class_of(j) == label ? 1.0 : 0.0;
        const auto [l, d] = bce(out[j], target);
        r.loss += l * inv_n;
        r.grad[j] = d * inv_n;
    }
    return r;
}

std::size_t group_sum_predict_bits(std::span<const std::uint8_t> bits, const GroupSumHead& head,
                                   std::span<const std::uint8_t> kept) {
    if (bits.size() != head.n()) throw std::invalid_argument("group_sum_predict_bits: length mismatch");
    if (!kept.empty() && kept.size() != head.n()) {
        throw std::invalid_argument("group_sum_predict_bits: kept mask length mismatch");
    }
    const std::size_t g = head.group_size();
    std::size_t best = 0;
    std::size_t best_count = 0;
    for (std::size_t c = 0; c < head.k(); ++c) {
        std::size_t count = 0;
        for (std::size_t j = c * g; j < (c + 1) * g; ++j) {
            if (bits[j] && (kept.empty() || kept[j])) ++count;
        }
        if (c == 0 || count > best_count) {
            best = c;
            best_count = count;
        }
    }
    return best;
}

std::size_t group_sum_predict_relaxed(std::span<const double> out, const GroupSumHead& head) {
    const auto logits = group_sum_logits(out, head);
    return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

std::vector<std::uint8_t> dropout_mask(std::size_t n, double p, std::mt19937_64& rng) {
    if (!(p >= 0 && p < 1)) throw std::invalid_argument("dropout p must be in [0, 1)");
    std::vector<std::uint8_t> mask(n, 1);
    if (p == 0) return mask;
    std::bernoulli_distribution drop(p);
    for (auto& m : mask) m = drop(rng) ? 0 : 1;
    return mask;
}

void apply_groupsum_dropout(std::span<double> out, std::span<const std::uint8_t> mask, double p,
                            bool rescale) {
    if (mask.size() != out.size()) throw std::invalid_argument("dropout mask length mismatch");
    const double scale = rescale ? 1.0 / (1.0 - p) : 1.0;
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = mask[j] ? out[j] * scale : 0.0;
}

void apply_groupsum_dropout(std::span<double> out, double p, std::mt19937_64& rng, bool training,
                            bool rescale) {
    if (!(p >= 0 && p < 1)) throw std::invalid_argument("dropout p must be in [0, 1)");
    if (!training || p == 0) return;
    const auto mask = dropout_mask(out.size(), p, rng);
    apply_groupsum_dropout(out, mask, p, rescale);
}

Codebook::Codebook(std::vector<std::vector<std::uint8_t>> codes,
                   std::optional<CodeReduction> reduction)
    : codes_(std::move(codes)), reduction_(reduction) {
    if (codes_.empty()) throw std::invalid_argument("Codebook: no codes");
    const std::size_t o = codes_.front().size();
    if (o == 0) throw std::invalid_argument("Codebook: empty code");
    std::set<std::vector<std::uint8_t>> seen;
    for (const auto& c : codes_) {
        if (c.size() != o) throw std::invalid_argument("Codebook: codes differ in length");
        for (auto b : c) {
            if (b > 1) throw std::invalid_argument("Codebook: code entries must be 0 or 1");
        }
        if (!seen.insert(c).second) throw std::invalid_argument("Codebook: duplicate code");
    }
    if (reduction_) {
        if (reduction_->n == 0 || reduction_->n % o != 0) {
            throw std::invalid_argument("Codebook: reduction width must be a multiple of o");
        }
        if (!(reduction_->tau > 0)) throw std::invalid_argument("Codebook: reduction tau must be > 0");
    }
}

Codebook codebook_generate(std::size_t k, std::size_t o, std::uint64_t seed,
                           std::optional<CodeReduction> reduction) {
    if (k == 0 || o == 0) throw std::invalid_argument("codebook_generate: k and o must be >= 1");
    if (o < 64 && (std::uint64_t{1} << o) < k) {
        throw std::invalid_argument("codebook_generate: o=" + std::to_string(o) +
                                    " bits cannot hold " + std::to_string(k) + " distinct codes");
    }
    std::mt19937_64 rng(seed);
    std::vector<std::vector<std::uint8_t>> codes;
    codes.reserve(k);
    if (o <= 20 && 2 * k > (std::size_t{1} << o)) {
        // Dense regime: rejection sampling would stall, draw distinct words directly.
        std::vector<std::uint32_t> all(std::size_t{1} << o);
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint32_t>(i);
        std::shuffle(all.begin(), all.end(), rng);
        for (std::size_t c = 0; c < k; ++c) {
            std::vector<std::uint8_t> code(o);
            for (std::size_t b = 0; b < o; ++b) code[b] = (all[c] >> b) & 1;
            codes.push_back(std::move(code));
        }
        return Codebook(std::move(codes), reduction);
    }
    std::set<std::vector<std::uint8_t>> seen;
    while (codes.size() < k) {
        std::vector<std::uint8_t> code(o);
        for (std::size_t b = 0; b < o; b += 64) {
            const std::uint64_t word = rng();
            for (std::size_t i = b; i < std::min(o, b + 64); ++i) code[i] = (word >> (i - b)) & 1;
        }
        if (seen.insert(code).second) codes.push_back(std::move(code));
    }
    return Codebook(std::move(codes), reduction);
}

std::size_t codebook_predict(std::span<const std::uint8_t> out_bits, const Codebook& cb) {
    if (out_bits.size() != cb.o()) {
        throw std::invalid_argument("codebook_predict: expected " + std::to_string(cb.o()) +
                                    " bits, got " + std::to_string(out_bits.size()));
    }
    std::size_t best = 0;
    std::size_t best_dist = std::numeric_limits<std::size_t>::max();
    for (std::size_t c = 0; c < cb.k(); ++c) {
        const auto& code = cb.code(c);
        std::size_t d = 0;
        for (std::size_t i = 0; i < code.size(); ++i) d += (code[i] != (out_bits[i] != 0));
        if (d < best_dist) {
            best = c;
            best_dist = d;
        }
    }
    return best;
}

std::vector<double> codebook_reduce(std::span<const double> out, const Codebook& cb) {
    if (out.size() != cb.input_width()) throw std::invalid_argument("codebook_reduce: length mismatch");
    if (!cb.reduction()) return {out.begin(), out.end()};
    const std::size_t o = cb.o();
    const std::size_t g = cb.reduction()->n / o;
    std::vector<double> r(o, 0.0);
    for (std::size_t j = 0; j < o; ++j) {
        double s = 0;
        for (std::size_t i = j * g; i < (j + 1) * g; ++i) s += out[i];
        r[j] = s / cb.reduction()->tau;
    }
    return r;
}

std::vector<std::uint8_t> codebook_reduce_bits(std::span<const std::uint8_t> bits,
                                               const Codebook& cb) {
    if (bits.size() != cb.input_width()) {
        throw std::invalid_argument("codebook_reduce_bits: length mismatch");
    }
    if (!cb.reduction()) return {bits.begin(), bits.end()};
    const std::size_t o = cb.o();
    const std::size_t g = cb.reduction()->n / o;
    std::vector<std::uint8_t> r(o, 0);
    for (std::size_t j = 0; j < o; ++j) {
        std::size_t count = 0;
        for (std::size_t i = j * g; i < (j + 1) * g; ++i) count += bits[i] != 0;
        r[j] = static_cast<double>(count) / cb.reduction()->tau > 0.5;
    }
    return r;
}

LossAndGrad codebook_train_loss(std::span<const double> out, std::size_t label,
                                const Codebook& cb, double tau) {
    check_label(label, cb.k());
    if (!(tau > 0)) throw std::invalid_argument("codebook_train_loss: tau must be > 0");
    const auto reduced = codebook_reduce(out, cb);
    const auto& code = cb.code(label);
    const double scale = 1.0 / (tau * static_cast<double>(cb.o()));
    std::vector<double> grad_reduced(cb.o());
    LossAndGrad r;
    for (std::size_t j = 0; j < cb.o(); ++j) {
        const auto [l, d] = bce(reduced[j], code[j]);
        r.loss += l * scale;
        grad_reduced[j] = d * scale;
    }
    if (!cb.reduction()) {
        r.grad = std::move(grad_reduced);
        return r;
    }
    const std::size_t g = cb.reduction()->n / cb.o();
    r.grad.resize(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) r.grad[i] = grad_reduced[i / g] / cb.reduction()->tau;
    return r;
}

std::size_t codebook_predict_relaxed(std::span<const double> out, const Codebook& cb) {
    const auto reduced = codebook_reduce(out, cb);
    std::size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cb.k(); ++c) {
        const auto& code = cb.code(c);
        double d = 0;
        for (std::size_t i = 0; i < code.size(); ++i) d += std::abs(reduced[i] - code[i]);
        if (d < best_dist) {
            best = c;
            best_dist = d;
        }
    }
    return best;
}

void HeadConfig::validate() const {
    if (!(tau > 0) || !std::isfinite(tau)) throw std::invalid_argument("head: tau must be > 0");
    if (!(dropout_p >= 0 && dropout_p < 1)) throw std::invalid_argument("head: dropout p must be in [0, 1)");
    switch (kind) {
        case HeadKind::GroupSum:
        case HeadKind::BinaryLogit:
            (void)group_sum();
            return;
        case HeadKind::Codebook:
            if (!codebook) throw std::invalid_argument("head: codebook head without a codebook");
            if (codebook->k() != k || codebook->input_width() != n) {
                throw std::invalid_argument("head: codebook shape does not match head");
            }
            return;
    }
    throw std::invalid_argument("head: unknown kind");
}

HeadConfig make_group_sum_head(std::size_t n, std::size_t k, double tau, double dropout_p) {
    HeadConfig h;
    h.kind = HeadKind::GroupSum;
    h.n = n;
    h.k = k;
    h.tau = tau;
    h.dropout_p = dropout_p;
    h.validate();
    return h;
}

HeadConfig make_binary_logit_head(std::size_t n, std::size_t k, double tau) {
    HeadConfig h = make_group_sum_head(n, k, tau);
    h.kind = HeadKind::BinaryLogit;
    return h;
}

HeadConfig make_codebook_head(Codebook cb, double tau, double dropout_p) {
    HeadConfig h;
    h.kind = HeadKind::Codebook;
    h.n = cb.input_width();
    h.k = cb.k();
    h.tau = tau;
    h.dropout_p = dropout_p;
    h.codebook = std::move(cb);
    h.validate();
    return h;
}

BatchLoss head_loss(const HeadConfig& head, const Matrix<double>& out,
                    std::span<const std::uint32_t> labels) {
    if (out.rows() != labels.size()) throw std::invalid_argument("head_loss: batch size mismatch");
    if (out.cols() != head.n) throw std::invalid_argument("head_loss: output width mismatch");
    BatchLoss r;
    r.grad = Matrix<double>(out.rows(), out.cols());
    if (out.rows() == 0) return r;
    const double inv_b = 1.0 / static_cast<double>(out.rows());
    const GroupSumHead gs = head.kind == HeadKind::Codebook ? GroupSumHead(head.n, 1, head.tau)
                                                            : head.group_sum();
    for (std::size_t s = 0; s < out.rows(); ++s) {
        LossAndGrad lg;
        switch (head.kind) {
            case HeadKind::GroupSum: lg = group_sum_loss_and_grad(out.row(s), labels[s], gs); break;
            case HeadKind::BinaryLogit: lg = binary_logit_loss(out.row(s), labels[s], gs); break;
            case HeadKind::Codebook:
                lg = codebook_train_loss(out.row(s), labels[s], *head.codebook, head.tau);
                break;
        }
        r.loss += lg.loss * inv_b;
        auto g = r.grad.row(s);
        for (std::size_t j = 0; j < g.size(); ++j) g[j] = lg.grad[j] * inv_b;
    }
    return r;
}

std::size_t head_predict_relaxed(const HeadConfig& head, std::span<const double> out) {
    if (head.kind == HeadKind::Codebook) return codebook_predict_relaxed(out, *head.codebook);
    return group_sum_predict_relaxed(out, head.group_sum());
}

std::size_t head_predict_bits(const HeadConfig& head, std::span<const std::uint8_t> bits,
                              std::span<const std::uint8_t> kept) {
    if (head.kind == HeadKind::Codebook) {
        if (!kept.empty() && std::find(kept.begin(), kept.end(), 0) != kept.end()) {
            throw std::invalid_argument("codebook heads do not support pruned outputs");
        }
        return codebook_predict(codebook_reduce_bits(bits, *head.codebook), *head.codebook);
    }
    return group_sum_predict_bits(bits, head.group_sum(), kept);
}

}  // namespace dlgn
