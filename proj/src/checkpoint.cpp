#include "dlgn/checkpoint.hpp"

#include <algorithm>
#include <string>

#include "dlgn/bytes.hpp"

namespace dlgn {

namespace {

constexpr char kMagic[8] = {'D', 'L', 'G', 'N', 'C', 'K', 'P', 'T'};
// Guards against absurd allocations from corrupt headers.
constexpr std::uint32_t kMaxWidth = 1u << 26;

void write_network(ByteWriter& w, const LogicNetwork& net) {
    w.raw(std::span(reinterpret_cast<const std::uint8_t*>(kMagic), 8));
    w.u32(kCheckpointVersion);
    w.u64(net.seed());
    w.u32(static_cast<std::uint32_t>(net.input_dim()));
    w.u32(static_cast<std::uint32_t>(net.num_layers()));
    for (auto width : net.widths()) w.u32(static_cast<std::uint32_t>(width));
    for (const auto& layer : net.layers()) {
        for (auto v : layer.in_a) w.u32(v);
        for (auto v : layer.in_b) w.u32(v);
    }
    for (const auto& layer : net.layers()) {
        for (double v : layer.logits) w.f64(v);
    }
}

void write_bits(ByteWriter& w, const std::vector<std::uint8_t>& bits) {
    w.u32(static_cast<std::uint32_t>(bits.size()));
    std::vector<std::uint8_t> packed((bits.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < bits.size(); ++i) packed[i / 8] |= (bits[i] & 1) << (i % 8);
    w.raw(packed);
}

std::vector<std::uint8_t> read_bits(ByteReader& r) {
    const std::uint32_t n = r.u32();
    if (n > kMaxWidth) r.fail("code row too long");
    const auto packed = r.raw((n + 7) / 8);
    std::vector<std::uint8_t> bits(n);
    for (std::size_t i = 0; i < n; ++i) bits[i] = (packed[i / 8] >> (i % 8)) & 1;
    return bits;
}

void write_head(ByteWriter& w, const HeadConfig& h) {
    w.u8(static_cast<std::uint8_t>(h.kind));
    w.u32(static_cast<std::uint32_t>(h.n));
    w.u32(static_cast<std::uint32_t>(h.k));
    w.f64(h.tau);
    w.f64(h.dropout_p);
    w.u8(h.dropout_rescale ? 1 : 0);
    w.u8(h.dropout_scope == DropoutScope::PerSample ? 1 : 0);
    w.u8(h.codebook ? 1 : 0);
    if (!h.codebook) return;
    const auto& cb = *h.codebook;
    w.u32(static_cast<std::uint32_t>(cb.k()));
    w.u8(cb.reduction() ? 1 : 0);
    if (cb.reduction()) {
        w.u32(static_cast<std::uint32_t>(cb.reduction()->n));
        w.f64(cb.reduction()->tau);
    }
    for (const auto& code : cb.codes()) write_bits(w, code);
}

HeadConfig read_head(ByteReader& r) {
    HeadConfig h;
    const auto kind = r.u8();
    if (kind < 1 || kind > 3) r.fail("unknown head kind " + std::to_string(kind));
    h.kind = static_cast<HeadKind>(kind);
    h.n = r.u32();
    h.k = r.u32();
    h.tau = r.f64();
    h.dropout_p = r.f64();
    h.dropout_rescale = r.u8() != 0;
    h.dropout_scope = r.u8() ? DropoutScope::PerSample : DropoutScope::PerBatch;
    if (r.u8()) {
        const std::uint32_t k = r.u32();
        if (k > kMaxWidth) r.fail("codebook too large");
        std::optional<CodeReduction> red;
        if (r.u8()) {
            CodeReduction cr;
            cr.n = r.u32();
            cr.tau = r.f64();
            red = cr;
        }
        std::vector<std::vector<std::uint8_t>> codes;
        codes.reserve(k);
        for (std::uint32_t c = 0; c < k; ++c) codes.push_back(read_bits(r));
        try {
            h.codebook = Codebook(std::move(codes), red);
        } catch (const std::invalid_argument& e) {
            r.fail(std::string("invalid codebook: ") + e.what());
        }
    }
    try {
        h.validate();
    } catch (const std::invalid_argument& e) {
        r.fail(std::string("invalid head: ") + e.what());
    }
    return h;
}

}  // namespace

std::vector<std::uint8_t> save_checkpoint(const LogicNetwork& net, const HeadConfig* head) {
    ByteWriter w;
    write_network(w, net);
    w.u8(head ? 1 : 0);
    if (head) write_head(w, *head);
    w.u64(fnv1a(w.bytes()));
    return w.take();
}

Checkpoint load_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 + 8) throw FormatError("checkpoint: truncated (" + std::to_string(bytes.size()) + " bytes)");
    ByteReader r(bytes, "checkpoint");
    const auto magic = r.raw(8);
    if (!std::equal(magic.begin(), magic.end(), kMagic)) r.fail("bad magic, not a DLGN checkpoint");
    const auto version = r.u32();
    if (version != kCheckpointVersion) {
        r.fail("unsupported version " + std::to_string(version) + " (expected " +
               std::to_string(kCheckpointVersion) + ")");
    }
    const std::uint64_t seed = r.u64();
    const std::uint32_t input_dim = r.u32();
    const std::uint32_t num_layers = r.u32();
    if (num_layers == 0 || num_layers > 4096) r.fail("implausible layer count");
    std::vector<std::uint32_t> widths(num_layers);
    for (auto& w : widths) {
        w = r.u32();
        if (w == 0 || w > kMaxWidth) r.fail("implausible layer width");
    }
    std::vector<LogicLayer> layers(num_layers);
    for (std::size_t l = 0; l < num_layers; ++l) {
        layers[l].in_a.resize(widths[l]);
        layers[l].in_b.resize(widths[l]);
        for (auto& v : layers[l].in_a) v = r.u32();
        for (auto& v : layers[l].in_b) v = r.u32();
    }
    for (std::size_t l = 0; l < num_layers; ++l) {
        layers[l].logits.resize(std::size_t{widths[l]} * kNumGates);
        for (auto& v : layers[l].logits) v = r.f64();
    }
    std::optional<HeadConfig> head;
    if (r.u8()) head = read_head(r);

    const std::size_t body = r.pos();
    const std::uint64_t stored = r.u64();
    if (r.remaining() != 0) r.fail("trailing bytes after checksum");
    if (fnv1a(bytes.first(body)) != stored) r.fail("checksum mismatch, file is corrupt");

    try {
        Checkpoint ck{LogicNetwork(input_dim, std::move(layers), seed), std::move(head)};
        if (ck.head && ck.head->n != ck.net.output_dim()) {
            throw std::invalid_argument("head width does not match network output");
        }
        return ck;
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }
}

void write_checkpoint(const std::filesystem::path& path, const LogicNetwork& net,
                      const HeadConfig* head) {
    write_file(path, save_checkpoint(net, head));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    return load_checkpoint(read_file(path));
}

std::uint64_t fingerprint(const LogicNetwork& net) {
    ByteWriter w;
    write_network(w, net);
    return fnv1a(w.bytes());
}

}  // namespace dlgn
