#include "dlgn/compile.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>

#include "dlgn/bytes.hpp"
#include "dlgn/checkpoint.hpp"

namespace dlgn {

std::size_t DiscreteCircuit::num_gates() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.width();
    return n;
}

std::size_t DiscreteCircuit::num_kept() const {
    return static_cast<std::size_t>(std::count(kept_outputs.begin(), kept_outputs.end(), 1));
}

void DiscreteCircuit::validate() const {
    if (layers.empty()) throw std::invalid_argument("circuit has no layers");
    std::size_t prev = input_dim;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        if (layer.width() == 0) throw std::invalid_argument("circuit layer " + std::to_string(l) + " is empty");
        if (layer.in_a.size() != layer.width() || layer.in_b.size() != layer.width()) {
            throw std::invalid_argument("circuit layer " + std::to_string(l) + " has inconsistent shapes");
        }
        for (std::size_t j = 0; j < layer.width(); ++j) {
            if (layer.in_a[j] >= prev || layer.in_b[j] >= prev) {
                throw std::invalid_argument("circuit layer " + std::to_string(l) + " gate " +
                                            std::to_string(j) + " wired out of range");
            }
        }
        prev = layer.width();
    }
    if (kept_outputs.size() != prev || output_origin.size() != prev) {
        throw std::invalid_argument("circuit output masks do not match final layer width");
    }
}

DiscreteCircuit harden(const LogicNetwork& net) {
    DiscreteCircuit c;
    c.input_dim = net.input_dim();
    c.layers.reserve(net.num_layers());
    for (const auto& layer : net.layers()) {
        CircuitLayer cl;
        cl.in_a = layer.in_a;
        cl.in_b = layer.in_b;
        cl.gates.resize(layer.width());
        for (std::size_t j = 0; j < layer.width(); ++j) cl.gates[j] = argmax_gate(layer.neuron_logits(j));
        c.layers.push_back(std::move(cl));
    }
    c.kept_outputs.assign(net.output_dim(), 1);
    c.output_origin.resize(net.output_dim());
    std::iota(c.output_origin.begin(), c.output_origin.end(), 0u);
    c.source_hash = fingerprint(net);
    return c;
}

PackedBatch::PackedBatch(std::size_t features, std::size_t lanes)
    : features_(features), lanes_(lanes), words_((lanes + 63) / 64), data_(features * words_, 0) {}

void PackedBatch::set(std::size_t f, std::size_t lane, bool v) {
    auto& w = data_[f * words_ + lane / 64];
    const std::uint64_t bit = std::uint64_t{1} << (lane % 64);
    w = v ? (w | bit) : (w & ~bit);
}

PackedBatch PackedBatch::pack(const Matrix<std::uint8_t>& samples) {
    PackedBatch p(samples.cols(), samples.rows());
    for (std::size_t s = 0; s < samples.rows(); ++s) {
        const auto row = samples.row(s);
        const std::uint64_t bit = std::uint64_t{1} << (s % 64);
        for (std::size_t f = 0; f < row.size(); ++f) {
            if (row[f] > 1) throw std::invalid_argument("PackedBatch::pack: entries must be 0 or 1");
            if (row[f]) p.data_[f * p.words_ + s / 64] |= bit;
        }
    }
    return p;
}

Matrix<std::uint8_t> PackedBatch::unpack() const {
    Matrix<std::uint8_t> m(lanes_, features_);
    for (std::size_t f = 0; f < features_; ++f) {
        for (std::size_t s = 0; s < lanes_; ++s) m(s, f) = get(f, s);
    }
    return m;
}

std::uint64_t apply_gate_word(GateKind g, std::uint64_t a, std::uint64_t b) {
    switch (g) {
        case GateKind::False: return 0;
        case GateKind::And: return a & b;
        case GateKind::AAndNotB: return a & ~b;
        case GateKind::A: return a;
        case GateKind::NotAAndB: return ~a & b;
        case GateKind::B: return b;
        case GateKind::Xor: return a ^ b;
        case GateKind::Or: return a | b;
        case GateKind::Nor: return ~(a | b);
        case GateKind::Xnor: return ~(a ^ b);
        case GateKind::NotB: return ~b;
        case GateKind::BImpliesA: return a | ~b;
        case GateKind::NotA: return ~a;
        case GateKind::AImpliesB: return ~a | b;
        case GateKind::Nand: return ~(a & b);
        case GateKind::True: return ~std::uint64_t{0};
    }
    return 0;
}

namespace {

template <GateKind G>
void run_gate(const std::uint64_t* a, const std::uint64_t* b, std::uint64_t* out, std::size_t n) {
    for (std::size_t w = 0; w < n; ++w) out[w] = apply_gate_word(G, a[w], b[w]);
}

using GateKernel = void (*)(const std::uint64_t*, const std::uint64_t*, std::uint64_t*, std::size_t);

template <std::size_t... I>
constexpr std::array<GateKernel, kNumGates> make_kernels(std::index_sequence<I...>) {
    return {&run_gate<static_cast<GateKind>(I)>...};
}

constexpr auto kKernels = make_kernels(std::make_index_sequence<kNumGates>{});

}  // namespace

PackedBatch eval_packed(const DiscreteCircuit& circ, const PackedBatch& batch) {
    if (batch.features() != circ.input_dim) {
        throw std::invalid_argument("eval_packed: batch has " + std::to_string(batch.features()) +
                                    " features, circuit expects " + std::to_string(circ.input_dim));
    }
    const std::size_t words = batch.words();
    const PackedBatch* cur = &batch;
    PackedBatch next;
    PackedBatch held;
    for (const auto& layer : circ.layers) {
        next = PackedBatch(layer.width(), batch.lanes());
        for (std::size_t j = 0; j < layer.width(); ++j) {
            kKernels[gate_id(layer.gates[j])](cur->feature(layer.in_a[j]).data(),
                                              cur->feature(layer.in_b[j]).data(),
                                              next.feature(j).data(), words);
        }
        held = std::move(next);
        cur = &held;
    }
    // Clear lanes past the batch so constant-true gates do not leak padding.
    if (batch.lanes() % 64 != 0) {
        const std::uint64_t tail = (std::uint64_t{1} << (batch.lanes() % 64)) - 1;
        for (std::size_t f = 0; f < held.features(); ++f) held.feature(f)[words - 1] &= tail;
    }
    return held;
}

std::vector<std::uint8_t> eval_scalar(const DiscreteCircuit& circ,
                                      std::span<const std::uint8_t> input) {
    if (input.size() != circ.input_dim) throw std::invalid_argument("eval_scalar: input length mismatch");
    std::vector<std::uint8_t> cur(input.begin(), input.end());
    for (const auto& layer : circ.layers) {
        std::vector<std::uint8_t> next(layer.width());
        for (std::size_t j = 0; j < layer.width(); ++j) {
            next[j] = bool_eval(layer.gates[j], cur[layer.in_a[j]] != 0, cur[layer.in_b[j]] != 0);
        }
        cur = std::move(next);
    }
    return cur;
}

DiscreteCircuit prune_outputs(const DiscreteCircuit& circ, std::size_t keep_per_class,
                              const GroupSumHead& head, std::uint64_t seed) {
    circ.validate();
    if (keep_per_class == 0) throw std::invalid_argument("prune_outputs: keep_per_class must be >= 1");
    if (keep_per_class > head.group_size()) {
        throw std::invalid_argument("prune_outputs: keep_per_class exceeds group size " +
                                    std::to_string(head.group_size()));
    }
    std::vector<std::vector<std::size_t>> members(head.k());
    for (std::size_t j = 0; j < circ.output_dim(); ++j) {
        if (circ.output_origin[j] >= head.n()) {
            throw std::invalid_argument("prune_outputs: circuit output does not belong to the head");
        }
        if (circ.kept_outputs[j]) members[head.class_of(circ.output_origin[j])].push_back(j);
    }
    DiscreteCircuit out = circ;
    std::fill(out.kept_outputs.begin(), out.kept_outputs.end(), 0);
    std::mt19937_64 rng(seed);
    for (auto& m : members) {
        std::shuffle(m.begin(), m.end(), rng);
        for (std::size_t i = 0; i < std::min(keep_per_class, m.size()); ++i) out.kept_outputs[m[i]] = 1;
    }
    return out;
}

EliminationResult reachability_eliminate(const DiscreteCircuit& circ) {
    circ.validate();
    if (circ.num_kept() == 0) throw std::invalid_argument("reachability_eliminate: no kept outputs");
    const std::size_t L = circ.layers.size();
    std::vector<std::vector<std::uint8_t>> live(L);
    live[L - 1] = circ.kept_outputs;
    for (std::size_t l = L - 1; l > 0; --l) {
        live[l - 1].assign(circ.layers[l - 1].width(), 0);
        const auto& layer = circ.layers[l];
        for (std::size_t j = 0; j < layer.width(); ++j) {
            if (!live[l][j]) continue;
            live[l - 1][layer.in_a[j]] = 1;
            live[l - 1][layer.in_b[j]] = 1;
        }
    }

    EliminationResult res;
    auto& c = res.circuit;
    c.input_dim = circ.input_dim;
    c.source_hash = circ.source_hash;
    std::vector<std::uint32_t> remap_prev;  // old index -> new index in the previous layer
    std::size_t kept_total = 0;
    for (std::size_t l = 0; l < L; ++l) {
        const auto& src = circ.layers[l];
        CircuitLayer dst;
        std::vector<std::uint32_t> remap(src.width(), 0);
        for (std::size_t j = 0; j < src.width(); ++j) {
            if (!live[l][j]) continue;
            remap[j] = static_cast<std::uint32_t>(dst.gates.size());
            dst.gates.push_back(src.gates[j]);
            dst.in_a.push_back(l == 0 ? src.in_a[j] : remap_prev[src.in_a[j]]);
            dst.in_b.push_back(l == 0 ? src.in_b[j] : remap_prev[src.in_b[j]]);
            if (l == L - 1) c.output_origin.push_back(circ.output_origin[j]);
        }
        kept_total += dst.width();
        c.layers.push_back(std::move(dst));
        remap_prev = std::move(remap);
    }
    c.kept_outputs.assign(c.output_dim(), 1);
    const std::size_t before = circ.num_gates();
    res.pruned_fraction = static_cast<double>(before - kept_total) / static_cast<double>(before);
    return res;
}

std::vector<std::uint32_t> predict_packed(const DiscreteCircuit& circ, const PackedBatch& outputs,
                                          const HeadConfig& head) {
    if (outputs.features() != circ.output_dim()) {
        throw std::invalid_argument("predict_packed: outputs do not match circuit");
    }
    const std::size_t lanes = outputs.lanes();
    std::vector<std::uint32_t> pred(lanes, 0);
    if (head.kind == HeadKind::Codebook) {
        if (circ.output_dim() != head.n || circ.num_kept() != head.n) {
            throw std::invalid_argument("predict_packed: codebook heads need the full, unpruned output layer");
        }
        std::vector<std::uint8_t> bits(head.n);
        for (std::size_t s = 0; s < lanes; ++s) {
            for (std::size_t j = 0; j < circ.output_dim(); ++j) bits[circ.output_origin[j]] = outputs.get(j, s);
            pred[s] = static_cast<std::uint32_t>(head_predict_bits(head, bits));
        }
        return pred;
    }
    const GroupSumHead gs = head.group_sum();
    std::vector<std::uint32_t> counts(lanes * gs.k(), 0);
    for (std::size_t j = 0; j < circ.output_dim(); ++j) {
        if (!circ.kept_outputs[j]) continue;
        if (circ.output_origin[j] >= gs.n()) throw std::invalid_argument("predict_packed: output outside head");
        const std::size_t c = gs.class_of(circ.output_origin[j]);
        const auto words = outputs.feature(j);
        for (std::size_t w = 0; w < words.size(); ++w) {
            std::uint64_t bits = words[w];
            while (bits) {
                const int b = std::countr_zero(bits);
                counts[(w * 64 + static_cast<std::size_t>(b)) * gs.k() + c] += 1;
                bits &= bits - 1;
            }
        }
    }
    for (std::size_t s = 0; s < lanes; ++s) {
        const std::uint32_t* row = &counts[s * gs.k()];
        pred[s] = static_cast<std::uint32_t>(std::max_element(row, row + gs.k()) - row);
    }
    return pred;
}

std::string to_netlist(const DiscreteCircuit& circ) {
    circ.validate();
    std::ostringstream os;
    os << "# dlgn netlist v1\n";
    os << "# inputs " << circ.input_dim << "\n";
    os << "# source " << hex64(circ.source_hash) << "\n";
    bool identity = true;
    for (std::size_t j = 0; j < circ.output_origin.size(); ++j) identity &= circ.output_origin[j] == j;
    if (!identity) {
        os << "# origin";
        for (auto o : circ.output_origin) os << ' ' << o;
        os << "\n";
    }
    std::size_t base_prev = 0;
    std::size_t base = 0;
    for (std::size_t l = 0; l < circ.layers.size(); ++l) {
        const auto& layer = circ.layers[l];
        const char* prefix = l == 0 ? "i" : "g";
        for (std::size_t j = 0; j < layer.width(); ++j) {
            const std::size_t a = (l == 0 ? 0 : base_prev) + layer.in_a[j];
            const std::size_t b = (l == 0 ? 0 : base_prev) + layer.in_b[j];
            os << 'g' << base + j << " = " << gate_name(layer.gates[j]) << '(' << prefix << a << ", "
               << prefix << b << ")\n";
        }
        base_prev = base;
        base += layer.width();
    }
    for (std::size_t j = 0; j < circ.output_dim(); ++j) {
        if (circ.kept_outputs[j]) os << "output g" << base_prev + j << "\n";
    }
    return os.str();
}

namespace {

[[noreturn]] void netlist_error(std::size_t line, const std::string& msg) {
    throw FormatError("netlist line " + std::to_string(line) + ": " + msg);
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::uint64_t parse_uint(std::string_view s, std::size_t line, int base = 10) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
    if (ec != std::errc() || p != s.data() + s.size()) netlist_error(line, "bad number '" + std::string(s) + "'");
    return v;
}

struct Ref {
    bool input;
    std::size_t index;
};

Ref parse_ref(std::string_view s, std::size_t line) {
    s = trim(s);
    if (s.size() < 2 || (s[0] != 'i' && s[0] != 'g')) netlist_error(line, "bad signal '" + std::string(s) + "'");
    return {s[0] == 'i', static_cast<std::size_t>(parse_uint(s.substr(1), line))};
}

}  // namespace

DiscreteCircuit parse_netlist(std::string_view text) {
    struct Gate {
        GateKind kind;
        Ref a, b;
    };
    std::vector<Gate> gates;
    std::vector<std::size_t> outputs;
    std::optional<std::size_t> input_dim;
    std::uint64_t source = 0;
    std::vector<std::uint32_t> origin;
    bool have_origin = false;

    std::size_t lineno = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = trim(text.substr(0, nl));
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            line = trim(line.substr(1));
            if (line.starts_with("inputs ")) input_dim = parse_uint(trim(line.substr(7)), lineno);
            else if (line.starts_with("source ")) source = parse_uint(trim(line.substr(7)), lineno, 16);
            else if (line.starts_with("origin")) {
                have_origin = true;
                std::istringstream is{std::string(line.substr(6))};
                std::string tok;
                while (is >> tok) origin.push_back(static_cast<std::uint32_t>(parse_uint(tok, lineno)));
            }
            continue;
        }
        if (line.starts_with("output ")) {
            const Ref r = parse_ref(line.substr(7), lineno);
            if (r.input) netlist_error(lineno, "outputs must be gates");
            outputs.push_back(r.index);
            continue;
        }
        const auto eq = line.find('=');
        const auto lp = line.find('(');
        const auto comma = line.find(',');
        const auto rp = line.find(')');
        if (eq == std::string_view::npos || lp == std::string_view::npos || comma == std::string_view::npos ||
            rp == std::string_view::npos || !(eq < lp && lp < comma && comma < rp)) {
            netlist_error(lineno, "expected 'g<n> = OP(src, src)'");
        }
        const Ref lhs = parse_ref(line.substr(0, eq), lineno);
        if (lhs.input || lhs.index != gates.size()) netlist_error(lineno, "gates must be numbered consecutively");
        const auto op = gate_from_name(trim(line.substr(eq + 1, lp - eq - 1)));
        if (!op) netlist_error(lineno, "unknown opcode");
        gates.push_back({*op, parse_ref(line.substr(lp + 1, comma - lp - 1), lineno),
                         parse_ref(line.substr(comma + 1, rp - comma - 1), lineno)});
    }
    if (gates.empty()) throw FormatError("netlist: no gates");

    // Layer of a gate = 1 + layer of its sources; inputs sit at layer 0.
    std::size_t max_input = 0;
    std::vector<std::size_t> depth(gates.size());
    for (std::size_t g = 0; g < gates.size(); ++g) {
        std::size_t d[2];
        const Ref refs[2] = {gates[g].a, gates[g].b};
        for (int k = 0; k < 2; ++k) {
            if (refs[k].input) {
                d[k] = 0;
                max_input = std::max(max_input, refs[k].index + 1);
            } else {
                if (refs[k].index >= g) throw FormatError("netlist: g" + std::to_string(g) + " uses a later gate");
                d[k] = depth[refs[k].index];
            }
        }
        if (d[0] != d[1]) throw FormatError("netlist: g" + std::to_string(g) + " mixes layers");
        depth[g] = d[0] + 1;
        if (g > 0 && depth[g] < depth[g - 1]) throw FormatError("netlist: gates are not in layer order");
    }

    DiscreteCircuit c;
    c.input_dim = input_dim.value_or(max_input);
    c.source_hash = source;
    const std::size_t L = depth.back();
    c.layers.resize(L);
    std::vector<std::size_t> layer_base(L + 1, 0);
    for (std::size_t g = 0; g < gates.size(); ++g) {
        auto& layer = c.layers[depth[g] - 1];
        if (layer.width() == 0) layer_base[depth[g] - 1] = g;
        const auto local = [&](const Ref& r) {
            return static_cast<std::uint32_t>(r.input ? r.index : r.index - layer_base[depth[g] - 2]);
        };
        layer.gates.push_back(gates[g].kind);
        layer.in_a.push_back(local(gates[g].a));
        layer.in_b.push_back(local(gates[g].b));
    }
    const std::size_t out_w = c.layers.back().width();
    const std::size_t out_base = layer_base[L - 1];
    c.kept_outputs.assign(out_w, 0);
    for (auto o : outputs) {
        if (o < out_base || o >= out_base + out_w) {
            throw FormatError("netlist: output g" + std::to_string(o) + " is not in the final layer");
        }
        c.kept_outputs[o - out_base] = 1;
    }
    if (have_origin) {
        c.output_origin = std::move(origin);
    } else {
        c.output_origin.resize(out_w);
        std::iota(c.output_origin.begin(), c.output_origin.end(), 0u);
    }
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("netlist: ") + e.what());
    }
    return c;
}

void export_netlist(const DiscreteCircuit& circ, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << to_netlist(circ);
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

DiscreteCircuit import_netlist(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return parse_netlist(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace dlgn
