#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dlgn/gates.hpp"
#include "dlgn/heads.hpp"
#include "dlgn/matrix.hpp"
#include "dlgn/network.hpp"

namespace dlgn {

struct CircuitLayer {
    std::vector<GateKind> gates;
    std::vector<std::uint32_t> in_a;
    std::vector<std::uint32_t> in_b;

    std::size_t width() const { return gates.size(); }
    bool operator==(const CircuitLayer&) const = default;
};

// A hardened network. kept_outputs masks the final layer; output_origin maps
// each final-layer gate back to its index in the original output layer, so a
// Group-Sum head can still assign it to a class after compaction.
struct DiscreteCircuit {
    std::size_t input_dim = 0;
    std::vector<CircuitLayer> layers;
    std::vector<std::uint8_t> kept_outputs;
    std::vector<std::uint32_t> output_origin;
    std::uint64_t source_hash = 0;

    std::size_t output_dim() const { return layers.back().width(); }
    std::size_t num_gates() const;
    std::size_t num_kept() const;
    // Throws std::invalid_argument when wiring or masks are inconsistent.
    void validate() const;
    bool operator==(const DiscreteCircuit&) const = default;
};

DiscreteCircuit harden(const LogicNetwork& net);

// Bit-sliced batch: one row of 64-bit words per feature, one bit lane per
// sample. Lanes past `lanes()` are zero.
class PackedBatch {
public:
    PackedBatch() = default;
    PackedBatch(std::size_t features, std::size_t lanes);

    // rows of `samples` are samples, entries 0/1.
    static PackedBatch pack(const Matrix<std::uint8_t>& samples);
    Matrix<std::uint8_t> unpack() const;

    std::size_t features() const { return features_; }
    std::size_t lanes() const { return lanes_; }
    std::size_t words() const { return words_; }

    std::span<std::uint64_t> feature(std::size_t f) { return {data_.data() + f * words_, words_}; }
    std::span<const std::uint64_t> feature(std::size_t f) const {
        return {data_.data() + f * words_, words_};
    }
    bool get(std::size_t f, std::size_t lane) const {
        return (data_[f * words_ + lane / 64] >> (lane % 64)) & 1;
    }
    void set(std::size_t f, std::size_t lane, bool v);

    bool operator==(const PackedBatch&) const = default;

private:
    std::size_t features_ = 0;
    std::size_t lanes_ = 0;
    std::size_t words_ = 0;
    std::vector<std::uint64_t> data_;
};

// Word-wide lowering of each gate onto NOT/AND/OR/XOR.
std::uint64_t apply_gate_word(GateKind g, std::uint64_t a, std::uint64_t b);

// Evaluates every final-layer gate (kept or not) for all lanes.
PackedBatch eval_packed(const DiscreteCircuit& circ, const PackedBatch& batch);

// One sample at a time; the reference for eval_packed.
std::vector<std::uint8_t> eval_scalar(const DiscreteCircuit& circ,
                                      std::span<const std::uint8_t> input);

// Keeps `keep_per_class` uniformly chosen outputs in every class segment.
// For a fixed seed the kept sets are nested as keep_per_class shrinks.
DiscreteCircuit prune_outputs(const DiscreteCircuit& circ, std::size_t keep_per_class,
                              const GroupSumHead& head, std::uint64_t seed);

struct EliminationResult {
    DiscreteCircuit circuit;
    double pruned_fraction = 0;  // removed gates / gates before elimination
};

// Drops every gate no kept output depends on and compacts indices.
EliminationResult reachability_eliminate(const DiscreteCircuit& circ);

// Class predictions for every lane of an eval_packed result; non-kept outputs
// are ignored. Head n must equal the original output width.
std::vector<std::uint32_t> predict_packed(const DiscreteCircuit& circ, const PackedBatch& outputs,
                                          const HeadConfig& head);

// Text netlist: `g<idx> = OP(src, src)` per gate in layer-major order, sources
// `i<n>` / `g<n>`, then one `output g<n>` line per kept output.
std::string to_netlist(const DiscreteCircuit& circ);
DiscreteCircuit parse_netlist(std::string_view text);
void export_netlist(const DiscreteCircuit& circ, const std::filesystem::path& path);
DiscreteCircuit import_netlist(const std::filesystem::path& path);

}  // namespace dlgn
