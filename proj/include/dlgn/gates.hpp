#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <utility>

namespace dlgn {

// The 16 two-input Boolean operators. Numeric values are the canonical gate
// ids and are written verbatim into checkpoints and netlists.
enum class GateKind : std::uint8_t {
    False = 0,
    And = 1,
    AAndNotB = 2,  // not(a => b)
    A = 3,
    NotAAndB = 4,  // not(a <= b)
    B = 5,
    Xor = 6,
    Or = 7,
    Nor = 8,
    Xnor = 9,
    NotB = 10,
    BImpliesA = 11,  // a <= b
    NotA = 12,
    AImpliesB = 13,  // a => b
    Nand = 14,
    True = 15,
};

inline constexpr int kNumGates = 16;

constexpr int gate_id(GateKind g) { return static_cast<int>(g); }

// Throws std::out_of_range for ids outside [0, 15].
GateKind gate_from_id(int id);

// Truth table packed into 4 bits: bit (2*a + b) holds f(a, b).
constexpr std::uint8_t truth_table(GateKind g) {
    // Gate ids are chosen so that id itself is the table read as
    // (f00 f01 f10 f11) from MSB to LSB; reorder to bit index 2a+b.
    const int id = gate_id(g);
    const int f00 = (id >> 3) & 1;
    const int f01 = (id >> 2) & 1;
    const int f10 = (id >> 1) & 1;
    const int f11 = id & 1;
    return static_cast<std::uint8_t>(f00 | (f01 << 1) | (f10 << 2) | (f11 << 3));
}

constexpr bool bool_eval(GateKind g, bool a, bool b) {
    return (truth_table(g) >> ((a ? 2 : 0) + (b ? 1 : 0))) & 1;
}

double real_eval(GateKind g, double a, double b);

// Partial derivatives (d/da, d/db) of real_eval.
std::pair<double, double> real_grad(GateKind g, double a, double b);

// Coefficients (c0, ca, cb, cab) with real_eval(g, a, b) == c0 + ca*a + cb*b + cab*a*b.
// Every gate polynomial is multilinear, so mixtures of gates collapse to the
// same four-term form.
std::array<double, 4> multilinear_coefficients(GateKind g);

// Canonical netlist opcode (FALSE, AND, ANIMP, ...).
std::string_view gate_name(GateKind g);
std::optional<GateKind> gate_from_name(std::string_view name);

}  // namespace dlgn
