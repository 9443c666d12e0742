#include "dlgn/gates.hpp"

#include <stdexcept>
#include <string>

namespace dlgn {

namespace {

constexpr std::array<std::string_view, kNumGates> kNames = {
    "FALSE", "AND", "ANIMP", "A",    "BNIMP", "B",    "XOR",  "OR",
    "NOR",   "XNOR", "NOTB", "BIMP", "NOTA",  "AIMP", "NAND", "TRUE",
};

}  // namespace

GateKind gate_from_id(int id) {
    if (id < 0 || id >= kNumGates) {
        throw std::out_of_range("gate id out of range: " + std::to_string(id));
    }
    return static_cast<GateKind>(id);
}

double real_eval(GateKind g, double a, double b) {
    switch (g) {
        case GateKind::False: return 0.0;
        case GateKind::And: return a * b;
        case GateKind::AAndNotB: return a - a * b;
        case GateKind::A: return a;
        case GateKind::NotAAndB: return b - a * b;
        case GateKind::B: return b;
        case GateKind::Xor: return a + b - 2.0 * a * b;
        case GateKind::Or: return a + b - a * b;
        case GateKind::Nor: return 1.0 - (a + b - a * b);
        case GateKind::Xnor: return 1.0 - (a + b - 2.0 * a * b);
        case GateKind::NotB: return 1.0 - b;
        case GateKind::BImpliesA: return 1.0 - b + a * b;
        case GateKind::NotA: return 1.0 - a;
        case GateKind::AImpliesB: return 1.0 - a + a * b;
        case GateKind::Nand: return 1.0 - a * b;
        case GateKind::True: return 1.0;
    }
    return 0.0;
}

std::pair<double, double> real_grad(GateKind g, double a, double b) {
    switch (g) {
        case GateKind::False: return {0.0, 0.0};
        case GateKind::And: return {b, a};
        case GateKind::AAndNotB: return {1.0 - b, -a};
        case GateKind::A: return {1.0, 0.0};
        case GateKind::NotAAndB: return {-b, 1.0 - a};
        case GateKind::B: return {0.0, 1.0};
        case GateKind::Xor: return {1.0 - 2.0 * b, 1.0 - 2.0 * a};
        case GateKind::Or: return {1.0 - b, 1.0 - a};
        case GateKind::Nor: return {b - 1.0, a - 1.0};
        case GateKind::Xnor: return {2.0 * b - 1.0, 2.0 * a - 1.0};
        case GateKind::NotB: return {0.0, -1.0};
        case GateKind::BImpliesA: return {b, a - 1.0};
        case GateKind::NotA: return {-1.0, 0.0};
        case GateKind::AImpliesB: return {b - 1.0, a};
        case GateKind::Nand: return {-b, -a};
        case GateKind::True: return {0.0, 0.0};
    }
    return {0.0, 0.0};
}

std::array<double, 4> multilinear_coefficients(GateKind g) {
    // Read off the corner values: f = f00 + (f10-f00) a + (f01-f00) b
    //                                 + (f11-f10-f01+f00) ab.
    const double f00 = bool_eval(g, false, false);
    const double f01 = bool_eval(g, false, true);
    const double f10 = bool_eval(g, true, false);
    const double f11 = bool_eval(g, true, true);
    return {f00, f10 - f00, f01 - f00, f11 - f10 - f01 + f00};
}

std::string_view gate_name(GateKind g) { return kNames[gate_id(g)]; }

std::optional<GateKind> gate_from_name(std::string_view name) {
    for (int i = 0; i < kNumGates; ++i) {
        if (kNames[i] == name) return static_cast<GateKind>(i);
    }
    return std::nullopt;
}

}  // namespace dlgn
