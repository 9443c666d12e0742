#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "dlgn/heads.hpp"
#include "dlgn/network.hpp"

namespace dlgn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    LogicNetwork net;
    std::optional<HeadConfig> head;
};

// Layout (little-endian): "DLGNCKPT", u32 version, u64 seed, u32 input_dim,
// u32 layers, u32 widths[], wiring (u32 in_a[], u32 in_b[] per layer),
// f64 logits per layer, optional head block, u64 FNV-1a of all prior bytes.
// See docs/formats.md.
std::vector<std::uint8_t> save_checkpoint(const LogicNetwork& net,
                                          const HeadConfig* head = nullptr);
// Throws FormatError on bad magic, unknown version, truncation or checksum mismatch.
Checkpoint load_checkpoint(std::span<const std::uint8_t> bytes);

void write_checkpoint(const std::filesystem::path& path, const LogicNetwork& net,
                      const HeadConfig* head = nullptr);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// FNV-1a over the network part of the checkpoint encoding.
std::uint64_t fingerprint(const LogicNetwork& net);

}  // namespace dlgn
