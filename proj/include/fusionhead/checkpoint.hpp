#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fusionhead/embedding.hpp"

namespace fusionhead {

// MBFM: "MBFM" | u32 version | u32 p | u32 K | W float64 row-major | b float64.
inline constexpr std::uint32_t kMbfmVersion = 1;

struct Checkpoint {
    BranchModel model;
    TrainConfig config;
    std::vector<double> loss_trace;
};

std::string encode_mbfm(const BranchModel& model);
BranchModel decode_mbfm(std::string_view bytes, std::string name);

/// key=value text: name, dim, classes, config echo, loss trace.
std::string format_sidecar(const Checkpoint& ckpt);

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint);

/// Writes the MBFM file and its sidecar, each atomically.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Reads the MBFM file; the sidecar, when present, supplies name, config and
/// loss trace. Without it the name is the file stem.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fusionhead
