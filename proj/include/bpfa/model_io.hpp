#pragma once

#include <filesystem>
#include <string>

#include "bpfa/network.hpp"

namespace bpfa {

inline constexpr std::uint32_t kModelFormatVersion = 1;

/// Binary model container:
///   "BPFANET\0" | u32 version | u64 manifest bytes | manifest JSON |
///   u64 value count | float64 values (little-endian) | u64 FNV-1a of values
///
/// The manifest lists every layer with its hyperparameters and the shapes of
/// the tensors stored for it, in blob order. `metadata` is an opaque JSON
/// object string carried alongside (architecture id, training summary).
void save_model(const SegmentedNetwork& net, const std::filesystem::path& path,
                const std::string& metadata = "{}");

SegmentedNetwork load_model(const std::filesystem::path& path, std::string* metadata = nullptr);

}  // namespace bpfa
