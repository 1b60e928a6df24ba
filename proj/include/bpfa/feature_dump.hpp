#pragma once

#include <filesystem>

#include "bpfa/network.hpp"

namespace bpfa {

/// Writes eta * sign(bank[index]) as CSV, one line per (channel, row):
///
///   channel,row,x0,x1,...
///   0,0,-0.1,0,0.1,...
///
/// CxHxW maps produce C*H lines of W values; vector maps produce a single
/// line (channel 0, row 0).
void dump_feature_perturbation(const GradientBank& bank, std::size_t index, double eta,
                               const std::filesystem::path& path);

/// Parses a dump back into a tensor of shape [channels, rows, cols].
Tensor load_feature_perturbation(const std::filesystem::path& path);

}  // namespace bpfa
