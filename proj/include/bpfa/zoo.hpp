#pragma once

#include <cstdint>
#include <string_view>

#include "bpfa/network.hpp"

namespace bpfa {

/// The four embedding architectures of the model zoo.
///   A: shallow wide MLP
///   B: deep narrow MLP
///   C: small conv net
///   D: deeper conv net with batchnorm
enum class Architecture { A, B, C, D };

std::string_view to_string(Architecture arch);
Architecture parse_architecture(std::string_view text);

/// He-initialized network for `arch` with the given input shape (CxHxW,
/// H and W divisible by 4 for the conv variants).
SegmentedNetwork build_architecture(Architecture arch, const Shape& input_shape,
                                    std::size_t embedding_dim, std::uint64_t seed);

}  // namespace bpfa
