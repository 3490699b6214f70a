#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "abip/network.hpp"

namespace abip {

// Checkpoint format (magic "ABIP"): format version u32, product name
// length u32 + bytes, N u32, layer count u32, topology widths u32[], then
// per layer the row-major float64 weights followed by the biases. All
// integers and floats little-endian. Round trips are bit-exact.

void save_checkpoint(const Network& net, const std::filesystem::path& path);

/// Loads a checkpoint. The product is resolved by the stored name and N
/// (builtin kinds or a registered custom). Activations are not part of the
/// format; callers supply them (the CLI takes them from the run manifest).
Network load_checkpoint(const std::filesystem::path& path,
                        Activation hidden = Activation::sigmoid(),
                        Activation output = Activation::sigmoid());

// Tensor format (magic "ABTN"): rank u32, dims u32[rank], row-major
// float64 payload, little-endian.

void save_abtn(const std::filesystem::path& path, const std::vector<std::uint32_t>& dims,
               std::span<const double> data);

struct AbtnTensor {
  std::vector<std::uint32_t> dims;
  std::vector<double> data;  // row-major
};

AbtnTensor load_abtn(const std::filesystem::path& path);

}  // namespace abip
