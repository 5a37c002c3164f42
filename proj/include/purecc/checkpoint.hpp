#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "purecc/net.hpp"
#include "purecc/tensor.hpp"

namespace purecc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary layout: "PCCK", u32 version, u32 tensor count, then per tensor
// u32 name length, UTF-8 name, u32 rank, u32 dims, f64 values (row-major).
// All integers and floats are little-endian.
std::string encode_tensors(const std::vector<Tensor>& tensors);
std::vector<Tensor> decode_tensors(const std::string& bytes);

// Network parameters plus a "meta" tensor holding
// [concept token id, frozen flag, pooling (0 sum, 1 mean)].
std::vector<Tensor> network_tensors(const VelocityNetwork& net);

void save_checkpoint(const std::filesystem::path& path, const VelocityNetwork& net);
VelocityNetwork load_checkpoint(const std::filesystem::path& path);

}  // namespace purecc
