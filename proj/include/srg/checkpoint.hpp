#pragma once

// SRGW parameter checkpoints:
//   "SRGW" | u32 version | u32 tensor count |
//   per tensor: u16 name length | UTF-8 name | u8 rank | u32 dims[rank] | f32 data (LE)

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "srg/tensor.hpp"

namespace srg {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Enumerates a model's parameters as (name, tensor) in a fixed order.
using ParamVisitor = std::function<void(const std::string& name, Tensor& tensor)>;

std::string encode_checkpoint(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_checkpoint(std::string bytes, const std::string& source = "checkpoint");

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint values into the tensors a visitor enumerates. Names,
/// order and shapes must match exactly.
void assign_checkpoint(const std::vector<NamedTensor>& stored,
                       const std::function<void(const ParamVisitor&)>& visit);

/// Snapshot of the tensors a visitor enumerates.
std::vector<NamedTensor> collect_named(const std::function<void(const ParamVisitor&)>& visit);

}  // namespace srg
