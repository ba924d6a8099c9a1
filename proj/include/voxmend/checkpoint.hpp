#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace voxmend {

// One serialised tensor. Rank-0 entries carry scalar metadata.
struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  bool operator==(const NamedTensor&) const = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Little-endian layout: "GSPR", u32 version, u32 count, then per tensor
// u16 name length, name bytes, u8 rank, u32 dims, f32 data.
std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_checkpoint(std::span<const std::uint8_t> bytes);

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

const NamedTensor* find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name);
// Reads a rank-0 metadata value; throws ValidationError when absent.
float meta_value(const std::vector<NamedTensor>& tensors, const std::string& name);
NamedTensor meta_tensor(const std::string& name, float value);

}  // namespace voxmend
