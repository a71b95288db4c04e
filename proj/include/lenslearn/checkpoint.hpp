#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lenslearn/nn.hpp"

namespace lenslearn {

// "LLTN" checkpoint container. Layout, all integers u32 little-endian:
//   magic "LLTN" | version
//   repeated per tensor, in network declaration order:
//     name length | name bytes | rank | extents[rank] | f32 values
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Tensor value;
};

std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> decode_checkpoint(const std::vector<std::uint8_t>& bytes,
                                               const std::string& source = "checkpoint");

void save_checkpoint(const std::filesystem::path& path, nn::Module<float>& net);

// Entries must match the network's names and shapes one-for-one.
void load_checkpoint(const std::filesystem::path& path, nn::Module<float>& net);

}  // namespace lenslearn
