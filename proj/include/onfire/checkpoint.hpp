#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "onfire/tensor.hpp"

namespace onfire {

class Network;

using NamedTensor = std::pair<std::string, Tensor>;

// Named tensors of a network plus the architecture name and training
// metadata. Binary layout (little-endian):
//   "ONFIRE01"
//   u32 name length, architecture name bytes
//   u32 tensor count
//   per tensor: u32 name length, name bytes, u32 rank, rank x u32 extents,
//               raw float32 values
// Metadata travels as two reserved tensors, "meta/epoch" (one float) and
// "meta/config_hash" (the hash's low and high 32-bit words stored as raw
// float bit patterns), written after the model tensors.
struct Checkpoint {
  std::string architecture;
  std::vector<NamedTensor> tensors;
  int epoch = 0;
  std::uint64_t config_hash = 0;

  const Tensor* find(std::string_view name) const;
};

std::string encode_checkpoint(const Checkpoint& checkpoint);
// Throws FormatError on a bad magic, truncation or trailing bytes.
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Every parameter and running statistic of the network, in graph order.
Checkpoint capture(const Network& network, int epoch = 0, std::uint64_t config_hash = 0);
// Overwrites the network's tensors; names and shapes must match exactly.
void restore(Network& network, const Checkpoint& checkpoint);

}  // namespace onfire
