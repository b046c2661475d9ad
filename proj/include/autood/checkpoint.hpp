#pragma once

#include <string>
#include <utility>
#include <vector>

#include "autood/tensor.hpp"

namespace autood {

// Flat binary tensor container.
//
// Layout: magic "AODT", version u32, then per entry
//   name_len u32, name bytes, rank u32, dims u32..., values f64 (little endian)
// repeated until end of file. Entry order is preserved.
using CheckpointEntries = std::vector<std::pair<std::string, Tensor>>;

void save_checkpoint(const std::string& path, const CheckpointEntries& entries);
CheckpointEntries load_checkpoint(const std::string& path);

constexpr uint32_t kCheckpointVersion = 1;

}  // namespace autood
