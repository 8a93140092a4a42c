#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "gnio/autodiff/tensor.hpp"

namespace gnio::ad {

/// Named tensors in insertion-independent (sorted) order.
using NamedTensors = std::map<std::string, Tensor>;

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout, all integers little-endian:
///   "GNIO" | version u32 | count u32 |
///   count x { name_len u64 | name (UTF-8) | rank u64 | dims u64[rank] | f64[prod(dims)] }
/// Entries are written in name order, so identical contents give identical bytes.
void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);

/// Throws IoError on missing/truncated files or bad magic/version.
NamedTensors load_checkpoint(const std::filesystem::path& path);

}  // namespace gnio::ad
