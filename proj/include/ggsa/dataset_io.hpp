#pragma once

#include <string>

#include "ggsa/dataset.hpp"

namespace ggsa::data {

inline constexpr std::uint32_t kSliceFormatVersion = 1;

// Writes `manifest.json` plus one `<patient>_<slice>.ggs` file per slice:
// magic "GGAS", u32 version, u32 H, u32 W, H*W float32 image, u8 mask flag,
// optional H*W mask bytes, u32 CRC32 of all preceding bytes.
void write_dataset(const Dataset& dataset, const std::string& dir);

// Inverse of write_dataset; corrupt or truncated files raise Format errors.
Dataset read_dataset(const std::string& dir);

} // namespace ggsa::data
