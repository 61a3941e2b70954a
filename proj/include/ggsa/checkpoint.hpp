#pragma once

#include <string>

#include "ggsa/unet.hpp"
#include "ggsa/vae.hpp"

namespace ggsa::models {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Model checkpoints: magic "GGMD", format version, a typed key-value
// architecture block, the named parameter tensors as 64-bit little-endian
// floats, and a trailing CRC32 of all preceding bytes.
void save_vae(const std::string& path, const VaeModel& model);
VaeModel load_vae(const std::string& path);

void save_segmenter(const std::string& path, const SegModel& model);
SegModel load_segmenter(const std::string& path);

} // namespace ggsa::models
