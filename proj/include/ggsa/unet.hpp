#pragma once

#include <cstdint>

#include "ggsa/params.hpp"

namespace ggsa::models {

struct UnetConfig {
    int base_channels = 8;
    int depth = 2; // number of pooling stages
};

// Compact UNet: per-level double conv + 2x2 max-pool down, nearest-upsample +
// skip concatenation up, 1-channel sigmoid head.
struct SegModel {
    UnetConfig cfg;
    ParamStore params;

    static SegModel init(const UnetConfig& cfg, std::uint64_t seed);
    SegModel clone() const;
};

// x: (B,1,H,W) with H and W divisible by 2^depth; output has the same shape
// with every value in (0,1).
ad::TensorPtr unet_forward(const SegModel& model, const ad::TensorPtr& x);

} // namespace ggsa::models
