#pragma once

#include <cstdint>
#include <vector>

#include "ggsa/losses.hpp"
#include "ggsa/params.hpp"

namespace ggsa::models {

struct VaeConfig {
    int latent_dim = 5;
    int image_hw = 32; // square inputs, divisible by 8 (three stride-2 stages)
};

// Convolutional encoder (3 x stride-2 conv + dense mu/logvar heads) with a
// mirrored transposed-conv decoder. The prior is a fixed standard normal.
struct VaeModel {
    VaeConfig cfg;
    ParamStore params;

    static VaeModel init(const VaeConfig& cfg, std::uint64_t seed);
    VaeModel clone() const;
};

struct VaeForward {
    ad::TensorPtr x_hat;
    ad::TensorPtr mu;     // (B, D)
    ad::TensorPtr logvar; // (B, D)
};

// x: (B,1,H,W); noise: (B,D) standard-normal draws (zero collapses the
// reparameterized sample onto the posterior mean).
VaeForward vae_forward(const VaeModel& model, const ad::TensorPtr& x,
                       const ad::TensorPtr& noise);

// Encoder mean as a (B,D) tensor; the deterministic embedding.
ad::TensorPtr encode_mu(const VaeModel& model, const ad::TensorPtr& x);

// Deterministic latent vector of a single (1,1,H,W) image.
std::vector<double> encode_latent(const VaeModel& model, const ad::TensorPtr& x);

// Decoder alone, z: (B,D).
ad::TensorPtr decode(const VaeModel& model, const ad::TensorPtr& z);

// MSE(x_hat, x) + KL, scalar.
ad::TensorPtr vae_loss(const VaeModel& model, const ad::TensorPtr& x,
                       const ad::TensorPtr& noise);

} // namespace ggsa::models
