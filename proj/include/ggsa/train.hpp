#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ggsa/unet.hpp"
#include "ggsa/vae.hpp"

namespace ggsa::models {

struct TrainHistory {
    std::vector<double> epoch_loss; // mean training loss per epoch
};

struct AnnotatedPair {
    ad::TensorPtr image; // (H,W)
    ad::TensorPtr mask;  // (H,W), binary
};

// Stacks rank-2 (H,W) images into a (B,1,H,W) batch tensor.
ad::TensorPtr stack_images(const std::vector<ad::TensorPtr>& images,
                           const std::vector<std::size_t>& indices);

// Mini-batch Adam training of the manifold learner. Batch order and noise
// draws are a pure function of the seed; epochs == 0 leaves the model
// untouched and returns an empty history.
TrainHistory train_vae(VaeModel& model, const std::vector<ad::TensorPtr>& images,
                       int epochs, double lr, std::uint64_t seed, int batch_size = 16);

// Mini-batch Adam training of the segmenter with soft Dice loss (pooled over
// the batch). Deterministic given the seed.
TrainHistory train_segmenter(SegModel& model, const std::vector<AnnotatedPair>& pairs,
                             int epochs, double lr, std::uint64_t seed,
                             int batch_size = 16);

} // namespace ggsa::models
