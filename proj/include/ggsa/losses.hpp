#pragma once

#include <vector>

#include "ggsa/ops.hpp"

namespace ggsa::models {

inline constexpr double kDiceEps = 1e-6;

// Deterministic latent embedding of one sample: mean and log-variance of the
// encoder's Gaussian posterior.
struct LatentCode {
    std::vector<double> mu;
    std::vector<double> logvar;
};

// Soft Dice loss -(2*sum(y_hat*y)+eps)/(sum(y_hat)+sum(y)+eps), in [-1, 0].
// y must be binary with the same shape as y_hat.
ad::TensorPtr dice_loss(const ad::TensorPtr& y_hat, const ad::TensorPtr& y);

// KL(q || N(0, I)) for a diagonal Gaussian given as (mu, logvar) tensors of
// shape (B, D); returns the scalar mean over the batch.
ad::TensorPtr kl_standard_normal(const ad::TensorPtr& mu, const ad::TensorPtr& logvar);

// Closed-form evaluation for a single code.
double kl_standard_normal(const LatentCode& code);

// Mean squared error over all elements.
ad::TensorPtr mse(const ad::TensorPtr& a, const ad::TensorPtr& b);

// MSE(x_hat, x) + mean-over-batch KL; the training objective of the manifold
// learner, exposed for direct evaluation in tests.
ad::TensorPtr reconstruction_kl_loss(const ad::TensorPtr& x_hat, const ad::TensorPtr& x,
                                     const ad::TensorPtr& mu, const ad::TensorPtr& logvar);

} // namespace ggsa::models
