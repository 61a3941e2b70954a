#include "ggsa/losses.hpp"

#include <cmath>

namespace ggsa::models {

using namespace ggsa::ad;

TensorPtr dice_loss(const TensorPtr& y_hat, const TensorPtr& y) {
    if (y_hat->shape != y->shape) {
        fail(ErrorKind::Dimension, "dice_loss shapes differ: " + shape_str(y_hat->shape) +
                                       " vs " + shape_str(y->shape));
    }
    for (double v : y->values) {
        if (v != 0.0 && v != 1.0) {
            fail(ErrorKind::Contract, "dice_loss ground truth must be binary");
        }
    }
    auto eps = Tensor::scalar(kDiceEps);
    auto num = add(scale(sum(mul(y_hat, y)), 2.0), eps);
    auto den = add(add(sum(y_hat), sum(y)), eps);
    // num/den through exp(log(num) - log(den)); both sides are positive.
    return scale(ad::exp(sub(ad::log(num), ad::log(den))), -1.0);
}

TensorPtr kl_standard_normal(const TensorPtr& mu, const TensorPtr& logvar) {
    if (mu->shape != logvar->shape || mu->shape.size() != 2) {
        fail(ErrorKind::Dimension, "kl needs matching (B,D) codes, got " +
                                       shape_str(mu->shape) + " and " +
                                       shape_str(logvar->shape));
    }
    for (double v : mu->values)
        if (!std::isfinite(v)) fail(ErrorKind::Numeric, "non-finite mu");
    for (double v : logvar->values)
        if (!std::isfinite(v)) fail(ErrorKind::Numeric, "non-finite logvar");

    const int batch = mu->shape[0];
    auto per_element = sub(add(square(mu), ad::exp(logvar)),
                           add(Tensor::full(logvar->shape, 1.0), logvar));
    return scale(sum(per_element), 0.5 / static_cast<double>(batch));
}

double kl_standard_normal(const LatentCode& code) {
    if (code.mu.size() != code.logvar.size()) {
        fail(ErrorKind::Dimension, "latent code mu/logvar lengths differ");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < code.mu.size(); ++i) {
        const double m = code.mu[i];
        const double lv = code.logvar[i];
        if (!std::isfinite(m) || !std::isfinite(lv)) {
            fail(ErrorKind::Numeric, "non-finite latent code");
        }
        acc += m * m + std::exp(lv) - 1.0 - lv;
    }
    return 0.5 * acc;
}

TensorPtr mse(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape) {
        fail(ErrorKind::Dimension,
             "mse shapes differ: " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    }
    return mean(square(sub(a, b)));
}

TensorPtr reconstruction_kl_loss(const TensorPtr& x_hat, const TensorPtr& x,
                                 const TensorPtr& mu, const TensorPtr& logvar) {
    return add(mse(x_hat, x), kl_standard_normal(mu, logvar));
}

} // namespace ggsa::models
