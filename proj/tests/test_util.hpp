#pragma once

#include <vector>

#include "ggsa/ops.hpp"
#include "ggsa/rng.hpp"
#include "ggsa/tensor.hpp"

namespace ggsa::testutil {

inline ad::TensorPtr random_tensor(Rng& rng, ad::Shape shape, double lo, double hi,
                                   bool requires_grad = false) {
    std::vector<double> v(static_cast<std::size_t>(ad::numel(shape)));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return ad::Tensor::make(std::move(shape), std::move(v), requires_grad);
}

// Values bounded away from zero, random sign; keeps relu/max kinks far from
// the finite-difference step.
inline ad::TensorPtr random_tensor_off_zero(Rng& rng, ad::Shape shape) {
    std::vector<double> v(static_cast<std::size_t>(ad::numel(shape)));
    for (auto& x : v) {
        double mag = rng.uniform(0.2, 1.5);
        x = rng.next_double() < 0.5 ? -mag : mag;
    }
    return ad::Tensor::make(std::move(shape), std::move(v), false);
}

// Weighted reduction to a scalar so output gradients are non-uniform.
inline ad::TensorPtr weighted_sum(const ad::TensorPtr& t, const ad::TensorPtr& weights) {
    return ad::sum(ad::mul(t, weights));
}

} // namespace ggsa::testutil
