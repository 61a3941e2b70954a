#pragma once

#include "ggsa/tape.hpp"

namespace ggsa::ad {

// Named wrappers over apply_primitive. `add` accepts equal shapes, a rank-1
// channel bias against NCHW, or a rank-1 row bias against a matrix; the other
// elementwise ops require equal shapes.
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(const TensorPtr& a, double factor);
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
TensorPtr conv2d(const TensorPtr& x, const TensorPtr& w, int stride, int padding);
TensorPtr conv_transpose2d(const TensorPtr& x, const TensorPtr& w, int stride, int padding);
TensorPtr relu(const TensorPtr& x);
TensorPtr sigmoid(const TensorPtr& x);
TensorPtr exp(const TensorPtr& x);
TensorPtr log(const TensorPtr& x);
TensorPtr square(const TensorPtr& x);
TensorPtr sum(const TensorPtr& x);
TensorPtr mean(const TensorPtr& x);
TensorPtr reshape(const TensorPtr& x, Shape target);
TensorPtr concat_channels(const TensorPtr& a, const TensorPtr& b);
TensorPtr max_pool2d(const TensorPtr& x, int kernel);
TensorPtr upsample_nearest2d(const TensorPtr& x, int factor);

} // namespace ggsa::ad
