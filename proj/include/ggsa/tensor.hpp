#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ggsa/error.hpp"

namespace ggsa::ad {

// Extents of a dense row-major tensor. All extents are positive.
using Shape = std::vector<int>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense 64-bit float tensor. Values are immutable after creation; the grad
// buffer is filled in by backward().
class Tensor {
public:
    Shape shape;
    std::vector<double> values;
    bool requires_grad = false;
    std::vector<double> grad; // empty until populated, then values.size()

    static TensorPtr make(Shape shape, std::vector<double> values,
                          bool requires_grad = false);
    static TensorPtr zeros(Shape shape, bool requires_grad = false);
    static TensorPtr full(Shape shape, double value, bool requires_grad = false);
    static TensorPtr scalar(double value, bool requires_grad = false);

    std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }
    bool is_scalar() const { return values.size() == 1; }

    // Value of a scalar tensor.
    double item() const;

    // Populated gradient; throws if backward has not filled it.
    const std::vector<double>& gradient() const;

    bool has_grad() const { return !grad.empty(); }
};

} // namespace ggsa::ad
