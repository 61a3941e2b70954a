#include "ggsa/tensor.hpp"

#include <sstream>

namespace ggsa::ad {

std::int64_t numel(const Shape& shape) {
    std::int64_t n = 1;
    for (int e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

TensorPtr Tensor::make(Shape shape, std::vector<double> values, bool requires_grad) {
    for (int e : shape) {
        if (e <= 0) fail(ErrorKind::Dimension, "tensor extent must be positive, got " + shape_str(shape));
    }
    if (numel(shape) != static_cast<std::int64_t>(values.size())) {
        fail(ErrorKind::Dimension, "shape " + shape_str(shape) + " does not match " +
                                       std::to_string(values.size()) + " values");
    }
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->values = std::move(values);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

TensorPtr Tensor::full(Shape shape, double value, bool requires_grad) {
    std::vector<double> v(static_cast<std::size_t>(numel(shape)), value);
    return make(std::move(shape), std::move(v), requires_grad);
}

TensorPtr Tensor::scalar(double value, bool requires_grad) {
    return make({1}, {value}, requires_grad);
}

double Tensor::item() const {
    if (!is_scalar()) {
        fail(ErrorKind::Contract, "item() requires a scalar tensor, shape is " + shape_str(shape));
    }
    return values[0];
}

const std::vector<double>& Tensor::gradient() const {
    if (grad.empty()) {
        fail(ErrorKind::Contract, "tensor has no gradient; run backward first");
    }
    return grad;
}

} // namespace ggsa::ad
