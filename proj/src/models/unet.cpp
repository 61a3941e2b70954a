#include "ggsa/unet.hpp"

#include <cmath>
#include <string>

#include "ggsa/ops.hpp"
#include "ggsa/rng.hpp"

namespace ggsa::models {

using namespace ggsa::ad;

namespace {

TensorPtr init_conv(Rng& rng, int co, int ci, int k, double gain = 2.0) {
    const double stddev = std::sqrt(gain / (ci * k * k));
    std::vector<double> v(static_cast<std::size_t>(co) * ci * k * k);
    for (auto& x : v) x = rng.next_gaussian() * stddev;
    return Tensor::make({co, ci, k, k}, std::move(v), true);
}

void add_double_conv(ParamStore& p, Rng& rng, const std::string& prefix, int cin, int cout) {
    p.add(prefix + ".conv1.w", init_conv(rng, cout, cin, 3));
    p.add(prefix + ".conv1.b", Tensor::zeros({cout}, true));
    p.add(prefix + ".conv2.w", init_conv(rng, cout, cout, 3));
    p.add(prefix + ".conv2.b", Tensor::zeros({cout}, true));
}

TensorPtr double_conv(const ParamStore& p, const std::string& prefix, const TensorPtr& x) {
    auto h = relu(add(conv2d(x, p.at(prefix + ".conv1.w"), 1, 1), p.at(prefix + ".conv1.b")));
    return relu(add(conv2d(h, p.at(prefix + ".conv2.w"), 1, 1), p.at(prefix + ".conv2.b")));
}

} // namespace

SegModel SegModel::init(const UnetConfig& cfg, std::uint64_t seed) {
    if (cfg.base_channels < 1 || cfg.depth < 1) {
        fail(ErrorKind::Contract, "unet base_channels and depth must be positive");
    }
    Rng rng(seed);
    SegModel m;
    m.cfg = cfg;
    auto& p = m.params;

    int ch = cfg.base_channels;
    int cin = 1;
    for (int level = 0; level < cfg.depth; ++level) {
        add_double_conv(p, rng, "enc" + std::to_string(level), cin, ch);
        cin = ch;
        ch *= 2;
    }
    add_double_conv(p, rng, "mid", cin, ch);

    for (int level = cfg.depth - 1; level >= 0; --level) {
        const std::string name = "dec" + std::to_string(level);
        const int skip_ch = cfg.base_channels << level; // channels of enc<level>
        p.add(name + ".up.w", init_conv(rng, skip_ch, skip_ch * 2, 3));
        p.add(name + ".up.b", Tensor::zeros({skip_ch}, true));
        add_double_conv(p, rng, name, skip_ch * 2, skip_ch);
    }

    p.add("head.w", init_conv(rng, 1, cfg.base_channels, 1, 1.0));
    p.add("head.b", Tensor::zeros({1}, true));
    return m;
}

SegModel SegModel::clone() const {
    SegModel copy;
    copy.cfg = cfg;
    for (const auto& [name, t] : params.items()) {
        copy.params.add(name, Tensor::make(t->shape, t->values, t->requires_grad));
    }
    return copy;
}

TensorPtr unet_forward(const SegModel& model, const TensorPtr& x) {
    const auto& p = model.params;
    const int divisor = 1 << model.cfg.depth;
    if (x->shape.size() != 4 || x->shape[1] != 1) {
        fail(ErrorKind::Dimension, "unet expects (B,1,H,W), got " + shape_str(x->shape));
    }
    if (x->shape[2] % divisor != 0 || x->shape[3] % divisor != 0) {
        fail(ErrorKind::Dimension, "unet spatial dims must be divisible by " +
                                       std::to_string(divisor) + ", got " +
                                       shape_str(x->shape));
    }

    std::vector<TensorPtr> skips;
    TensorPtr h = x;
    for (int level = 0; level < model.cfg.depth; ++level) {
        h = double_conv(p, "enc" + std::to_string(level), h);
        skips.push_back(h);
        h = max_pool2d(h, 2);
    }
    h = double_conv(p, "mid", h);
    for (int level = model.cfg.depth - 1; level >= 0; --level) {
        const std::string name = "dec" + std::to_string(level);
        auto up = upsample_nearest2d(h, 2);
        auto shrunk = relu(add(conv2d(up, p.at(name + ".up.w"), 1, 1), p.at(name + ".up.b")));
        h = double_conv(p, name, concat_channels(shrunk, skips[static_cast<std::size_t>(level)]));
    }
    return sigmoid(add(conv2d(h, p.at("head.w"), 1, 0), p.at("head.b")));
}

} // namespace ggsa::models
