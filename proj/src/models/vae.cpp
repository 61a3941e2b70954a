#include "ggsa/vae.hpp"

#include <cmath>

#include "ggsa/ops.hpp"
#include "ggsa/rng.hpp"

namespace ggsa::models {

using namespace ggsa::ad;

namespace {

TensorPtr init_tensor(Rng& rng, Shape shape, double stddev) {
    std::vector<double> v(static_cast<std::size_t>(numel(shape)));
    for (auto& x : v) x = rng.next_gaussian() * stddev;
    return Tensor::make(std::move(shape), std::move(v), true);
}

double he_std(int fan_in) { return std::sqrt(2.0 / fan_in); }
double xavier_std(int fan_in) { return std::sqrt(1.0 / fan_in); }

void check_input(const VaeModel& model, const TensorPtr& x) {
    const int hw = model.cfg.image_hw;
    if (x->shape.size() != 4 || x->shape[1] != 1 || x->shape[2] != hw || x->shape[3] != hw) {
        fail(ErrorKind::Dimension, "expected (B,1," + std::to_string(hw) + "," +
                                       std::to_string(hw) + ") input, got " +
                                       shape_str(x->shape));
    }
}

} // namespace

VaeModel VaeModel::init(const VaeConfig& cfg, std::uint64_t seed) {
    if (cfg.image_hw % 8 != 0 || cfg.image_hw < 8) {
        fail(ErrorKind::Dimension, "VAE image size must be a positive multiple of 8");
    }
    if (cfg.latent_dim < 1) fail(ErrorKind::Contract, "latent_dim must be positive");

    Rng rng(seed);
    VaeModel m;
    m.cfg = cfg;
    auto& p = m.params;
    const int s = cfg.image_hw / 8;        // spatial extent after the conv stack
    const int flat = 32 * s * s;
    const int d = cfg.latent_dim;

    p.add("enc.conv1.w", init_tensor(rng, {8, 1, 3, 3}, he_std(1 * 9)));
    p.add("enc.conv1.b", Tensor::zeros({8}, true));
    p.add("enc.conv2.w", init_tensor(rng, {16, 8, 3, 3}, he_std(8 * 9)));
    p.add("enc.conv2.b", Tensor::zeros({16}, true));
    p.add("enc.conv3.w", init_tensor(rng, {32, 16, 3, 3}, he_std(16 * 9)));
    p.add("enc.conv3.b", Tensor::zeros({32}, true));
    p.add("enc.mu.w", init_tensor(rng, {flat, d}, xavier_std(flat)));
    p.add("enc.mu.b", Tensor::zeros({d}, true));
    p.add("enc.logvar.w", init_tensor(rng, {flat, d}, xavier_std(flat)));
    p.add("enc.logvar.b", Tensor::zeros({d}, true));
    p.add("dec.fc.w", init_tensor(rng, {d, flat}, xavier_std(d)));
    p.add("dec.fc.b", Tensor::zeros({flat}, true));
    p.add("dec.deconv1.w", init_tensor(rng, {32, 16, 4, 4}, he_std(32 * 16)));
    p.add("dec.deconv1.b", Tensor::zeros({16}, true));
    p.add("dec.deconv2.w", init_tensor(rng, {16, 8, 4, 4}, he_std(16 * 16)));
    p.add("dec.deconv2.b", Tensor::zeros({8}, true));
    p.add("dec.deconv3.w", init_tensor(rng, {8, 1, 4, 4}, xavier_std(8 * 16)));
    p.add("dec.deconv3.b", Tensor::zeros({1}, true));
    return m;
}

VaeModel VaeModel::clone() const {
    VaeModel copy;
    copy.cfg = cfg;
    for (const auto& [name, t] : params.items()) {
        copy.params.add(name, Tensor::make(t->shape, t->values, t->requires_grad));
    }
    return copy;
}

namespace {

// Shared conv trunk up to the flattened feature vector.
TensorPtr encoder_features(const VaeModel& m, const TensorPtr& x) {
    const auto& p = m.params;
    auto h1 = relu(add(conv2d(x, p.at("enc.conv1.w"), 2, 1), p.at("enc.conv1.b")));
    auto h2 = relu(add(conv2d(h1, p.at("enc.conv2.w"), 2, 1), p.at("enc.conv2.b")));
    auto h3 = relu(add(conv2d(h2, p.at("enc.conv3.w"), 2, 1), p.at("enc.conv3.b")));
    const int s = m.cfg.image_hw / 8;
    return reshape(h3, {x->shape[0], 32 * s * s});
}

} // namespace

TensorPtr encode_mu(const VaeModel& model, const TensorPtr& x) {
    check_input(model, x);
    auto feat = encoder_features(model, x);
    return add(matmul(feat, model.params.at("enc.mu.w")), model.params.at("enc.mu.b"));
}

std::vector<double> encode_latent(const VaeModel& model, const TensorPtr& x) {
    if (x->shape.size() != 4 || x->shape[0] != 1) {
        fail(ErrorKind::Dimension, "encode_latent takes a single (1,1,H,W) image");
    }
    return encode_mu(model, x)->values;
}

TensorPtr decode(const VaeModel& model, const TensorPtr& z) {
    const auto& p = model.params;
    if (z->shape.size() != 2 || z->shape[1] != model.cfg.latent_dim) {
        fail(ErrorKind::Dimension, "decode expects (B," +
                                       std::to_string(model.cfg.latent_dim) + "), got " +
                                       shape_str(z->shape));
    }
    const int s = model.cfg.image_hw / 8;
    auto h = relu(add(matmul(z, p.at("dec.fc.w")), p.at("dec.fc.b")));
    auto grid = reshape(h, {z->shape[0], 32, s, s});
    auto d1 = relu(add(conv_transpose2d(grid, p.at("dec.deconv1.w"), 2, 1),
                       p.at("dec.deconv1.b")));
    auto d2 = relu(add(conv_transpose2d(d1, p.at("dec.deconv2.w"), 2, 1),
                       p.at("dec.deconv2.b")));
    return add(conv_transpose2d(d2, p.at("dec.deconv3.w"), 2, 1), p.at("dec.deconv3.b"));
}

VaeForward vae_forward(const VaeModel& model, const TensorPtr& x, const TensorPtr& noise) {
    check_input(model, x);
    auto feat = encoder_features(model, x);
    auto mu = add(matmul(feat, model.params.at("enc.mu.w")), model.params.at("enc.mu.b"));
    auto logvar =
        add(matmul(feat, model.params.at("enc.logvar.w")), model.params.at("enc.logvar.b"));
    if (noise->shape != mu->shape) {
        fail(ErrorKind::Dimension, "noise shape " + shape_str(noise->shape) +
                                       " must match code shape " + shape_str(mu->shape));
    }
    // z = mu + exp(logvar/2) * noise
    auto sigma = ad::exp(scale(logvar, 0.5));
    auto z = add(mu, mul(sigma, noise));
    return {decode(model, z), mu, logvar};
}

TensorPtr vae_loss(const VaeModel& model, const TensorPtr& x, const TensorPtr& noise) {
    auto fwd = vae_forward(model, x, noise);
    return reconstruction_kl_loss(fwd.x_hat, x, fwd.mu, fwd.logvar);
}

} // namespace ggsa::models
