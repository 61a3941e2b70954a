#include "ggsa/train.hpp"

#include <numeric>

#include "ggsa/adam.hpp"
#include "ggsa/losses.hpp"
#include "ggsa/ops.hpp"
#include "ggsa/rng.hpp"
#include "ggsa/tape.hpp"

namespace ggsa::models {

using namespace ggsa::ad;

namespace {

void check_schedule(int epochs, double lr, int batch_size) {
    if (epochs < 0) fail(ErrorKind::Contract, "epochs must be >= 0");
    if (!(lr > 0.0)) fail(ErrorKind::Contract, "learning rate must be positive");
    if (batch_size < 1) fail(ErrorKind::Contract, "batch size must be >= 1");
}

} // namespace

TensorPtr stack_images(const std::vector<TensorPtr>& images,
                       const std::vector<std::size_t>& indices) {
    if (indices.empty()) fail(ErrorKind::EmptyInput, "cannot stack an empty batch");
    const auto& first = images.at(indices[0]);
    if (first->shape.size() != 2) {
        fail(ErrorKind::Dimension, "stack_images expects (H,W) images");
    }
    const int h = first->shape[0], w = first->shape[1];
    std::vector<double> v;
    v.reserve(indices.size() * first->values.size());
    for (std::size_t idx : indices) {
        const auto& img = images.at(idx);
        if (img->shape != first->shape) {
            fail(ErrorKind::Dimension, "stacked images must share a shape");
        }
        v.insert(v.end(), img->values.begin(), img->values.end());
    }
    return Tensor::make({static_cast<int>(indices.size()), 1, h, w}, std::move(v));
}

TrainHistory train_vae(VaeModel& model, const std::vector<TensorPtr>& images,
                       int epochs, double lr, std::uint64_t seed, int batch_size) {
    if (images.empty()) fail(ErrorKind::EmptyInput, "train_vae needs at least one image");
    check_schedule(epochs, lr, batch_size);

    TrainHistory history;
    if (epochs == 0) return history;

    Rng rng(seed);
    AdamConfig cfg;
    cfg.lr = lr;
    AdamState state(cfg, model.params);
    const int d = model.cfg.latent_dim;

    std::vector<std::size_t> order(images.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t end = std::min(order.size(), start + batch_size);
            std::vector<std::size_t> batch(order.begin() + start, order.begin() + end);
            auto x = stack_images(images, batch);
            auto noise = Tensor::make({static_cast<int>(batch.size()), d},
                                      rng.gaussians(batch.size() * d));
            Tape tape;
            TensorPtr loss;
            {
                TapeScope scope(tape);
                loss = vae_loss(model, x, noise);
            }
            backward(tape, loss);
            loss_sum += loss->item() * static_cast<double>(batch.size());
            adam_step_from_grads(state, model.params);
        }
        history.epoch_loss.push_back(loss_sum / static_cast<double>(images.size()));
    }
    return history;
}

TrainHistory train_segmenter(SegModel& model, const std::vector<AnnotatedPair>& pairs,
                             int epochs, double lr, std::uint64_t seed, int batch_size) {
    if (pairs.empty()) fail(ErrorKind::EmptyInput, "train_segmenter needs annotated pairs");
    check_schedule(epochs, lr, batch_size);

    TrainHistory history;
    if (epochs == 0) return history;

    Rng rng(seed);
    AdamConfig cfg;
    cfg.lr = lr;
    AdamState state(cfg, model.params);

    std::vector<TensorPtr> images, masks;
    images.reserve(pairs.size());
    masks.reserve(pairs.size());
    for (const auto& p : pairs) {
        images.push_back(p.image);
        masks.push_back(p.mask);
    }

    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t end = std::min(order.size(), start + batch_size);
            std::vector<std::size_t> batch(order.begin() + start, order.begin() + end);
            auto x = stack_images(images, batch);
            auto y = stack_images(masks, batch);
            Tape tape;
            TensorPtr loss;
            {
                TapeScope scope(tape);
                loss = dice_loss(unet_forward(model, x), y);
            }
            backward(tape, loss);
            loss_sum += loss->item() * static_cast<double>(batch.size());
            adam_step_from_grads(state, model.params);
        }
        history.epoch_loss.push_back(loss_sum / static_cast<double>(pairs.size()));
    }
    return history;
}

} // namespace ggsa::models
