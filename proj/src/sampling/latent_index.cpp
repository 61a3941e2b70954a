#include <algorithm>
#include <cmath>

#include "ggsa/ops.hpp"
#include "ggsa/sampling.hpp"

namespace ggsa::sampling {

using namespace ggsa::ad;

const char* strategy_name(Strategy s) { return s == Strategy::Image ? "image" : "patient"; }
const char* method_name(Method m) {
    switch (m) {
        case Method::Random: return "random";
        case Method::Gradient: return "gradient";
        case Method::Oracle: return "oracle";
    }
    return "?";
}

Strategy parse_strategy(const std::string& name) {
    if (name == "image") return Strategy::Image;
    if (name == "patient") return Strategy::Patient;
    fail(ErrorKind::Config, "unknown strategy '" + name + "' (image|patient)");
}

Method parse_method(const std::string& name) {
    if (name == "random") return Method::Random;
    if (name == "gradient") return Method::Gradient;
    if (name == "oracle") return Method::Oracle;
    fail(ErrorKind::Config, "unknown method '" + name + "' (random|gradient|oracle)");
}

TensorPtr sample_image_tensor(const data::Dataset& ds, const std::string& sample_id) {
    const auto& s = ds.sample(sample_id);
    std::vector<double> v(s.image.begin(), s.image.end());
    return Tensor::make({1, 1, ds.manifest.height, ds.manifest.width}, std::move(v));
}

TensorPtr sample_mask_tensor(const data::Dataset& ds, const std::string& sample_id) {
    const auto& s = ds.sample(sample_id);
    if (!s.has_mask()) fail(ErrorKind::Contract, "sample " + sample_id + " has no mask");
    std::vector<double> v(s.mask.begin(), s.mask.end());
    return Tensor::make({1, 1, ds.manifest.height, ds.manifest.width}, std::move(v));
}

namespace {

// Encode a batch of stored slices with the deterministic (mean) embedding.
std::vector<std::vector<double>> encode_slices(const models::VaeModel& vae,
                                               const data::Dataset& ds,
                                               const std::vector<std::string>& slice_ids,
                                               int batch_size = 16) {
    std::vector<std::vector<double>> out(slice_ids.size());
    const int h = ds.manifest.height, w = ds.manifest.width;
    for (std::size_t start = 0; start < slice_ids.size();
         start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end =
            std::min(slice_ids.size(), start + static_cast<std::size_t>(batch_size));
        std::vector<double> batch;
        batch.reserve((end - start) * static_cast<std::size_t>(h) * w);
        for (std::size_t i = start; i < end; ++i) {
            const auto& img = ds.sample(slice_ids[i]).image;
            batch.insert(batch.end(), img.begin(), img.end());
        }
        auto x = Tensor::make({static_cast<int>(end - start), 1, h, w}, std::move(batch));
        auto mu = encode_mu(vae, x);
        const int d = mu->shape[1];
        for (std::size_t i = start; i < end; ++i) {
            const auto* row = mu->values.data() + (i - start) * static_cast<std::size_t>(d);
            out[i].assign(row, row + d);
        }
    }
    return out;
}

std::vector<double> mean_of(const std::vector<std::vector<double>>& vs) {
    std::vector<double> m(vs.at(0).size(), 0.0);
    for (const auto& v : vs)
        for (std::size_t i = 0; i < m.size(); ++i) m[i] += v[i];
    for (auto& x : m) x /= static_cast<double>(vs.size());
    return m;
}

} // namespace

LatentIndex build_latent_index(const models::VaeModel& vae, const data::Dataset& ds,
                               const std::vector<std::string>& pool_unit_ids,
                               Strategy strategy) {
    if (pool_unit_ids.empty()) {
        fail(ErrorKind::EmptyInput, "cannot build a latent index over an empty pool");
    }
    std::vector<std::string> ids = pool_unit_ids;
    std::sort(ids.begin(), ids.end());

    LatentIndex index;
    index.dim = vae.cfg.latent_dim;

    if (strategy == Strategy::Image) {
        auto codes = encode_slices(vae, ds, ids);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            index.entries.push_back({ids[i], std::move(codes[i])});
        }
    } else {
        for (const auto& pid : ids) {
            const auto& patient = ds.patient(pid);
            std::vector<std::string> slice_ids;
            for (std::size_t idx : patient.sample_indices) {
                slice_ids.push_back(ds.samples[idx].sample_id);
            }
            index.entries.push_back({pid, mean_of(encode_slices(vae, ds, slice_ids))});
        }
    }
    return index;
}

std::vector<std::vector<double>> predict_probabilities(
    const models::SegModel& seg, const data::Dataset& ds,
    const std::vector<std::string>& sample_ids, int batch_size) {
    std::vector<std::vector<double>> out(sample_ids.size());
    const int h = ds.manifest.height, w = ds.manifest.width;
    for (std::size_t start = 0; start < sample_ids.size();
         start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end =
            std::min(sample_ids.size(), start + static_cast<std::size_t>(batch_size));
        std::vector<double> batch;
        batch.reserve((end - start) * static_cast<std::size_t>(h) * w);
        for (std::size_t i = start; i < end; ++i) {
            const auto& img = ds.sample(sample_ids[i]).image;
            batch.insert(batch.end(), img.begin(), img.end());
        }
        auto x = Tensor::make({static_cast<int>(end - start), 1, h, w}, std::move(batch));
        auto probs = unet_forward(seg, x);
        const std::size_t plane = static_cast<std::size_t>(h) * w;
        for (std::size_t i = start; i < end; ++i) {
            const auto* p = probs->values.data() + (i - start) * plane;
            out[i].assign(p, p + plane);
        }
    }
    return out;
}

double dice_score(const std::vector<double>& probs, const std::vector<std::uint8_t>& mask,
                  double threshold) {
    if (probs.size() != mask.size()) {
        fail(ErrorKind::Dimension, "dice_score: prediction/mask size mismatch");
    }
    if (!(threshold > 0.0 && threshold < 1.0)) {
        fail(ErrorKind::Contract, "threshold must lie in (0,1)");
    }
    double inter = 0.0, pred = 0.0, truth = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const bool p = probs[i] >= threshold;
        pred += p ? 1.0 : 0.0;
        truth += mask[i] ? 1.0 : 0.0;
        inter += (p && mask[i]) ? 1.0 : 0.0;
    }
    return (2.0 * inter + models::kDiceEps) / (pred + truth + models::kDiceEps);
}

} // namespace ggsa::sampling
