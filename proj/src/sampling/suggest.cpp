#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ggsa/losses.hpp"
#include "ggsa/ops.hpp"
#include "ggsa/rng.hpp"
#include "ggsa/sampling.hpp"
#include "ggsa/tape.hpp"

namespace ggsa::sampling {

using namespace ggsa::ad;

TensorPtr ascend_input(const std::function<TensorPtr(const TensorPtr&)>& loss_fn,
                       const TensorPtr& x, double alpha) {
    if (alpha < 0.0) fail(ErrorKind::Contract, "ascent step alpha must be >= 0");
    if (alpha == 0.0) return Tensor::make(x->shape, x->values);

    Tape tape;
    auto probe = Tensor::make(x->shape, x->values, true);
    TensorPtr loss;
    {
        TapeScope scope(tape);
        loss = loss_fn(probe);
    }
    if (!loss->is_scalar()) fail(ErrorKind::Contract, "ascent loss must be scalar");
    backward(tape, loss);

    std::vector<double> out(x->values);
    const auto& g = probe->gradient();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += alpha * g[i];
    return Tensor::make(x->shape, std::move(out));
}

TensorPtr gradient_ascend_input(const models::SegModel& seg, const TensorPtr& x,
                                const TensorPtr& y, double alpha) {
    if (x->shape != y->shape) {
        fail(ErrorKind::Dimension, "gradient_ascend_input: image and mask shapes differ");
    }
    return ascend_input(
        [&](const TensorPtr& t) { return models::dice_loss(unet_forward(seg, t), y); }, x,
        alpha);
}

std::vector<double> project_to_latent(const models::VaeModel& vae, const TensorPtr& x_prime) {
    return encode_latent(vae, x_prime);
}

namespace {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

double norm(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

} // namespace

std::pair<std::string, bool> query_constrained_nn(const LatentIndex& index,
                                                  const SuggestionQuery& query,
                                                  double theta_max_deg,
                                                  const std::set<std::string>& excluded) {
    if (!(theta_max_deg > 0.0 && theta_max_deg <= 180.0)) {
        fail(ErrorKind::Contract, "theta_max must lie in (0, 180] degrees");
    }
    if (query.z_source.size() != query.z_target.size()) {
        fail(ErrorKind::Dimension, "query latents must share a dimension");
    }

    std::vector<const LatentIndex::Entry*> candidates;
    for (const auto& e : index.entries) {
        if (static_cast<int>(e.z.size()) != index.dim ||
            e.z.size() != query.z_source.size()) {
            fail(ErrorKind::Dimension, "latent dimension mismatch in index entry " + e.id);
        }
        if (!excluded.count(e.id)) candidates.push_back(&e);
    }
    if (candidates.empty()) {
        fail(ErrorKind::PoolExhausted, "all index entries are excluded");
    }

    std::vector<double> axis(query.z_target.size());
    for (std::size_t i = 0; i < axis.size(); ++i) {
        axis[i] = query.z_target[i] - query.z_source[i];
    }
    const double axis_norm = norm(axis);
    const double cos_limit = std::cos(theta_max_deg * 3.14159265358979323846 / 180.0);

    const LatentIndex::Entry* best = nullptr;
    double best_dist = 0.0;
    bool used_fallback = false;

    if (axis_norm > 0.0) {
        // entries are id-sorted, so a strict '<' keeps the smallest id on ties
        for (const auto* e : candidates) {
            std::vector<double> offset(e->z.size());
            for (std::size_t i = 0; i < offset.size(); ++i) {
                offset[i] = e->z[i] - query.z_source[i];
            }
            const double off_norm = norm(offset);
            bool inside;
            if (off_norm == 0.0) {
                inside = true; // candidate sits on the cone apex
            } else {
                double dot = 0.0;
                for (std::size_t i = 0; i < offset.size(); ++i) dot += offset[i] * axis[i];
                inside = dot >= cos_limit * off_norm * axis_norm;
            }
            if (!inside) continue;
            const double dist = squared_distance(e->z, query.z_target);
            if (best == nullptr || dist < best_dist) {
                best = e;
                best_dist = dist;
            }
        }
    }

    if (best == nullptr) {
        // empty cone or degenerate direction: plain nearest neighbour
        used_fallback = true;
        for (const auto* e : candidates) {
            const double dist = squared_distance(e->z, query.z_target);
            if (best == nullptr || dist < best_dist) {
                best = e;
                best_dist = dist;
            }
        }
    }
    return {best->id, used_fallback};
}

namespace {

std::vector<std::string> patient_slice_ids(const data::Dataset& ds, const std::string& pid) {
    std::vector<std::string> out;
    for (std::size_t idx : ds.patient(pid).sample_indices) {
        out.push_back(ds.samples[idx].sample_id);
    }
    return out;
}

// z_source / z_target for one source unit: encode the unit, perturb every
// slice, encode again. Patient units average both sides over their slices.
SuggestionQuery build_query(const models::SegModel& seg, const models::VaeModel& vae,
                            const data::Dataset& ds, const std::string& unit_id,
                            double alpha, Strategy strategy) {
    std::vector<std::string> slice_ids =
        strategy == Strategy::Image ? std::vector<std::string>{unit_id}
                                    : patient_slice_ids(ds, unit_id);

    std::vector<double> z_source(static_cast<std::size_t>(vae.cfg.latent_dim), 0.0);
    std::vector<double> z_target(z_source.size(), 0.0);
    for (const auto& sid : slice_ids) {
        auto x = sample_image_tensor(ds, sid);
        auto y = sample_mask_tensor(ds, sid);
        auto z = encode_latent(vae, x);
        auto z_prime = project_to_latent(vae, gradient_ascend_input(seg, x, y, alpha));
        for (std::size_t i = 0; i < z_source.size(); ++i) {
            z_source[i] += z[i];
            z_target[i] += z_prime[i];
        }
    }
    for (std::size_t i = 0; i < z_source.size(); ++i) {
        z_source[i] /= static_cast<double>(slice_ids.size());
        z_target[i] /= static_cast<double>(slice_ids.size());
    }
    return {unit_id, std::move(z_source), std::move(z_target)};
}

void check_result_invariants(const SuggestionResult& result,
                             const std::set<std::string>& annotated) {
    std::set<std::string> seen;
    for (const auto& id : result.selected_ids) {
        if (!seen.insert(id).second) {
            fail(ErrorKind::Contract, "suggestion produced duplicate id " + id);
        }
        if (annotated.count(id)) {
            fail(ErrorKind::Contract, "suggestion returned annotated id " + id);
        }
    }
}

} // namespace

SuggestionResult suggest_gradient_guided(const models::SegModel& seg,
                                         const models::VaeModel& vae,
                                         const data::Dataset& ds,
                                         const std::vector<std::string>& annotated_unit_ids,
                                         const LatentIndex& index, int m, double alpha,
                                         double theta_max_deg, Strategy strategy) {
    if (m < 0) fail(ErrorKind::Contract, "m must be >= 0");
    if (m > static_cast<int>(annotated_unit_ids.size())) {
        fail(ErrorKind::Contract,
             "gradient-guided suggestion issues one query per annotated source; m=" +
                 std::to_string(m) + " exceeds " +
                 std::to_string(annotated_unit_ids.size()) + " sources");
    }
    if (static_cast<int>(index.entries.size()) < m) {
        fail(ErrorKind::PoolExhausted,
             "pool holds " + std::to_string(index.entries.size()) + " units, need " +
                 std::to_string(m));
    }

    std::set<std::string> annotated(annotated_unit_ids.begin(), annotated_unit_ids.end());
    for (const auto& e : index.entries) {
        if (annotated.count(e.id)) {
            fail(ErrorKind::Contract, "index entry " + e.id + " is already annotated");
        }
    }

    std::vector<std::string> sources = annotated_unit_ids;
    std::sort(sources.begin(), sources.end());
    sources.resize(static_cast<std::size_t>(m));

    SuggestionResult result;
    result.method = Method::Gradient;
    result.strategy = strategy;

    std::set<std::string> excluded;
    for (const auto& source : sources) {
        auto query = build_query(seg, vae, ds, source, alpha, strategy);
        auto [picked, fb] = query_constrained_nn(index, query, theta_max_deg, excluded);
        result.selected_ids.push_back(picked);
        result.fallback_count += fb ? 1 : 0;
        excluded.insert(picked);
    }
    check_result_invariants(result, annotated);
    return result;
}

SuggestionResult suggest_random(const std::vector<std::string>& pool_unit_ids, int m,
                                std::uint64_t seed) {
    if (m < 0) fail(ErrorKind::Contract, "m must be >= 0");
    if (m > static_cast<int>(pool_unit_ids.size())) {
        fail(ErrorKind::PoolExhausted, "pool holds " +
                                           std::to_string(pool_unit_ids.size()) +
                                           " units, need " + std::to_string(m));
    }
    std::vector<std::string> ids = pool_unit_ids;
    std::sort(ids.begin(), ids.end());

    Rng rng(seed);
    for (int i = 0; i < m; ++i) {
        const auto j = i + static_cast<int>(rng.next_below(ids.size() - i));
        std::swap(ids[i], ids[j]);
    }
    ids.resize(static_cast<std::size_t>(m));

    SuggestionResult result;
    result.method = Method::Random;
    result.selected_ids = std::move(ids);
    check_result_invariants(result, {});
    return result;
}

SuggestionResult suggest_oracle(const models::SegModel& seg, const data::Dataset& ds,
                                const std::vector<std::string>& pool_unit_ids,
                                Strategy strategy, int m, double threshold) {
    if (m < 0) fail(ErrorKind::Contract, "m must be >= 0");
    if (m > static_cast<int>(pool_unit_ids.size())) {
        fail(ErrorKind::PoolExhausted, "pool holds " +
                                           std::to_string(pool_unit_ids.size()) +
                                           " units, need " + std::to_string(m));
    }

    std::vector<std::string> ids = pool_unit_ids;
    std::sort(ids.begin(), ids.end());

    std::vector<std::pair<double, std::string>> scored;
    scored.reserve(ids.size());
    for (const auto& id : ids) {
        std::vector<std::string> slice_ids = strategy == Strategy::Image
                                                 ? std::vector<std::string>{id}
                                                 : patient_slice_ids(ds, id);
        auto probs = predict_probabilities(seg, ds, slice_ids);
        double score = 0.0;
        for (std::size_t k = 0; k < slice_ids.size(); ++k) {
            const auto& s = ds.sample(slice_ids[k]);
            if (!s.has_mask()) {
                fail(ErrorKind::Contract, "oracle needs ground truth for " + slice_ids[k]);
            }
            score += dice_score(probs[k], s.mask, threshold);
        }
        scored.emplace_back(score / static_cast<double>(slice_ids.size()), id);
    }
    std::sort(scored.begin(), scored.end()); // (score asc, id asc)

    SuggestionResult result;
    result.method = Method::Oracle;
    result.strategy = strategy;
    for (int i = 0; i < m; ++i) result.selected_ids.push_back(scored[i].second);
    check_result_invariants(result, {});
    return result;
}

void write_suggestions(const std::string& path, const SuggestionResult& result) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorKind::Filesystem, "cannot write " + path);
    out << "# method=" << method_name(result.method)
        << " strategy=" << strategy_name(result.strategy)
        << " fallbacks=" << result.fallback_count << "\n";
    for (const auto& id : result.selected_ids) out << id << "\n";
}

SuggestionResult read_suggestions(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Filesystem, "cannot read " + path);
    std::string header;
    if (!std::getline(in, header) || header.rfind("# method=", 0) != 0) {
        fail(ErrorKind::Format, path + ": missing suggestion header");
    }
    SuggestionResult result;
    std::istringstream hs(header.substr(2));
    std::string field;
    while (hs >> field) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
        if (key == "method") result.method = parse_method(value);
        else if (key == "strategy") result.strategy = parse_strategy(value);
        else if (key == "fallbacks") result.fallback_count = std::stoi(value);
    }
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) result.selected_ids.push_back(line);
    }
    return result;
}

} // namespace ggsa::sampling
