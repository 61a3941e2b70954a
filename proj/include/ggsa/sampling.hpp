#pragma once

#include <functional>
#include <set>
#include <string>
#include <vector>

#include "ggsa/dataset.hpp"
#include "ggsa/unet.hpp"
#include "ggsa/vae.hpp"

namespace ggsa::sampling {

enum class Strategy { Image, Patient };
enum class Method { Random, Gradient, Oracle };

const char* strategy_name(Strategy s);
const char* method_name(Method m);
Strategy parse_strategy(const std::string& name);
Method parse_method(const std::string& name);

// (1,1,H,W) float64 view of a stored slice / mask.
ad::TensorPtr sample_image_tensor(const data::Dataset& ds, const std::string& sample_id);
ad::TensorPtr sample_mask_tensor(const data::Dataset& ds, const std::string& sample_id);

// Latent vectors of the unannotated pool, one entry per suggestion unit
// (slice id or patient id). Entries are sorted by id; patient entries are the
// arithmetic mean of the patient's slice latents.
struct LatentIndex {
    struct Entry {
        std::string id;
        std::vector<double> z;
    };
    std::vector<Entry> entries;
    int dim = 0;
};

LatentIndex build_latent_index(const models::VaeModel& vae, const data::Dataset& ds,
                               const std::vector<std::string>& pool_unit_ids,
                               Strategy strategy);

// One constrained nearest-neighbour query: source embedding, and the
// embedding of the gradient-perturbed source.
struct SuggestionQuery {
    std::string source_id;
    std::vector<double> z_source;
    std::vector<double> z_target;
};

struct SuggestionResult {
    std::vector<std::string> selected_ids;
    int fallback_count = 0;
    Method method = Method::Random;
    Strategy strategy = Strategy::Image;
};

// Generic input-space ascent x' = x + alpha * d(loss)/dx with everything but
// the input frozen.
ad::TensorPtr ascend_input(const std::function<ad::TensorPtr(const ad::TensorPtr&)>& loss_fn,
                           const ad::TensorPtr& x, double alpha);

// Eq-style perturbation toward harder samples under the current segmenter.
ad::TensorPtr gradient_ascend_input(const models::SegModel& seg, const ad::TensorPtr& x,
                                    const ad::TensorPtr& y, double alpha);

// Encoder-mean embedding of a perturbed image; the projection step.
std::vector<double> project_to_latent(const models::VaeModel& vae,
                                      const ad::TensorPtr& x_prime);

// Nearest candidate to z_target among non-excluded entries whose angle at
// z_source (between z_target - z_source and z_j - z_source) is at most
// theta_max_deg. Falls back to the unconstrained nearest neighbour when the
// cone is empty or the query has no direction; ties break on the smaller id.
std::pair<std::string, bool> query_constrained_nn(const LatentIndex& index,
                                                  const SuggestionQuery& query,
                                                  double theta_max_deg,
                                                  const std::set<std::string>& excluded);

// The full gradient-guided chain: one query per annotated source unit (in
// stable id order), previously selected ids excluded, m unique picks.
SuggestionResult suggest_gradient_guided(const models::SegModel& seg,
                                         const models::VaeModel& vae,
                                         const data::Dataset& ds,
                                         const std::vector<std::string>& annotated_unit_ids,
                                         const LatentIndex& index, int m, double alpha,
                                         double theta_max_deg, Strategy strategy);

// Uniform sample without replacement, deterministic in the seed.
SuggestionResult suggest_random(const std::vector<std::string>& pool_unit_ids, int m,
                                std::uint64_t seed);

// Posteriori baseline: the m units on which the current model scores the
// lowest Dice (patient units: mean over slices), ties on smaller id.
SuggestionResult suggest_oracle(const models::SegModel& seg, const data::Dataset& ds,
                                const std::vector<std::string>& pool_unit_ids,
                                Strategy strategy, int m, double threshold = 0.5);

// Thresholded-overlap score in [0,1] between a probability map and a mask.
double dice_score(const std::vector<double>& probs, const std::vector<std::uint8_t>& mask,
                  double threshold);

// Batched segmenter inference; one probability vector per requested slice.
std::vector<std::vector<double>> predict_probabilities(
    const models::SegModel& seg, const data::Dataset& ds,
    const std::vector<std::string>& sample_ids, int batch_size = 16);

// Suggestion list file: "# method=<m> strategy=<s> fallbacks=<k>" then one
// id per line.
void write_suggestions(const std::string& path, const SuggestionResult& result);
SuggestionResult read_suggestions(const std::string& path);

} // namespace ggsa::sampling
