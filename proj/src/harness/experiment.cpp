#include <algorithm>
#include <atomic>
#include <chrono>
#include <mutex>
#include <set>
#include <thread>

#include "ggsa/harness.hpp"
#include "ggsa/phantom.hpp"
#include "ggsa/dataset_io.hpp"
#include "ggsa/rng.hpp"

namespace ggsa::harness {

using sampling::Method;
using sampling::Strategy;

namespace {

// Stable stream tags for per-round seed derivation.
enum SeedStream : std::uint64_t {
    kVaeStream = 101,
    kPretrainStream = 102,
    kInitialPickStream = 111,
    kModelInitStream = 112,
    kInitialTrainStream = 113,
    kSuggestStream = 120,   // + round
    kRetrainStream = 160,   // + round
};

std::vector<std::string> unit_ids(const data::Dataset& ds, data::Split split,
                                  std::optional<data::Site> site, Strategy strategy) {
    std::vector<std::string> out;
    for (const auto& p : ds.patients()) {
        if (p.split != split) continue;
        if (site && p.site != *site) continue;
        if (strategy == Strategy::Patient) {
            out.push_back(p.id);
        } else {
            for (std::size_t idx : p.sample_indices) {
                out.push_back(ds.samples[idx].sample_id);
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::string> unit_slice_ids(const data::Dataset& ds, const std::string& unit,
                                        Strategy strategy) {
    if (strategy == Strategy::Image) return {unit};
    std::vector<std::string> out;
    for (std::size_t idx : ds.patient(unit).sample_indices) {
        out.push_back(ds.samples[idx].sample_id);
    }
    return out;
}

std::vector<models::AnnotatedPair> pairs_for(const data::Dataset& ds,
                                             const std::set<std::string>& slice_ids) {
    std::vector<models::AnnotatedPair> pairs;
    pairs.reserve(slice_ids.size());
    const int h = ds.manifest.height, w = ds.manifest.width;
    for (const auto& id : slice_ids) {
        const auto& s = ds.sample(id);
        std::vector<double> img(s.image.begin(), s.image.end());
        std::vector<double> msk(s.mask.begin(), s.mask.end());
        pairs.push_back({ad::Tensor::make({h, w}, std::move(img)),
                         ad::Tensor::make({h, w}, std::move(msk))});
    }
    return pairs;
}

std::vector<ad::TensorPtr> pool_images(const data::Dataset& ds,
                                       const std::vector<std::string>& slice_ids) {
    std::vector<ad::TensorPtr> images;
    images.reserve(slice_ids.size());
    const int h = ds.manifest.height, w = ds.manifest.width;
    for (const auto& id : slice_ids) {
        const auto& s = ds.sample(id);
        std::vector<double> img(s.image.begin(), s.image.end());
        images.push_back(ad::Tensor::make({h, w}, std::move(img)));
    }
    return images;
}

void validate_plan(const ExperimentPlan& plan) {
    if (plan.repeats < 1) fail(ErrorKind::Config, "repeats must be >= 1");
    if (plan.rounds < 1) fail(ErrorKind::Config, "rounds must be >= 1");
    if (plan.methods.empty()) fail(ErrorKind::Config, "at least one method is required");
    if (plan.budgets.empty()) fail(ErrorKind::Config, "at least one budget is required");
    for (int b : plan.budgets) {
        if (b < 2 || b % 2 != 0) {
            fail(ErrorKind::Config, "budget must be even and >= 2, got " + std::to_string(b));
        }
        if ((b / 2) % plan.rounds != 0) {
            fail(ErrorKind::Config, "budget/2 must divide evenly into " +
                                        std::to_string(plan.rounds) + " rounds");
        }
    }
    if (!(plan.alpha >= 0.0)) fail(ErrorKind::Config, "alpha must be >= 0");
    if (!(plan.theta_max > 0.0 && plan.theta_max <= 180.0)) {
        fail(ErrorKind::Config, "theta_max must lie in (0, 180]");
    }
    if (!(plan.threshold > 0.0 && plan.threshold < 1.0)) {
        fail(ErrorKind::Config, "threshold must lie in (0, 1)");
    }
    if (plan.epochs_initial < 0 || plan.epochs_after < 0 || plan.pretrain_epochs < 0) {
        fail(ErrorKind::Config, "epoch counts must be >= 0");
    }
    if (plan.scenario == Scenario::Transfer &&
        plan.dataset_dir.empty() && (plan.patients_b < 1 || plan.test_b < 1)) {
        fail(ErrorKind::Config, "transfer scenario needs site-B train and test patients");
    }
    if (plan.jobs < 1) fail(ErrorKind::Config, "jobs must be >= 1");
}

} // namespace

const char* scenario_name(Scenario s) {
    return s == Scenario::Scratch ? "scratch" : "transfer";
}

Scenario parse_scenario(const std::string& name) {
    if (name == "scratch") return Scenario::Scratch;
    if (name == "transfer") return Scenario::Transfer;
    fail(ErrorKind::Config, "unknown scenario '" + name + "' (scratch|transfer)");
}

ExperimentContext build_context(const ExperimentPlan& plan) {
    validate_plan(plan);

    data::Dataset ds;
    if (!plan.dataset_dir.empty()) {
        ds = data::read_dataset(plan.dataset_dir);
    } else {
        data::PhantomSpec spec;
        spec.seed = plan.dataset_seed;
        spec.height = spec.width = plan.image_hw;
        spec.slices_per_patient = plan.slices_per_patient;
        spec.train_a = plan.patients_a;
        spec.test_a = plan.test_a;
        spec.train_b = plan.patients_b;
        spec.test_b = plan.test_b;
        ds = data::generate_phantoms(spec);
    }

    const bool transfer = plan.scenario == Scenario::Transfer;
    std::optional<data::Site> pool_site =
        transfer ? std::optional<data::Site>(data::Site::B) : std::nullopt;

    ExperimentContext ctx{.dataset = std::move(ds),
                          .vae = models::VaeModel(),
                          .pretrained = std::nullopt,
                          .pool_units = {},
                          .test_slices = {}};

    ctx.pool_units = unit_ids(ctx.dataset, data::Split::Train, pool_site, plan.strategy);
    if (ctx.pool_units.empty()) {
        fail(ErrorKind::Config, "experiment pool is empty");
    }

    // Evaluation split: site B only in the transfer scenario.
    for (const auto& p : ctx.dataset.patients()) {
        if (p.split != data::Split::Test) continue;
        if (transfer && p.site != data::Site::B) continue;
        for (std::size_t idx : p.sample_indices) {
            ctx.test_slices.push_back(ctx.dataset.samples[idx].sample_id);
        }
    }
    std::sort(ctx.test_slices.begin(), ctx.test_slices.end());
    if (ctx.test_slices.empty()) fail(ErrorKind::Config, "evaluation split is empty");

    // The manifold is learnt from the unannotated pool of the active
    // scenario (site B only under transfer).
    std::vector<std::string> pool_slice_ids;
    for (const auto& unit : ctx.pool_units) {
        for (auto& sid : unit_slice_ids(ctx.dataset, unit, plan.strategy)) {
            pool_slice_ids.push_back(std::move(sid));
        }
    }
    std::sort(pool_slice_ids.begin(), pool_slice_ids.end());
    pool_slice_ids.erase(std::unique(pool_slice_ids.begin(), pool_slice_ids.end()),
                         pool_slice_ids.end());

    models::VaeConfig vcfg;
    vcfg.latent_dim = plan.latent_dim;
    vcfg.image_hw = plan.image_hw;
    ctx.vae = models::VaeModel::init(vcfg, derive_seed(plan.seed, kVaeStream));
    train_vae(ctx.vae, pool_images(ctx.dataset, pool_slice_ids), plan.vae_epochs,
              plan.vae_lr, derive_seed(plan.seed, kVaeStream), plan.batch_size);

    if (transfer) {
        std::set<std::string> site_a_train;
        for (const auto& p : ctx.dataset.patients()) {
            if (p.split == data::Split::Train && p.site == data::Site::A) {
                for (std::size_t idx : p.sample_indices) {
                    site_a_train.insert(ctx.dataset.samples[idx].sample_id);
                }
            }
        }
        if (site_a_train.empty()) {
            fail(ErrorKind::Config, "transfer pretraining needs site-A training patients");
        }
        models::SegModel pre =
            models::SegModel::init({}, derive_seed(plan.seed, kPretrainStream));
        train_segmenter(pre, pairs_for(ctx.dataset, site_a_train), plan.pretrain_epochs,
                        plan.seg_lr, derive_seed(plan.seed, kPretrainStream),
                        plan.batch_size);
        ctx.pretrained = std::move(pre);
    }
    return ctx;
}

double evaluate_dice(const models::SegModel& model, const data::Dataset& ds,
                     const std::vector<std::string>& sample_ids, double threshold) {
    if (sample_ids.empty()) fail(ErrorKind::EmptyInput, "evaluation set is empty");
    if (!(threshold > 0.0 && threshold < 1.0)) {
        fail(ErrorKind::Contract, "threshold must lie in (0,1)");
    }
    auto probs = sampling::predict_probabilities(model, ds, sample_ids);
    double acc = 0.0;
    for (std::size_t i = 0; i < sample_ids.size(); ++i) {
        const auto& s = ds.sample(sample_ids[i]);
        if (!s.has_mask()) {
            fail(ErrorKind::Contract, "evaluation sample " + sample_ids[i] + " lacks truth");
        }
        acc += sampling::dice_score(probs[i], s.mask, threshold);
    }
    return acc / static_cast<double>(sample_ids.size());
}

RoundReport run_round(const ExperimentConfig& config, std::uint64_t seed,
                      const ExperimentContext& ctx, RoundArtifacts* artifacts) {
    const auto& plan = config.plan;
    const auto t0 = std::chrono::steady_clock::now();

    const int budget = config.budget;
    if (budget < 2 || budget % 2 != 0) {
        fail(ErrorKind::Config, "budget must be even and >= 2");
    }
    if (static_cast<int>(ctx.pool_units.size()) < budget) {
        fail(ErrorKind::Config, "pool of " + std::to_string(ctx.pool_units.size()) +
                                    " units cannot satisfy budget " +
                                    std::to_string(budget));
    }

    data::Dataset ds = ctx.dataset; // private annotation state per round

    // (a) random initial half, annotated and trained on.
    auto initial = sampling::suggest_random(ctx.pool_units, budget / 2,
                                            derive_seed(seed, kInitialPickStream));
    std::set<std::string> annotated_units(initial.selected_ids.begin(),
                                          initial.selected_ids.end());
    std::set<std::string> annotated_slices;
    const bool image_strategy = plan.strategy == Strategy::Image;
    for (const auto& unit : initial.selected_ids) {
        for (auto& sid : unit_slice_ids(ds, unit, plan.strategy)) {
            annotated_slices.insert(sid);
        }
    }
    ds.oracle_annotate({annotated_slices.begin(), annotated_slices.end()}, image_strategy);

    models::SegModel model =
        plan.scenario == Scenario::Transfer
            ? ctx.pretrained.value().clone()
            : models::SegModel::init({}, derive_seed(seed, kModelInitStream));
    train_segmenter(model, pairs_for(ds, annotated_slices), plan.epochs_initial,
                    plan.seg_lr, derive_seed(seed, kInitialTrainStream), plan.batch_size);

    // (b)-(d) suggestion rounds over the remaining pool.
    std::vector<std::string> remaining;
    for (const auto& unit : ctx.pool_units) {
        if (!annotated_units.count(unit)) remaining.push_back(unit);
    }
    int fallbacks = 0;
    const int per_round = (budget / 2) / plan.rounds;
    std::vector<std::string> all_suggested;

    for (int round = 0; round < plan.rounds; ++round) {
        auto index = sampling::build_latent_index(ctx.vae, ds, remaining, plan.strategy);

        sampling::SuggestionResult suggestion;
        switch (config.method) {
            case Method::Random:
                suggestion = sampling::suggest_random(
                    remaining, per_round, derive_seed(seed, kSuggestStream + round));
                break;
            case Method::Gradient: {
                std::vector<std::string> sources(annotated_units.begin(),
                                                 annotated_units.end());
                suggestion = sampling::suggest_gradient_guided(
                    model, ctx.vae, ds, sources, index,
                    std::min<int>(per_round, static_cast<int>(sources.size())),
                    plan.alpha, plan.theta_max, plan.strategy);
                break;
            }
            case Method::Oracle:
                suggestion = sampling::suggest_oracle(model, ds, remaining, plan.strategy,
                                                      per_round, plan.threshold);
                break;
        }
        fallbacks += suggestion.fallback_count;

        std::set<std::string> new_slices;
        for (const auto& unit : suggestion.selected_ids) {
            annotated_units.insert(unit);
            all_suggested.push_back(unit);
            for (auto& sid : unit_slice_ids(ds, unit, plan.strategy)) {
                new_slices.insert(sid);
                annotated_slices.insert(sid);
            }
        }
        ds.oracle_annotate({new_slices.begin(), new_slices.end()}, image_strategy);
        remaining.erase(std::remove_if(remaining.begin(), remaining.end(),
                                       [&](const std::string& id) {
                                           return annotated_units.count(id) != 0;
                                       }),
                        remaining.end());

        // continue training on the enlarged annotated set
        train_segmenter(model, pairs_for(ds, annotated_slices), plan.epochs_after,
                        plan.seg_lr, derive_seed(seed, kRetrainStream + round),
                        plan.batch_size);
    }

    // (e) held-out evaluation; training and test ids must never overlap.
    for (const auto& sid : ctx.test_slices) {
        if (annotated_slices.count(sid)) {
            fail(ErrorKind::Contract, "test-set leakage detected for " + sid);
        }
    }
    const double dice = evaluate_dice(model, ds, ctx.test_slices, plan.threshold);

    RoundReport report;
    report.scenario = plan.scenario;
    report.method = config.method;
    report.strategy = plan.strategy;
    report.budget = budget;
    report.seed = seed;
    report.dice = dice;
    report.annotated_slices = ds.cost().annotated_slices;
    report.context_views = ds.cost().context_views;
    report.fallbacks = fallbacks;
    if (plan.record_walltime) {
        report.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
    }

    if (artifacts) {
        artifacts->initial_units = initial.selected_ids;
        artifacts->suggested_units = all_suggested;
        artifacts->model = model.clone();
    }
    return report;
}

RoundReport run_round(const ExperimentConfig& config, std::uint64_t seed) {
    auto ctx = build_context(config.plan);
    return run_round(config, seed, ctx);
}

std::vector<RoundReport> run_experiment(const ExperimentPlan& plan,
                                        const ExperimentContext& ctx) {
    validate_plan(plan);

    struct Cell {
        Method method;
        int budget;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (Method m : plan.methods) {
        for (int b : plan.budgets) {
            for (int r = 0; r < plan.repeats; ++r) {
                cells.push_back({m, b, plan.seed + static_cast<std::uint64_t>(r)});
            }
        }
    }

    std::vector<RoundReport> reports(cells.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size() || failed.load()) break;
            try {
                ExperimentConfig cfg{plan, cells[i].method, cells[i].budget};
                reports[i] = run_round(cfg, cells[i].seed, ctx);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                failed.store(true);
                break;
            }
        }
    };

    const int jobs = std::min<int>(plan.jobs, static_cast<int>(cells.size()));
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int t = 0; t < jobs; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);
    return reports;
}

std::vector<RoundReport> run_experiment(const ExperimentPlan& plan) {
    auto ctx = build_context(plan);
    return run_experiment(plan, ctx);
}

} // namespace ggsa::harness
