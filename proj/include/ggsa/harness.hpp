#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ggsa/dataset.hpp"
#include "ggsa/sampling.hpp"
#include "ggsa/train.hpp"

namespace ggsa::harness {

enum class Scenario { Scratch, Transfer };

const char* scenario_name(Scenario s);
Scenario parse_scenario(const std::string& name);

// One fully resolved experiment: a dataset recipe, the training schedules and
// the suggestion grid. Methods and budgets are swept; everything else is
// shared across the plan.
struct ExperimentPlan {
    Scenario scenario = Scenario::Scratch;
    sampling::Strategy strategy = sampling::Strategy::Patient;
    std::vector<sampling::Method> methods = {sampling::Method::Random,
                                             sampling::Method::Gradient,
                                             sampling::Method::Oracle};
    std::vector<int> budgets = {8, 12, 16, 20};
    int repeats = 10;
    std::uint64_t seed = 1;

    int epochs_initial = 30;
    int epochs_after = 30;
    int pretrain_epochs = 30;
    int rounds = 1; // suggestion rounds; >1 rebuilds the index between rounds
    double seg_lr = 1e-3;
    double alpha = 1e-4;
    double theta_max = 45.0;
    double threshold = 0.5;
    int batch_size = 16;

    int vae_epochs = 50;
    double vae_lr = 1e-4;
    int latent_dim = 5;

    std::string dataset_dir; // load instead of generating when non-empty
    std::uint64_t dataset_seed = 1;
    int patients_a = 60;
    int test_a = 20;
    int patients_b = 0;
    int test_b = 0;
    int slices_per_patient = 8;
    int image_hw = 32;

    bool record_walltime = true;
    int jobs = 1;
};

// A single (method, budget) cell of the plan.
struct ExperimentConfig {
    ExperimentPlan plan;
    sampling::Method method = sampling::Method::Random;
    int budget = 8;
};

struct RoundReport {
    Scenario scenario;
    sampling::Method method;
    sampling::Strategy strategy;
    int budget = 0;
    std::uint64_t seed = 0;
    double dice = 0.0;
    std::int64_t annotated_slices = 0;
    std::int64_t context_views = 0;
    int fallbacks = 0;
    std::int64_t wall_ms = 0;
};

// Expensive state shared by every round of a plan: the dataset, the manifold
// learner trained on the unannotated pool, and (transfer only) the site-A
// pretrained segmenter. Immutable once built.
struct ExperimentContext {
    data::Dataset dataset;
    models::VaeModel vae;
    std::optional<models::SegModel> pretrained;
    std::vector<std::string> pool_units;  // sorted suggestion units of the pool
    std::vector<std::string> test_slices; // evaluation slice ids
};

ExperimentContext build_context(const ExperimentPlan& plan);

// Optional window into a finished round for tests.
struct RoundArtifacts {
    std::vector<std::string> initial_units;
    std::vector<std::string> suggested_units;
    models::SegModel model;
};

// One annotation round: random half, train, suggest, annotate, retrain,
// evaluate on the held-out test split.
RoundReport run_round(const ExperimentConfig& config, std::uint64_t seed,
                      const ExperimentContext& ctx,
                      RoundArtifacts* artifacts = nullptr);

// Convenience form that builds a private context first.
RoundReport run_round(const ExperimentConfig& config, std::uint64_t seed);

// The full sweep: every (method, budget, repeat) cell, optionally in
// parallel; reports come back in deterministic plan order.
std::vector<RoundReport> run_experiment(const ExperimentPlan& plan,
                                        const ExperimentContext& ctx);
std::vector<RoundReport> run_experiment(const ExperimentPlan& plan);

// Mean per-slice Dice of thresholded predictions against ground truth.
double evaluate_dice(const models::SegModel& model, const data::Dataset& ds,
                     const std::vector<std::string>& sample_ids, double threshold = 0.5);

// ---- experiment configuration file (flat key = value) -------------------

ExperimentPlan parse_plan_file(const std::string& path);
ExperimentPlan parse_plan_text(const std::string& text, const std::string& origin);

// Canonical key=value rendering with every default resolved.
std::string describe_plan(const ExperimentPlan& plan);

// ---- reporting -----------------------------------------------------------

// rounds.csv (exact column set) plus one SVG chart per (scenario, strategy).
void emit_report(const std::vector<RoundReport>& reports, const std::string& out_dir);

std::string report_csv_text(const std::vector<RoundReport>& reports);
std::vector<RoundReport> parse_report_csv(const std::string& text);

struct SeriesPoint {
    int budget;
    double mean;
    double stdev;
};

// Aggregates (mean, std over seeds) per (scenario, strategy, method, budget).
std::vector<std::tuple<Scenario, sampling::Strategy, sampling::Method,
                       std::vector<SeriesPoint>>>
aggregate_reports(const std::vector<RoundReport>& reports);

} // namespace ggsa::harness
