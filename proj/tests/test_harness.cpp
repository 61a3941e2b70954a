#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "ggsa/harness.hpp"
#include "ggsa/phantom.hpp"
#include "ggsa/rng.hpp"

using namespace ggsa;
using namespace ggsa::harness;
using sampling::Method;
using sampling::Strategy;

namespace {

// Minutes-scale plans don't belong in the unit suite; this one is seconds.
ExperimentPlan tiny_plan() {
    ExperimentPlan plan;
    plan.scenario = Scenario::Scratch;
    plan.strategy = Strategy::Patient;
    plan.methods = {Method::Random, Method::Gradient, Method::Oracle};
    plan.budgets = {4};
    plan.repeats = 1;
    plan.seed = 5;
    plan.epochs_initial = 2;
    plan.epochs_after = 2;
    plan.vae_epochs = 2;
    plan.patients_a = 8;
    plan.test_a = 2;
    plan.slices_per_patient = 4;
    plan.image_hw = 16;
    plan.batch_size = 8;
    plan.record_walltime = false;
    return plan;
}

} // namespace

TEST_CASE("evaluate_dice worked examples") {
    data::PhantomSpec spec;
    spec.seed = 2;
    spec.train_a = 1;
    spec.test_a = 0;
    spec.slices_per_patient = 1;
    spec.height = spec.width = 16;
    auto ds = data::generate_phantoms(spec);
    const auto& id = ds.samples[0].sample_id;

    // exact-match and disjoint predictions via the score helper
    const auto& mask = ds.samples[0].mask;
    std::vector<double> perfect(mask.size()), inverted(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        perfect[i] = mask[i] ? 0.9 : 0.1;
        inverted[i] = mask[i] ? 0.1 : 0.9;
    }
    CHECK(sampling::dice_score(perfect, mask, 0.5) == doctest::Approx(1.0));
    CHECK(sampling::dice_score(inverted, mask, 0.5) == doctest::Approx(0.0).epsilon(1e-6));

    // two predicted pixels, two true pixels, one overlapping
    std::vector<double> probs(16, 0.0);
    std::vector<std::uint8_t> truth(16, 0);
    probs[0] = probs[1] = 1.0;
    truth[1] = truth[2] = 1;
    CHECK(sampling::dice_score(probs, truth, 0.5) == doctest::Approx(0.5).epsilon(1e-6));

    // mean over slices through a real model
    models::UnetConfig ucfg;
    ucfg.base_channels = 4;
    auto model = models::SegModel::init(ucfg, 3);
    const double d = evaluate_dice(model, ds, {id});
    CHECK(d >= 0.0);
    CHECK(d <= 1.0);
    CHECK_THROWS_AS(evaluate_dice(model, ds, {}), Error);
    CHECK_THROWS_AS(evaluate_dice(model, ds, {id}, 1.5), Error);
}

TEST_CASE("run_round protocol contracts") {
    auto plan = tiny_plan();
    auto ctx = build_context(plan);

    SUBCASE("epochs_after 0 leaves the initially-trained model") {
        auto plan_frozen = plan;
        plan_frozen.epochs_after = 0;
        ExperimentConfig cfg{plan_frozen, Method::Random, 4};
        RoundArtifacts art;
        auto report = run_round(cfg, 77, ctx, &art);

        // reference: train only the initial half with the same seeds
        auto initial = sampling::suggest_random(ctx.pool_units, 2, derive_seed(77, 111));
        CHECK(initial.selected_ids == art.initial_units);
        CHECK(report.budget == 4);
        CHECK(report.annotated_slices == 4 * plan.slices_per_patient);
        CHECK(report.context_views == 0);

        data::Dataset ds = ctx.dataset;
        std::set<std::string> slices;
        for (const auto& unit : initial.selected_ids) {
            for (std::size_t idx : ds.patient(unit).sample_indices) {
                slices.insert(ds.samples[idx].sample_id);
            }
        }
        auto model = models::SegModel::init({}, derive_seed(77, 112));
        std::vector<models::AnnotatedPair> pairs;
        const int h = ds.manifest.height, w = ds.manifest.width;
        for (const auto& sid : slices) {
            const auto& s = ds.sample(sid);
            pairs.push_back(
                {ad::Tensor::make({h, w}, std::vector<double>(s.image.begin(), s.image.end())),
                 ad::Tensor::make({h, w}, std::vector<double>(s.mask.begin(), s.mask.end()))});
        }
        train_segmenter(model, pairs, plan.epochs_initial, plan.seg_lr,
                        derive_seed(77, 113), plan.batch_size);
        for (std::size_t k = 0; k < model.params.size(); ++k) {
            CHECK(model.params.items()[k].second->values ==
                  art.model.params.items()[k].second->values);
        }
    }

    SUBCASE("full-pool budgets make random and oracle equivalent") {
        auto full_plan = plan;
        full_plan.budgets = {8};
        ExperimentConfig rnd{full_plan, Method::Random, 8};
        ExperimentConfig orc{full_plan, Method::Oracle, 8};
        auto r1 = run_round(rnd, 9, ctx);
        auto r2 = run_round(orc, 9, ctx);
        CHECK(r1.dice == doctest::Approx(r2.dice).epsilon(1e-12));
    }

    SUBCASE("oversized budget fails before any training") {
        ExperimentConfig cfg{plan, Method::Random, 10};
        try {
            run_round(cfg, 1, ctx);
            FAIL("expected error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Config);
        }
    }

    SUBCASE("image strategy counts context views") {
        auto img_plan = plan;
        img_plan.strategy = Strategy::Image;
        img_plan.budgets = {6};
        auto img_ctx = build_context(img_plan);
        ExperimentConfig cfg{img_plan, Method::Random, 6};
        auto report = run_round(cfg, 3, img_ctx);
        CHECK(report.annotated_slices == 6);
        CHECK(report.context_views == 12);
    }
}

TEST_CASE("run_experiment determinism and ordering") {
    auto plan = tiny_plan();
    plan.methods = {Method::Random, Method::Gradient};
    plan.repeats = 2;
    auto ctx = build_context(plan);

    auto reports = run_experiment(plan, ctx);
    REQUIRE(reports.size() == 4);

    auto plan4 = plan;
    plan4.jobs = 4;
    auto parallel = run_experiment(plan4, ctx);
    CHECK(report_csv_text(reports) == report_csv_text(parallel));

    auto again = run_experiment(plan, ctx);
    CHECK(report_csv_text(reports) == report_csv_text(again));
}

TEST_CASE("transfer scenario draws all suggestions from site B") {
    ExperimentPlan plan = tiny_plan();
    plan.scenario = Scenario::Transfer;
    plan.patients_a = 4;
    plan.test_a = 0;
    plan.patients_b = 6;
    plan.test_b = 2;
    plan.pretrain_epochs = 2;
    auto ctx = build_context(plan);

    REQUIRE(ctx.pretrained.has_value());
    for (const auto& unit : ctx.pool_units) CHECK(unit[0] == 'B');
    for (const auto& sid : ctx.test_slices) CHECK(sid[0] == 'B');

    ExperimentConfig cfg{plan, Method::Gradient, 4};
    RoundArtifacts art;
    auto report = run_round(cfg, 21, ctx, &art);
    CHECK(report.dice >= 0.0);
    for (const auto& unit : art.suggested_units) CHECK(unit[0] == 'B');
}

TEST_CASE("plan parsing accepts known keys and rejects unknown ones") {
    const std::string text =
        "# comment line\n"
        "scenario = transfer\n"
        "strategy = image\n"
        "method = random,gradient\n"
        "budget = 8,12\n"
        "repeats = 3\n"
        "seed = 99\n"
        "alpha = 2e-3\n"
        "theta_max = 60\n"
        "patients_b = 30\n"
        "test_b = 10\n"
        "record_walltime = false\n";
    auto plan = parse_plan_text(text, "inline");
    CHECK(plan.scenario == Scenario::Transfer);
    CHECK(plan.strategy == Strategy::Image);
    CHECK(plan.methods == std::vector<Method>{Method::Random, Method::Gradient});
    CHECK(plan.budgets == std::vector<int>{8, 12});
    CHECK(plan.repeats == 3);
    CHECK(plan.seed == 99);
    CHECK(plan.alpha == doctest::Approx(2e-3));
    CHECK(plan.theta_max == doctest::Approx(60.0));
    CHECK_FALSE(plan.record_walltime);

    try {
        parse_plan_text("no_such_key = 1\n", "inline");
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
        CHECK(std::string(e.what()).find("no_such_key") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_plan_text("seed 3\n", "inline"), Error);
    CHECK_THROWS_AS(parse_plan_text("budget = x\n", "inline"), Error);

    // round-trip through the canonical description
    auto described = describe_plan(plan);
    auto reparsed = parse_plan_text(described, "described");
    CHECK(describe_plan(reparsed) == described);
}

TEST_CASE("report CSV round-trips and SVG structure") {
    std::vector<RoundReport> reports;
    Rng rng(4);
    for (Method m : {Method::Random, Method::Gradient, Method::Oracle}) {
        for (int budget : {8, 12, 16, 20}) {
            for (int r = 0; r < 10; ++r) {
                RoundReport rep;
                rep.scenario = Scenario::Scratch;
                rep.method = m;
                rep.strategy = Strategy::Patient;
                rep.budget = budget;
                rep.seed = static_cast<std::uint64_t>(r + 1);
                rep.dice = rng.uniform(0.4, 0.95);
                rep.annotated_slices = budget * 8;
                rep.fallbacks = static_cast<int>(rng.next_below(3));
                rep.wall_ms = static_cast<std::int64_t>(rng.next_below(10000));
                reports.push_back(rep);
            }
        }
    }

    const std::string text = report_csv_text(reports);
    CHECK(std::count(text.begin(), text.end(), '\n') == 121); // header + 120 rows

    auto parsed = parse_report_csv(text);
    REQUIRE(parsed.size() == reports.size());
    CHECK(report_csv_text(parsed) == text); // bit-exact aggregate reproduction

    auto agg_a = aggregate_reports(reports);
    auto agg_b = aggregate_reports(parsed);
    REQUIRE(agg_a.size() == agg_b.size());
    for (std::size_t i = 0; i < agg_a.size(); ++i) {
        const auto& sa = std::get<3>(agg_a[i]);
        const auto& sb = std::get<3>(agg_b[i]);
        REQUIRE(sa.size() == sb.size());
        for (std::size_t k = 0; k < sa.size(); ++k) {
            CHECK(sa[k].mean == sb[k].mean);
            CHECK(sa[k].stdev == sb[k].stdev);
        }
    }

    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "ggsa_report_test";
    fs::remove_all(dir);
    emit_report(reports, dir.string());
    CHECK(fs::exists(dir / "rounds.csv"));
    const auto svg_path = dir / "dice_scratch_patient.svg";
    REQUIRE(fs::exists(svg_path));
    std::ifstream in(svg_path);
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string svg = ss.str();
    std::size_t polylines = 0, pos = 0;
    while ((pos = svg.find("<polyline", pos)) != std::string::npos) {
        ++polylines;
        pos += 9;
    }
    CHECK(polylines == 3); // one per method
    CHECK(svg.find("<script") == std::string::npos);
    fs::remove_all(dir);
}
