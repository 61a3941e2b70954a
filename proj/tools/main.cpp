#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "ggsa/checkpoint.hpp"
#include "ggsa/dataset_io.hpp"
#include "ggsa/harness.hpp"
#include "ggsa/phantom.hpp"
#include "ggsa/rng.hpp"

namespace fs = std::filesystem;
using namespace ggsa;

namespace {

constexpr const char* kVersion = "ggsa 1.0.0 (formats: GGAS v1, GGMD v1)";

std::vector<std::string> read_id_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Filesystem, "cannot read id list " + path);
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] != '#') ids.push_back(line);
    }
    return ids;
}

// Expands unit ids (patients or slices) to slice ids.
std::vector<std::string> expand_to_slices(const data::Dataset& ds,
                                          const std::vector<std::string>& units) {
    std::vector<std::string> out;
    for (const auto& id : units) {
        bool is_patient = false;
        for (const auto& p : ds.patients()) {
            if (p.id == id) {
                for (std::size_t idx : p.sample_indices) {
                    out.push_back(ds.samples[idx].sample_id);
                }
                is_patient = true;
                break;
            }
        }
        if (!is_patient) {
            ds.sample(id); // raises MissingSample for unknown ids
            out.push_back(id);
        }
    }
    return out;
}

std::vector<models::AnnotatedPair> slices_to_pairs(const data::Dataset& ds,
                                                   const std::vector<std::string>& ids) {
    std::vector<models::AnnotatedPair> pairs;
    const int h = ds.manifest.height, w = ds.manifest.width;
    for (const auto& id : ids) {
        const auto& s = ds.sample(id);
        if (!s.has_mask()) fail(ErrorKind::Contract, "sample " + id + " has no mask");
        pairs.push_back(
            {ad::Tensor::make({h, w}, std::vector<double>(s.image.begin(), s.image.end())),
             ad::Tensor::make({h, w}, std::vector<double>(s.mask.begin(), s.mask.end()))});
    }
    return pairs;
}

struct KeyValueLog {
    std::ostringstream os;
    template <typename T>
    KeyValueLog& kv(const std::string& key, const T& value) {
        os << key << " = " << value << "\n";
        return *this;
    }
    void print(const std::string& title) const {
        std::cerr << "# resolved " << title << " configuration\n" << os.str();
    }
};

int run_cli(int argc, char** argv) {
    CLI::App app{"Gradient-guided suggestive annotation laboratory"};
    app.require_subcommand(0, 1);
    app.set_version_flag("--version", kVersion);

    // ---- gen-data ----------------------------------------------------------
    auto* gen = app.add_subcommand("gen-data", "Generate a phantom dataset directory");
    std::string gen_out, gen_site = "A";
    int gen_patients = 60, gen_test = 0, gen_slices = 8, gen_hw = 32;
    std::uint64_t gen_seed = 1;
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--patients", gen_patients, "Training patients (per site for AB)");
    gen->add_option("--test-patients", gen_test, "Held-out test patients (per site for AB)");
    gen->add_option("--site", gen_site, "Site recipe: A, B or AB")
        ->check(CLI::IsMember({"A", "B", "AB"}));
    gen->add_option("--slices", gen_slices, "Slices per patient");
    gen->add_option("--hw", gen_hw, "Slice height/width");
    gen->add_option("--seed", gen_seed, "Generator seed");
    gen->callback([&]() {
        KeyValueLog log;
        log.kv("out", gen_out).kv("patients", gen_patients).kv("test_patients", gen_test);
        log.kv("site", gen_site).kv("slices", gen_slices).kv("hw", gen_hw).kv("seed", gen_seed);
        log.print("gen-data");

        data::PhantomSpec spec;
        spec.seed = gen_seed;
        spec.height = spec.width = gen_hw;
        spec.slices_per_patient = gen_slices;
        spec.train_a = gen_site != "B" ? gen_patients : 0;
        spec.test_a = gen_site != "B" ? gen_test : 0;
        spec.train_b = gen_site != "A" ? gen_patients : 0;
        spec.test_b = gen_site != "A" ? gen_test : 0;
        auto ds = data::generate_phantoms(spec);
        data::write_dataset(ds, gen_out);
        std::cerr << "wrote " << ds.samples.size() << " slices for "
                  << ds.patients().size() << " patients to " << gen_out << "\n";
    });

    // ---- train-vae ---------------------------------------------------------
    auto* tv = app.add_subcommand("train-vae", "Train the manifold learner");
    std::string tv_data, tv_out, tv_site = "any";
    int tv_epochs = 50, tv_latent = 5, tv_batch = 16;
    double tv_lr = 1e-4;
    std::uint64_t tv_seed = 1;
    tv->add_option("--data", tv_data, "Dataset directory")->required();
    tv->add_option("--out", tv_out, "Checkpoint path")->required();
    tv->add_option("--epochs", tv_epochs, "Training epochs");
    tv->add_option("--lr", tv_lr, "Learning rate");
    tv->add_option("--latent-dim", tv_latent, "Latent dimension");
    tv->add_option("--batch", tv_batch, "Mini-batch size");
    tv->add_option("--site", tv_site, "Restrict to one site: A, B or any")
        ->check(CLI::IsMember({"A", "B", "any"}));
    tv->add_option("--seed", tv_seed, "Training seed");
    tv->callback([&]() {
        KeyValueLog log;
        log.kv("data", tv_data).kv("out", tv_out).kv("epochs", tv_epochs).kv("lr", tv_lr);
        log.kv("latent_dim", tv_latent).kv("batch", tv_batch).kv("site", tv_site);
        log.kv("seed", tv_seed);
        log.print("train-vae");

        auto ds = data::read_dataset(tv_data);
        std::vector<ad::TensorPtr> images;
        const int h = ds.manifest.height, w = ds.manifest.width;
        for (const auto& p : ds.patients()) {
            if (p.split != data::Split::Train) continue;
            if (tv_site != "any" && data::site_letter(p.site) != tv_site[0]) continue;
            for (std::size_t idx : p.sample_indices) {
                const auto& img = ds.samples[idx].image;
                images.push_back(
                    ad::Tensor::make({h, w}, std::vector<double>(img.begin(), img.end())));
            }
        }
        models::VaeConfig cfg;
        cfg.latent_dim = tv_latent;
        cfg.image_hw = h;
        auto model = models::VaeModel::init(cfg, tv_seed);
        auto history = train_vae(model, images, tv_epochs, tv_lr, tv_seed, tv_batch);
        models::save_vae(tv_out, model);
        if (!history.epoch_loss.empty()) {
            std::cerr << "vae loss " << history.epoch_loss.front() << " -> "
                      << history.epoch_loss.back() << " over " << tv_epochs << " epochs\n";
        }
    });

    // ---- train-seg ---------------------------------------------------------
    auto* ts = app.add_subcommand("train-seg", "Train the segmenter");
    std::string ts_data, ts_out, ts_ids, ts_init, ts_site = "any";
    int ts_epochs = 30, ts_batch = 16;
    double ts_lr = 1e-3;
    std::uint64_t ts_seed = 1;
    ts->add_option("--data", ts_data, "Dataset directory")->required();
    ts->add_option("--out", ts_out, "Checkpoint path")->required();
    ts->add_option("--epochs", ts_epochs, "Training epochs");
    ts->add_option("--lr", ts_lr, "Learning rate");
    ts->add_option("--batch", ts_batch, "Mini-batch size");
    ts->add_option("--ids", ts_ids, "Train only on these unit ids (file, one per line)");
    ts->add_option("--init", ts_init, "Warm-start from an existing checkpoint");
    ts->add_option("--site", ts_site, "Restrict to one site: A, B or any")
        ->check(CLI::IsMember({"A", "B", "any"}));
    ts->add_option("--seed", ts_seed, "Training seed");
    ts->callback([&]() {
        KeyValueLog log;
        log.kv("data", ts_data).kv("out", ts_out).kv("epochs", ts_epochs).kv("lr", ts_lr);
        log.kv("batch", ts_batch).kv("ids", ts_ids.empty() ? "<train split>" : ts_ids);
        log.kv("init", ts_init.empty() ? "<fresh>" : ts_init).kv("site", ts_site);
        log.kv("seed", ts_seed);
        log.print("train-seg");

        auto ds = data::read_dataset(ts_data);
        std::vector<std::string> slice_ids;
        if (!ts_ids.empty()) {
            slice_ids = expand_to_slices(ds, read_id_file(ts_ids));
        } else {
            for (const auto& p : ds.patients()) {
                if (p.split != data::Split::Train) continue;
                if (ts_site != "any" && data::site_letter(p.site) != ts_site[0]) continue;
                for (std::size_t idx : p.sample_indices) {
                    slice_ids.push_back(ds.samples[idx].sample_id);
                }
            }
        }
        auto model = ts_init.empty() ? models::SegModel::init({}, ts_seed)
                                     : models::load_segmenter(ts_init);
        auto history = train_segmenter(model, slices_to_pairs(ds, slice_ids), ts_epochs,
                                       ts_lr, ts_seed, ts_batch);
        models::save_segmenter(ts_out, model);
        if (!history.epoch_loss.empty()) {
            std::cerr << "dice loss " << history.epoch_loss.front() << " -> "
                      << history.epoch_loss.back() << " over " << ts_epochs << " epochs\n";
        }
    });

    // ---- suggest -----------------------------------------------------------
    auto* sg = app.add_subcommand("suggest", "Suggest the next units to annotate");
    std::string sg_data, sg_seg, sg_vae, sg_method = "gradient", sg_strategy = "patient";
    std::string sg_annotated, sg_out;
    int sg_m = 0;
    double sg_alpha = 1e-4, sg_theta = 45.0, sg_threshold = 0.5;
    std::uint64_t sg_seed = 1;
    sg->add_option("--data", sg_data, "Dataset directory")->required();
    sg->add_option("--m", sg_m, "Number of units to suggest")->required();
    sg->add_option("--method", sg_method, "random | gradient | oracle")
        ->check(CLI::IsMember({"random", "gradient", "oracle"}));
    sg->add_option("--strategy", sg_strategy, "image | patient")
        ->check(CLI::IsMember({"image", "patient"}));
    sg->add_option("--seg", sg_seg, "Segmenter checkpoint (gradient, oracle)");
    sg->add_option("--vae", sg_vae, "Manifold checkpoint (gradient)");
    sg->add_option("--annotated", sg_annotated, "Already-annotated unit ids (file)");
    sg->add_option("--alpha", sg_alpha, "Gradient step size");
    sg->add_option("--theta-max", sg_theta, "Cone half-angle in degrees");
    sg->add_option("--threshold", sg_threshold, "Binarization threshold (oracle)");
    sg->add_option("--out", sg_out, "Suggestion list file (stdout when omitted)");
    sg->add_option("--seed", sg_seed, "Seed (random method)");
    sg->callback([&]() {
        KeyValueLog log;
        log.kv("data", sg_data).kv("method", sg_method).kv("strategy", sg_strategy);
        log.kv("m", sg_m).kv("alpha", sg_alpha).kv("theta_max", sg_theta);
        log.kv("annotated", sg_annotated.empty() ? "<none>" : sg_annotated);
        log.kv("out", sg_out.empty() ? "<stdout>" : sg_out).kv("seed", sg_seed);
        log.print("suggest");

        auto ds = data::read_dataset(sg_data);
        const auto strategy = sampling::parse_strategy(sg_strategy);
        const auto method = sampling::parse_method(sg_method);

        std::vector<std::string> annotated;
        if (!sg_annotated.empty()) annotated = read_id_file(sg_annotated);
        std::set<std::string> annotated_set(annotated.begin(), annotated.end());

        std::vector<std::string> pool;
        const auto units = strategy == sampling::Strategy::Patient
                               ? ds.patient_ids(data::Split::Train)
                               : ds.sample_ids(data::Split::Train);
        for (const auto& id : units) {
            if (!annotated_set.count(id)) pool.push_back(id);
        }

        sampling::SuggestionResult result;
        switch (method) {
            case sampling::Method::Random:
                result = sampling::suggest_random(pool, sg_m, sg_seed);
                break;
            case sampling::Method::Oracle: {
                if (sg_seg.empty()) fail(ErrorKind::Config, "oracle suggestion needs --seg");
                auto seg = models::load_segmenter(sg_seg);
                result = sampling::suggest_oracle(seg, ds, pool, strategy, sg_m, sg_threshold);
                break;
            }
            case sampling::Method::Gradient: {
                if (sg_seg.empty() || sg_vae.empty()) {
                    fail(ErrorKind::Config, "gradient suggestion needs --seg and --vae");
                }
                if (annotated.empty()) {
                    fail(ErrorKind::Config, "gradient suggestion needs --annotated sources");
                }
                auto seg = models::load_segmenter(sg_seg);
                auto vae = models::load_vae(sg_vae);
                ds.oracle_annotate(expand_to_slices(ds, annotated),
                                   strategy == sampling::Strategy::Image);
                auto index = sampling::build_latent_index(vae, ds, pool, strategy);
                result = sampling::suggest_gradient_guided(seg, vae, ds, annotated, index,
                                                           sg_m, sg_alpha, sg_theta, strategy);
                break;
            }
        }
        result.strategy = strategy;

        if (sg_out.empty()) {
            std::cout << "# method=" << sampling::method_name(result.method)
                      << " strategy=" << sampling::strategy_name(result.strategy)
                      << " fallbacks=" << result.fallback_count << "\n";
            for (const auto& id : result.selected_ids) std::cout << id << "\n";
        } else {
            sampling::write_suggestions(sg_out, result);
            std::cerr << "wrote " << result.selected_ids.size() << " suggestions to "
                      << sg_out << "\n";
        }
    });

    // ---- run ----------------------------------------------------------------
    auto* rn = app.add_subcommand("run", "Run a full experiment plan");
    std::string rn_config, rn_out = "results", rn_methods, rn_budgets;
    int rn_jobs = -1, rn_repeats = -1;
    std::int64_t rn_seed = -1;
    rn->add_option("--config", rn_config, "Plan file (key = value)")->required();
    rn->add_option("--out-dir", rn_out, "Report output directory");
    rn->add_option("--jobs", rn_jobs, "Parallel round workers (overrides config)");
    rn->add_option("--seed", rn_seed, "Base seed (overrides config)");
    rn->add_option("--repeats", rn_repeats, "Repeats (overrides config)");
    rn->add_option("--methods", rn_methods, "Methods override, comma list");
    rn->add_option("--budgets", rn_budgets, "Budgets override, comma list");
    rn->callback([&]() {
        auto plan = harness::parse_plan_file(rn_config);
        if (rn_jobs > 0) plan.jobs = rn_jobs;
        if (rn_seed >= 0) plan.seed = static_cast<std::uint64_t>(rn_seed);
        if (rn_repeats > 0) plan.repeats = rn_repeats;
        if (!rn_methods.empty()) {
            plan = harness::parse_plan_text(harness::describe_plan(plan) +
                                                "method = " + rn_methods + "\n",
                                            "--methods");
        }
        if (!rn_budgets.empty()) {
            plan = harness::parse_plan_text(harness::describe_plan(plan) +
                                                "budget = " + rn_budgets + "\n",
                                            "--budgets");
        }
        std::cerr << "# resolved run configuration\n" << harness::describe_plan(plan);

        auto reports = harness::run_experiment(plan);
        harness::emit_report(reports, rn_out);
        std::cerr << "wrote " << reports.size() << " round reports to " << rn_out << "\n";
    });

    // ---- report ---------------------------------------------------------------
    auto* rp = app.add_subcommand("report", "Re-render charts from an existing rounds.csv");
    std::string rp_csv, rp_out = "results";
    rp->add_option("--csv", rp_csv, "rounds.csv produced by `run`")->required();
    rp->add_option("--out-dir", rp_out, "Report output directory");
    rp->callback([&]() {
        KeyValueLog log;
        log.kv("csv", rp_csv).kv("out_dir", rp_out);
        log.print("report");
        std::ifstream in(rp_csv);
        if (!in) fail(ErrorKind::Filesystem, "cannot read " + rp_csv);
        std::stringstream buffer;
        buffer << in.rdbuf();
        auto reports = harness::parse_report_csv(buffer.str());
        harness::emit_report(reports, rp_out);
        std::cerr << "rendered charts for " << reports.size() << " rounds in " << rp_out
                  << "\n";
    });

    try {
        app.parse(argc, argv);
        if (app.get_subcommands().empty()) {
            std::cerr << app.help() << "\n";
            return 2;
        }
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help() << "\n";
        return 0;
    } catch (const CLI::CallForVersion&) {
        std::cout << kVersion << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
