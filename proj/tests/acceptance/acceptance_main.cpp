// Acceptance suite: one self-contained check per numbered criterion, each
// printing a single [PASS]/[FAIL] line. Run with no arguments for the full
// battery or with --only N to select criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "ggsa/checkpoint.hpp"
#include "ggsa/dataset_io.hpp"
#include "ggsa/harness.hpp"
#include "ggsa/losses.hpp"
#include "ggsa/ops.hpp"
#include "ggsa/phantom.hpp"
#include "ggsa/rng.hpp"
#include "ggsa/sampling.hpp"
#include "ggsa/tape.hpp"
#include "ggsa/train.hpp"

using namespace ggsa;
using namespace ggsa::ad;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// helpers
// ---------------------------------------------------------------------------

struct CheckFailure {
    std::string message;
};

void expect(bool ok, const std::string& message) {
    if (!ok) throw CheckFailure{message};
}

TensorPtr rand_tensor(Rng& rng, Shape shape, double lo, double hi) {
    std::vector<double> v(static_cast<std::size_t>(numel(shape)));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor::make(std::move(shape), std::move(v));
}

TensorPtr rand_tensor_off_zero(Rng& rng, Shape shape) {
    std::vector<double> v(static_cast<std::size_t>(numel(shape)));
    for (auto& x : v) {
        const double mag = rng.uniform(0.2, 1.5);
        x = rng.next_double() < 0.5 ? -mag : mag;
    }
    return Tensor::make(std::move(shape), std::move(v));
}

TensorPtr weighted_sum(const TensorPtr& t, const TensorPtr& w) { return sum(mul(t, w)); }

data::Dataset small_phantoms(std::uint64_t seed, int patients, int slices, int hw,
                             int test = 0) {
    data::PhantomSpec spec;
    spec.seed = seed;
    spec.height = spec.width = hw;
    spec.slices_per_patient = slices;
    spec.train_a = patients;
    spec.test_a = test;
    return data::generate_phantoms(spec);
}

// Straight-line reference for the constrained query: explicit cosine ratio,
// candidates sorted by (distance, id).
std::pair<std::string, bool> reference_constrained_nn(
    const sampling::LatentIndex& index, const sampling::SuggestionQuery& q,
    double theta_deg, const std::set<std::string>& excluded) {
    std::vector<std::pair<double, std::string>> in_cone, all;
    std::vector<double> axis(q.z_source.size());
    double axis_norm = 0.0;
    for (std::size_t i = 0; i < axis.size(); ++i) {
        axis[i] = q.z_target[i] - q.z_source[i];
        axis_norm += axis[i] * axis[i];
    }
    axis_norm = std::sqrt(axis_norm);
    for (const auto& e : index.entries) {
        if (excluded.count(e.id)) continue;
        double dist = 0.0;
        for (std::size_t i = 0; i < e.z.size(); ++i) {
            const double d = e.z[i] - q.z_target[i];
            dist += d * d;
        }
        all.emplace_back(dist, e.id);
        if (axis_norm == 0.0) continue;
        double dot = 0.0, off_norm = 0.0;
        for (std::size_t i = 0; i < e.z.size(); ++i) {
            const double off = e.z[i] - q.z_source[i];
            dot += off * axis[i];
            off_norm += off * off;
        }
        off_norm = std::sqrt(off_norm);
        const bool inside =
            off_norm == 0.0 ||
            dot / (off_norm * axis_norm) >= std::cos(theta_deg * M_PI / 180.0);
        if (inside) in_cone.emplace_back(dist, e.id);
    }
    if (!in_cone.empty()) {
        std::sort(in_cone.begin(), in_cone.end());
        return {in_cone.front().second, false};
    }
    std::sort(all.begin(), all.end());
    return {all.front().second, true};
}

// Smallest |pre-activation| over every relu (and smallest top-2 gap over
// every pooling window) recorded during one forward pass. Central
// differences are only a valid oracle when no kink lies within the probe
// step, so instances below a safety margin are redrawn.
double kink_margin(const std::function<TensorPtr(const TensorPtr&)>& f, const TensorPtr& x) {
    Tape tape;
    auto probe = Tensor::make(x->shape, x->values, true);
    {
        TapeScope scope(tape);
        (void)f(probe);
    }
    double margin = std::numeric_limits<double>::infinity();
    for (const auto& e : tape.entries()) {
        if (e.op == Op::Relu) {
            for (double v : e.inputs[0]->values) margin = std::min(margin, std::fabs(v));
        } else if (e.op == Op::MaxPool2d) {
            const auto& x_in = e.inputs[0];
            const int k = e.attrs.kernel;
            const int B = x_in->shape[0], C = x_in->shape[1], H = x_in->shape[2],
                      W = x_in->shape[3];
            for (int n = 0; n < B; ++n)
                for (int c = 0; c < C; ++c)
                    for (int oh = 0; oh < H / k; ++oh)
                        for (int ow = 0; ow < W / k; ++ow) {
                            double best = -1e300, second = -1e300;
                            for (int i = 0; i < k; ++i)
                                for (int j = 0; j < k; ++j) {
                                    const double v =
                                        x_in->values[((static_cast<std::size_t>(n) * C + c) * H +
                                                      oh * k + i) *
                                                         W +
                                                     ow * k + j];
                                    if (v > best) {
                                        second = best;
                                        best = v;
                                    } else if (v > second) {
                                        second = v;
                                    }
                                }
                            margin = std::min(margin, best - second);
                        }
        }
    }
    return margin;
}

std::string run_cli(const std::string& args, int expect_code) {
    const std::string cmd = std::string(GGSA_CLI_PATH) + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    expect(pipe != nullptr, "cannot spawn CLI");
    std::string output;
    char buf[512];
    while (fgets(buf, sizeof(buf), pipe)) output += buf;
    const int status = WEXITSTATUS(pclose(pipe));
    expect(status == expect_code, "CLI exited " + std::to_string(status) + ", expected " +
                                      std::to_string(expect_code) + " for: " + args);
    return output;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    expect(static_cast<bool>(in), "cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// criterion 1: gradient correctness
// ---------------------------------------------------------------------------

bool criterion_gradients(std::ostream& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    double worst_smooth = 0.0, worst_kink = 0.0, worst_vae = 0.0, worst_dice = 0.0;

    for (std::uint64_t instance = 1; instance <= 50; ++instance) {
        Rng rng(instance * 7919);
        auto pos = [&](Shape s) { return rand_tensor(rng, std::move(s), 0.3, 1.3); };
        auto smooth = [&](auto f, const TensorPtr& x) {
            worst_smooth = std::max(worst_smooth, grad_check(f, x, 1e-5));
        };
        auto kinked = [&](auto f, const TensorPtr& x) {
            worst_kink = std::max(worst_kink, grad_check(f, x, 1e-5));
        };

        {
            auto b = pos({3, 4});
            auto w = pos({3, 4});
            smooth([&](const TensorPtr& t) { return weighted_sum(add(t, b), w); }, pos({3, 4}));
            smooth([&](const TensorPtr& t) { return weighted_sum(add(b, t), w); }, pos({3, 4}));
            auto img = pos({2, 3, 2, 2});
            auto iw = pos({2, 3, 2, 2});
            smooth([&](const TensorPtr& t) { return weighted_sum(add(img, t), iw); }, pos({3}));
            auto m = pos({3, 5});
            auto mw = pos({3, 5});
            smooth([&](const TensorPtr& t) { return weighted_sum(add(m, t), mw); }, pos({5}));
            smooth([&](const TensorPtr& t) { return weighted_sum(sub(t, b), w); }, pos({3, 4}));
            smooth([&](const TensorPtr& t) { return weighted_sum(sub(b, t), w); }, pos({3, 4}));
            smooth([&](const TensorPtr& t) { return weighted_sum(mul(t, b), w); }, pos({3, 4}));
            smooth([&](const TensorPtr& t) { return weighted_sum(scale(t, -2.5), w); },
                   pos({3, 4}));
        }
        {
            auto a = pos({3, 4});
            auto b = pos({4, 2});
            auto w = pos({3, 2});
            smooth([&](const TensorPtr& t) { return weighted_sum(matmul(t, b), w); }, a);
            smooth([&](const TensorPtr& t) { return weighted_sum(matmul(a, t), w); }, b);
        }
        {
            auto x = pos({2, 2, 6, 6});
            auto w = pos({3, 2, 3, 3});
            auto ww = pos({2, 3, 3, 3});
            smooth([&](const TensorPtr& t) { return weighted_sum(conv2d(t, w, 2, 1), ww); }, x);
            smooth([&](const TensorPtr& t) { return weighted_sum(conv2d(x, t, 2, 1), ww); }, w);
            auto xt = pos({2, 2, 4, 4});
            auto wt = pos({2, 3, 4, 4});
            auto wwt = pos({2, 3, 8, 8});
            smooth([&](const TensorPtr& t) {
                return weighted_sum(conv_transpose2d(t, wt, 2, 1), wwt);
            }, xt);
            smooth([&](const TensorPtr& t) {
                return weighted_sum(conv_transpose2d(xt, t, 2, 1), wwt);
            }, wt);
        }
        {
            auto w = pos({12});
            kinked([&](const TensorPtr& t) { return weighted_sum(relu(t), w); },
                   rand_tensor_off_zero(rng, {12}));
            smooth([&](const TensorPtr& t) { return weighted_sum(sigmoid(t), w); },
                   rand_tensor(rng, {12}, -2.0, 2.0));
            smooth([&](const TensorPtr& t) { return weighted_sum(ad::exp(t), w); },
                   rand_tensor(rng, {12}, -1.5, 1.5));
            smooth([&](const TensorPtr& t) { return weighted_sum(ad::log(t), w); },
                   rand_tensor(rng, {12}, 0.5, 3.0));
            smooth([&](const TensorPtr& t) { return weighted_sum(square(t), w); },
                   rand_tensor_off_zero(rng, {12}));
            smooth([](const TensorPtr& t) { return sum(t); }, rand_tensor(rng, {12}, -2, 2));
            smooth([](const TensorPtr& t) { return mean(t); }, rand_tensor(rng, {12}, -2, 2));
            auto rw = pos({6, 2});
            smooth([&](const TensorPtr& t) { return weighted_sum(reshape(t, {6, 2}), rw); },
                   pos({3, 4}));
            auto ca = pos({2, 2, 3, 3});
            auto cb = pos({2, 1, 3, 3});
            auto cw = pos({2, 3, 3, 3});
            smooth([&](const TensorPtr& t) { return weighted_sum(concat_channels(t, cb), cw); },
                   ca);
            smooth([&](const TensorPtr& t) { return weighted_sum(concat_channels(ca, t), cw); },
                   cb);
            auto pw = pos({1, 2, 2, 2});
            auto pool_fn = [&](const TensorPtr& t) {
                return weighted_sum(max_pool2d(t, 2), pw);
            };
            TensorPtr px;
            for (int attempt = 0; attempt < 256; ++attempt) {
                px = rand_tensor(rng, {1, 2, 4, 4}, -1.0, 1.0);
                if (kink_margin(pool_fn, px) > 3e-4) break;
                px.reset();
            }
            expect(px != nullptr, "could not draw a tie-free pooling instance");
            kinked(pool_fn, px);
            auto uw = pos({1, 2, 6, 6});
            smooth([&](const TensorPtr& t) {
                return weighted_sum(upsample_nearest2d(t, 2), uw);
            }, pos({1, 2, 3, 3}));
        }

        // composed losses; instances whose relu margins are inside the
        // finite-difference window are redrawn (the oracle is undefined
        // across a kink)
        {
            models::VaeConfig vcfg;
            vcfg.latent_dim = 2;
            vcfg.image_hw = 8;
            auto vae = models::VaeModel::init(vcfg, instance);
            auto noise = rand_tensor(rng, {1, 2}, -0.5, 0.5);
            auto loss_of = [&](const TensorPtr& t) { return vae_loss(vae, t, noise); };
            TensorPtr x;
            for (int attempt = 0; attempt < 256; ++attempt) {
                x = rand_tensor(rng, {1, 1, 8, 8}, -1.0, 1.0);
                if (kink_margin(loss_of, x) > 3e-4) break;
                x.reset();
            }
            expect(x != nullptr, "could not draw a kink-free vae_loss instance");
            worst_vae = std::max(worst_vae, grad_check(loss_of, x, 1e-5));

            std::vector<double> mask(16);
            for (auto& v : mask) v = rng.next_double() < 0.5 ? 0.0 : 1.0;
            auto y = Tensor::make({16}, mask);
            auto y_hat = rand_tensor(rng, {16}, 0.05, 0.95);
            worst_dice = std::max(
                worst_dice,
                grad_check([&](const TensorPtr& t) { return models::dice_loss(t, y); },
                           y_hat, 1e-5));
        }
    }

    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                            .count();
    detail << "smooth=" << worst_smooth << " kinked=" << worst_kink
           << " vae_loss=" << worst_vae << " dice_loss=" << worst_dice << " in " << secs
           << "s";
    expect(worst_smooth < 1e-7, "smooth primitive error reached " + std::to_string(worst_smooth));
    expect(worst_kink < 1e-5, "piecewise primitive error too large");
    expect(worst_vae < 1e-5, "vae_loss gradient error too large");
    expect(worst_dice < 1e-6, "dice_loss gradient error too large");
    expect(secs < 60.0, "criterion 1 exceeded its runtime budget");
    return true;
}

// ---------------------------------------------------------------------------
// criterion 2: loss identities
// ---------------------------------------------------------------------------

bool criterion_loss_identities(std::ostream& detail) {
    Rng rng(424242);
    double min_kl = 1e300;
    for (int i = 0; i < 1000; ++i) {
        models::LatentCode code;
        for (int d = 0; d < 5; ++d) {
            code.mu.push_back(rng.uniform(-3.0, 3.0));
            code.logvar.push_back(rng.uniform(-3.0, 3.0));
        }
        const double kl = models::kl_standard_normal(code);
        min_kl = std::min(min_kl, kl);
        expect(kl >= 0.0, "negative KL divergence");
    }
    for (int i = 0; i < 100; ++i) {
        std::vector<double> mask(64, 0.0);
        const int ones = 1 + static_cast<int>(rng.next_below(63));
        for (int k = 0; k < ones; ++k) mask[rng.next_below(64)] = 1.0;
        auto y = Tensor::make({64}, mask);
        const double loss = models::dice_loss(y, y)->item();
        expect(std::fabs(loss + 1.0) <= 1e-9, "dice(y,y) deviates from -1");
    }
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> yh(32), y(32);
        for (auto& v : yh) v = rng.next_double();
        for (auto& v : y) v = rng.next_double() < 0.5 ? 0.0 : 1.0;
        const double loss =
            models::dice_loss(Tensor::make({32}, yh), Tensor::make({32}, y))->item();
        expect(loss >= -1.0 && loss <= 0.0, "dice loss out of [-1, 0]");
    }
    detail << "1000 KL codes (min " << min_kl << "), 100 self-dice, 1000 range checks";
    return true;
}

// ---------------------------------------------------------------------------
// criterion 3: constrained-NN oracle equivalence
// ---------------------------------------------------------------------------

bool criterion_constrained_nn(std::ostream& detail) {
    Rng rng(31337);
    int fallbacks = 0, ties_injected = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        sampling::LatentIndex index;
        index.dim = 5;
        const int n = 2 + static_cast<int>(rng.next_below(40));
        for (int i = 0; i < n; ++i) {
            std::vector<double> z(5);
            if (i > 0 && rng.next_double() < 0.25) {
                z = index.entries[rng.next_below(index.entries.size())].z;
                ++ties_injected;
            } else {
                for (auto& v : z) v = rng.uniform(-2.0, 2.0);
            }
            char id[8];
            std::snprintf(id, sizeof(id), "p%04d", i);
            index.entries.push_back({id, std::move(z)});
        }
        std::sort(index.entries.begin(), index.entries.end(),
                  [](const auto& a, const auto& b) { return a.id < b.id; });

        sampling::SuggestionQuery q;
        q.source_id = "q";
        for (int i = 0; i < 5; ++i) {
            q.z_source.push_back(rng.uniform(-2.0, 2.0));
            q.z_target.push_back(rng.uniform(-2.0, 2.0));
        }
        if (trial % 7 == 0) q.z_target = q.z_source; // degenerate direction

        const double theta = trial % 5 == 0 ? 180.0 : rng.uniform(1.0, 180.0);
        std::set<std::string> excluded;
        for (const auto& e : index.entries) {
            if (rng.next_double() < 0.25 && excluded.size() + 1 < index.entries.size()) {
                excluded.insert(e.id);
            }
        }

        auto got = sampling::query_constrained_nn(index, q, theta, excluded);
        auto want = reference_constrained_nn(index, q, theta, excluded);
        expect(got == want, "mismatch on trial " + std::to_string(trial) + ": got (" +
                                got.first + "," + std::to_string(got.second) +
                                ") want (" + want.first + "," +
                                std::to_string(want.second) + ")");
        fallbacks += got.second ? 1 : 0;
    }
    detail << "1000 configurations, " << fallbacks << " fallbacks, " << ties_injected
           << " duplicate latents";
    expect(fallbacks > 0, "test never exercised the fallback path");
    return true;
}

// ---------------------------------------------------------------------------
// criterion 4: oracle-baseline correctness
// ---------------------------------------------------------------------------

bool criterion_oracle_baseline(std::ostream& detail) {
    for (int instance = 0; instance < 20; ++instance) {
        Rng rng(5000 + instance);
        const auto strategy = instance % 2 == 0 ? sampling::Strategy::Patient
                                                : sampling::Strategy::Image;
        auto ds = small_phantoms(9000 + instance, 5, 4, 16);
        models::UnetConfig cfg;
        cfg.base_channels = 4;
        auto seg = models::SegModel::init(cfg, 700 + instance);

        auto pool = strategy == sampling::Strategy::Patient
                        ? ds.patient_ids(data::Split::Train)
                        : ds.sample_ids(data::Split::Train);
        const int m = 1 + static_cast<int>(rng.next_below(pool.size()));

        // exhaustive evaluation + stable sort
        std::vector<std::pair<double, std::string>> scored;
        for (const auto& id : pool) {
            std::vector<std::string> slices;
            if (strategy == sampling::Strategy::Image) {
                slices = {id};
            } else {
                for (std::size_t idx : ds.patient(id).sample_indices) {
                    slices.push_back(ds.samples[idx].sample_id);
                }
            }
            double acc = 0.0;
            for (const auto& sid : slices) {
                auto probs = sampling::predict_probabilities(seg, ds, {sid});
                acc += sampling::dice_score(probs[0], ds.sample(sid).mask, 0.5);
            }
            scored.emplace_back(acc / static_cast<double>(slices.size()), id);
        }
        std::stable_sort(scored.begin(), scored.end());

        auto result = sampling::suggest_oracle(seg, ds, pool, strategy, m);
        expect(static_cast<int>(result.selected_ids.size()) == m, "wrong suggestion count");
        for (int i = 0; i < m; ++i) {
            expect(result.selected_ids[i] == scored[i].second,
                   "instance " + std::to_string(instance) + " rank " + std::to_string(i) +
                       ": got " + result.selected_ids[i] + " want " + scored[i].second);
        }
    }
    detail << "20 model/pool instances, exact id-sequence match";
    return true;
}

// ---------------------------------------------------------------------------
// criterion 5: degenerate-chain equivalence
// ---------------------------------------------------------------------------

bool criterion_degenerate_chain(std::ostream& detail) {
    for (int scenario = 0; scenario < 20; ++scenario) {
        Rng rng(11000 + scenario);
        const auto strategy = scenario % 2 == 0 ? sampling::Strategy::Patient
                                                : sampling::Strategy::Image;
        auto ds = small_phantoms(2000 + scenario, 6, 3, 16);
        models::VaeConfig vcfg;
        vcfg.latent_dim = 5;
        vcfg.image_hw = 16;
        auto vae = models::VaeModel::init(vcfg, 300 + scenario);
        models::UnetConfig ucfg;
        ucfg.base_channels = 4;
        auto seg = models::SegModel::init(ucfg, 400 + scenario);

        auto units = strategy == sampling::Strategy::Patient
                         ? ds.patient_ids(data::Split::Train)
                         : ds.sample_ids(data::Split::Train);
        const std::size_t n_annotated = 2 + rng.next_below(units.size() / 2);
        std::vector<std::string> annotated(units.begin(), units.begin() + n_annotated);
        std::vector<std::string> pool(units.begin() + n_annotated, units.end());
        auto index = sampling::build_latent_index(vae, ds, pool, strategy);
        const int m = static_cast<int>(
            std::min<std::size_t>(annotated.size(), pool.size()));

        auto got = sampling::suggest_gradient_guided(seg, vae, ds, annotated, index, m,
                                                     0.0, 180.0, strategy);

        // per-source nearest neighbour with sequential exclusion
        auto unit_latent = [&](const std::string& unit) {
            std::vector<std::string> slices;
            if (strategy == sampling::Strategy::Image) {
                slices = {unit};
            } else {
                for (std::size_t idx : ds.patient(unit).sample_indices) {
                    slices.push_back(ds.samples[idx].sample_id);
                }
            }
            std::vector<double> z(5, 0.0);
            for (const auto& sid : slices) {
                auto zi = encode_latent(vae, sampling::sample_image_tensor(ds, sid));
                for (int i = 0; i < 5; ++i) z[i] += zi[i];
            }
            for (auto& v : z) v /= static_cast<double>(slices.size());
            return z;
        };

        std::set<std::string> excluded;
        std::vector<std::string> expected;
        for (int k = 0; k < m; ++k) {
            auto z = unit_latent(annotated[static_cast<std::size_t>(k)]);
            std::vector<std::pair<double, std::string>> dists;
            for (const auto& e : index.entries) {
                if (excluded.count(e.id)) continue;
                double d2 = 0.0;
                for (int i = 0; i < 5; ++i) {
                    const double d = e.z[i] - z[i];
                    d2 += d * d;
                }
                dists.emplace_back(d2, e.id);
            }
            std::sort(dists.begin(), dists.end());
            expected.push_back(dists.front().second);
            excluded.insert(dists.front().second);
        }
        expect(got.selected_ids == expected,
               "scenario " + std::to_string(scenario) + " diverged from the NN chain");
        expect(got.fallback_count == m, "alpha=0 queries must all fall back");
    }
    detail << "20 seeded scenarios, both strategies";
    return true;
}

// ---------------------------------------------------------------------------
// criterion 6: run determinism
// ---------------------------------------------------------------------------

bool criterion_run_determinism(std::ostream& detail) {
    const fs::path dir = fs::temp_directory_path() / "ggsa_acc_determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto config = dir / "plan.txt";
    {
        std::ofstream out(config);
        out << "scenario = scratch\nstrategy = patient\nmethod = random,gradient,oracle\n"
               "budget = 4\nrepeats = 2\nseed = 17\nepochs_initial = 2\nepochs_after = 2\n"
               "vae_epochs = 2\npatients_a = 8\ntest_a = 2\nslices_per_patient = 4\n"
               "image_hw = 16\nbatch_size = 8\nrecord_walltime = false\n";
    }
    run_cli("run --config " + config.string() + " --out-dir " + (dir / "r1").string() +
                " --jobs 1",
            0);
    run_cli("run --config " + config.string() + " --out-dir " + (dir / "r2").string() +
                " --jobs 1",
            0);
    run_cli("run --config " + config.string() + " --out-dir " + (dir / "r4").string() +
                " --jobs 4",
            0);
    const auto csv1 = slurp(dir / "r1" / "rounds.csv");
    const auto csv2 = slurp(dir / "r2" / "rounds.csv");
    const auto csv4 = slurp(dir / "r4" / "rounds.csv");
    expect(!csv1.empty(), "empty CSV");
    expect(csv1 == csv2, "two identical executions differ");
    expect(csv1 == csv4, "jobs=1 and jobs=4 differ");
    detail << "byte-identical rounds.csv across executions and jobs settings ("
           << std::count(csv1.begin(), csv1.end(), '\n') - 1 << " rows)";
    fs::remove_all(dir);
    return true;
}

// ---------------------------------------------------------------------------
// criterion 7: VAE learning signal
// ---------------------------------------------------------------------------

bool criterion_vae_learning(std::ostream& detail) {
    auto ds = small_phantoms(60601, 60, 8, 32);
    std::vector<TensorPtr> images;
    for (const auto& s : ds.samples) {
        images.push_back(Tensor::make(
            {32, 32}, std::vector<double>(s.image.begin(), s.image.end())));
    }
    models::VaeConfig cfg; // latent_dim 5
    auto vae = models::VaeModel::init(cfg, 77);
    auto history = train_vae(vae, images, 50, 1e-4, 77);
    expect(history.epoch_loss.size() == 50, "expected 50 recorded epochs");
    const double first = history.epoch_loss.front();
    const double last = history.epoch_loss.back();
    detail << "epoch-1 loss " << first << ", epoch-50 loss " << last << " ("
           << (1.0 - last / first) * 100.0 << "% reduction)";
    expect(last <= 0.5 * first, "VAE loss fell by less than 50%");
    return true;
}

// ---------------------------------------------------------------------------
// criterion 8: trend reproduction
// ---------------------------------------------------------------------------

bool criterion_trend(std::ostream& detail) {
    const auto t0 = std::chrono::steady_clock::now();

    harness::ExperimentPlan plan;
    plan.scenario = harness::Scenario::Scratch;
    plan.strategy = sampling::Strategy::Patient;
    plan.methods = {sampling::Method::Random, sampling::Method::Gradient,
                    sampling::Method::Oracle};
    plan.budgets = {8, 12, 16, 20};
    plan.repeats = 10;
    plan.seed = 1;
    plan.epochs_initial = 10;
    plan.epochs_after = 10;
    plan.vae_epochs = 30;
    plan.patients_a = 60;
    plan.test_a = 20;
    plan.slices_per_patient = 6;
    plan.image_hw = 32;
    plan.record_walltime = false;
    plan.jobs = 4;

    auto reports = harness::run_experiment(plan);
    std::map<std::pair<int, int>, std::vector<double>> cells; // (method, budget) -> dices
    for (const auto& r : reports) {
        cells[{static_cast<int>(r.method), r.budget}].push_back(r.dice);
    }
    auto mean_of = [&](sampling::Method m, int b) {
        const auto& v = cells.at({static_cast<int>(m), b});
        double acc = 0.0;
        for (double d : v) acc += d;
        return acc / static_cast<double>(v.size());
    };

    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                            .count();
    bool ok = true;
    std::ostringstream grid;
    for (int b : plan.budgets) {
        const double r = mean_of(sampling::Method::Random, b);
        const double g = mean_of(sampling::Method::Gradient, b);
        const double o = mean_of(sampling::Method::Oracle, b);
        grid << " b" << b << ": rnd=" << r << " grad=" << g << " orc=" << o << ";";
        if (g < r) ok = false;
        if (g < o - 0.03) ok = false;
    }
    detail << grid.str() << " wall=" << secs << "s";
    expect(ok, "trend violated:" + grid.str());
    expect(secs < 1800.0, "trend experiment exceeded 30 minutes");
    return true;
}

// ---------------------------------------------------------------------------
// criterion 9: transfer scenario contract
// ---------------------------------------------------------------------------

bool criterion_transfer(std::ostream& detail) {
    harness::ExperimentPlan plan;
    plan.scenario = harness::Scenario::Transfer;
    plan.strategy = sampling::Strategy::Patient;
    plan.methods = {sampling::Method::Gradient};
    plan.budgets = {12};
    plan.repeats = 10;
    plan.seed = 3;
    plan.epochs_initial = 10;
    plan.epochs_after = 10;
    plan.pretrain_epochs = 20;
    plan.vae_epochs = 30;
    plan.patients_a = 30;
    plan.test_a = 0;
    plan.patients_b = 60;
    plan.test_b = 20;
    plan.slices_per_patient = 6;
    plan.image_hw = 32;
    plan.record_walltime = false;
    plan.jobs = 4;

    auto ctx = harness::build_context(plan);
    for (const auto& unit : ctx.pool_units) {
        expect(unit[0] == 'B', "pool unit " + unit + " is not from site B");
    }
    for (const auto& sid : ctx.test_slices) {
        expect(sid[0] == 'B', "test slice " + sid + " is not from site B");
    }

    // spot-check two rounds: every suggested unit belongs to site B
    for (std::uint64_t seed : {plan.seed, plan.seed + 5}) {
        harness::ExperimentConfig cfg{plan, sampling::Method::Gradient, 12};
        harness::RoundArtifacts art;
        harness::run_round(cfg, seed, ctx, &art);
        expect(!art.suggested_units.empty(), "round produced no suggestions");
        for (const auto& unit : art.suggested_units) {
            expect(unit[0] == 'B', "suggested unit " + unit + " is not from site B");
        }
    }

    const double unadapted =
        harness::evaluate_dice(*ctx.pretrained, ctx.dataset, ctx.test_slices, plan.threshold);

    auto reports = harness::run_experiment(plan, ctx);
    double fine_tuned = 0.0;
    for (const auto& r : reports) fine_tuned += r.dice;
    fine_tuned /= static_cast<double>(reports.size());

    detail << "unadapted=" << unadapted << " fine-tuned(mean of " << reports.size()
           << ")=" << fine_tuned << " gain=" << fine_tuned - unadapted;
    expect(fine_tuned - unadapted >= 0.02, "fine-tuning gain below 0.02");
    return true;
}

// ---------------------------------------------------------------------------
// criterion 10: format integrity
// ---------------------------------------------------------------------------

bool criterion_format_integrity(std::ostream& detail) {
    const fs::path dir = fs::temp_directory_path() / "ggsa_acc_formats";
    fs::remove_all(dir);
    fs::create_directories(dir);

    // dataset round-trip
    auto ds = small_phantoms(808, 3, 4, 16, 1);
    const auto ds_dir = dir / "ds";
    data::write_dataset(ds, ds_dir.string());
    auto loaded = data::read_dataset(ds_dir.string());
    expect(loaded.manifest == ds.manifest, "dataset manifest round-trip diverged");
    expect(loaded.samples.size() == ds.samples.size(), "sample count diverged");
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        expect(loaded.samples[i] == ds.samples[i], "sample round-trip diverged");
    }

    // checkpoint round-trip
    models::VaeConfig vcfg;
    vcfg.latent_dim = 3;
    vcfg.image_hw = 16;
    auto vae = models::VaeModel::init(vcfg, 5);
    const auto ck_path = dir / "model.vae.ggmd";
    models::save_vae(ck_path.string(), vae);
    auto vae2 = models::load_vae(ck_path.string());
    for (std::size_t k = 0; k < vae.params.size(); ++k) {
        expect(vae.params.items()[k].second->values ==
                   vae2.params.items()[k].second->values,
               "checkpoint round-trip diverged");
    }

    // every single-byte corruption of one slice file is detected
    const auto victim = ds_dir / (ds.samples[0].sample_id + ".ggs");
    const std::string original = slurp(victim);
    std::size_t detected = 0;
    for (std::size_t pos = 0; pos < original.size(); ++pos) {
        std::string corrupted = original;
        corrupted[pos] = static_cast<char>(corrupted[pos] ^ 0x5a);
        {
            std::ofstream out(victim, std::ios::binary | std::ios::trunc);
            out.write(corrupted.data(), static_cast<std::streamsize>(corrupted.size()));
        }
        try {
            (void)data::read_dataset(ds_dir.string());
            expect(false, "undetected corruption at offset " + std::to_string(pos));
        } catch (const Error&) {
            ++detected;
        }
    }
    {
        std::ofstream out(victim, std::ios::binary | std::ios::trunc);
        out.write(original.data(), static_cast<std::streamsize>(original.size()));
    }

    // checkpoint corruption: full header sweep plus random body positions
    const std::string ck_bytes = slurp(ck_path);
    std::size_t ck_detected = 0, ck_trials = 0;
    Rng rng(9);
    std::set<std::size_t> positions;
    for (std::size_t pos = 0; pos < std::min<std::size_t>(256, ck_bytes.size()); ++pos) {
        positions.insert(pos);
    }
    for (std::size_t k = 0; k < 512; ++k) positions.insert(rng.next_below(ck_bytes.size()));
    for (std::size_t pos = ck_bytes.size() - 8; pos < ck_bytes.size(); ++pos) {
        positions.insert(pos);
    }
    for (std::size_t pos : positions) {
        std::string corrupted = ck_bytes;
        corrupted[pos] = static_cast<char>(corrupted[pos] ^ 0x5a);
        {
            std::ofstream out(ck_path, std::ios::binary | std::ios::trunc);
            out.write(corrupted.data(), static_cast<std::streamsize>(corrupted.size()));
        }
        ++ck_trials;
        try {
            (void)models::load_vae(ck_path.string());
            expect(false, "undetected checkpoint corruption at offset " + std::to_string(pos));
        } catch (const Error&) {
            ++ck_detected;
        }
    }

    detail << "slice flips " << detected << "/" << original.size() << ", checkpoint flips "
           << ck_detected << "/" << ck_trials;
    fs::remove_all(dir);
    return true;
}

struct Criterion {
    int id;
    const char* title;
    std::function<bool(std::ostream&)> run;
};

} // namespace

int main(int argc, char** argv) {
    std::vector<Criterion> criteria = {
        {1, "gradient correctness (finite differences)", criterion_gradients},
        {2, "loss identities", criterion_loss_identities},
        {3, "constrained-NN oracle equivalence", criterion_constrained_nn},
        {4, "oracle-baseline correctness", criterion_oracle_baseline},
        {5, "degenerate-chain equivalence", criterion_degenerate_chain},
        {6, "run determinism", criterion_run_determinism},
        {7, "VAE learning signal", criterion_vae_learning},
        {8, "trend reproduction", criterion_trend},
        {9, "transfer scenario contract", criterion_transfer},
        {10, "format integrity", criterion_format_integrity},
    };

    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
            only.insert(std::atoi(argv[++i]));
        } else if (std::strcmp(argv[i], "--list") == 0) {
            for (const auto& c : criteria) {
                std::cout << c.id << ": " << c.title << "\n";
            }
            return 0;
        } else {
            std::cerr << "usage: acceptance [--list] [--only N]...\n";
            return 2;
        }
    }

    int failures = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        std::ostringstream detail;
        bool ok = false;
        std::string why;
        try {
            ok = c.run(detail);
        } catch (const CheckFailure& f) {
            why = f.message;
        } catch (const std::exception& e) {
            why = e.what();
        }
        if (ok) {
            std::cout << "[PASS] criterion " << c.id << ": " << c.title << " ("
                      << detail.str() << ")\n";
        } else {
            std::cout << "[FAIL] criterion " << c.id << ": " << c.title << " — " << why
                      << "\n";
            ++failures;
        }
        std::cout.flush();
    }
    return failures;
}
