#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "ggsa/harness.hpp"

namespace ggsa::harness {

using sampling::Method;
using sampling::Strategy;

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> items;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) items.push_back(item);
    }
    return items;
}

long parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const long v = std::stol(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        fail(ErrorKind::Config, "key '" + key + "' needs an integer, got '" + value + "'");
    }
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        fail(ErrorKind::Config, "key '" + key + "' needs a number, got '" + value + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    fail(ErrorKind::Config, "key '" + key + "' needs true|false, got '" + value + "'");
}

} // namespace

ExperimentPlan parse_plan_text(const std::string& text, const std::string& origin) {
    ExperimentPlan plan;

    const std::map<std::string, std::function<void(const std::string&)>> setters = {
        {"scenario", [&](const std::string& v) { plan.scenario = parse_scenario(v); }},
        {"strategy", [&](const std::string& v) { plan.strategy = sampling::parse_strategy(v); }},
        {"method",
         [&](const std::string& v) {
             plan.methods.clear();
             for (const auto& item : split_list(v)) {
                 plan.methods.push_back(sampling::parse_method(item));
             }
         }},
        {"budget",
         [&](const std::string& v) {
             plan.budgets.clear();
             for (const auto& item : split_list(v)) {
                 plan.budgets.push_back(static_cast<int>(parse_int("budget", item)));
             }
         }},
        {"repeats", [&](const std::string& v) { plan.repeats = static_cast<int>(parse_int("repeats", v)); }},
        {"seed", [&](const std::string& v) { plan.seed = static_cast<std::uint64_t>(parse_int("seed", v)); }},
        {"epochs_initial", [&](const std::string& v) { plan.epochs_initial = static_cast<int>(parse_int("epochs_initial", v)); }},
        {"epochs_after", [&](const std::string& v) { plan.epochs_after = static_cast<int>(parse_int("epochs_after", v)); }},
        {"pretrain_epochs", [&](const std::string& v) { plan.pretrain_epochs = static_cast<int>(parse_int("pretrain_epochs", v)); }},
        {"rounds", [&](const std::string& v) { plan.rounds = static_cast<int>(parse_int("rounds", v)); }},
        {"seg_lr", [&](const std::string& v) { plan.seg_lr = parse_double("seg_lr", v); }},
        {"alpha", [&](const std::string& v) { plan.alpha = parse_double("alpha", v); }},
        {"theta_max", [&](const std::string& v) { plan.theta_max = parse_double("theta_max", v); }},
        {"threshold", [&](const std::string& v) { plan.threshold = parse_double("threshold", v); }},
        {"batch_size", [&](const std::string& v) { plan.batch_size = static_cast<int>(parse_int("batch_size", v)); }},
        {"vae_epochs", [&](const std::string& v) { plan.vae_epochs = static_cast<int>(parse_int("vae_epochs", v)); }},
        {"vae_lr", [&](const std::string& v) { plan.vae_lr = parse_double("vae_lr", v); }},
        {"latent_dim", [&](const std::string& v) { plan.latent_dim = static_cast<int>(parse_int("latent_dim", v)); }},
        {"dataset_dir", [&](const std::string& v) { plan.dataset_dir = v; }},
        {"dataset_seed", [&](const std::string& v) { plan.dataset_seed = static_cast<std::uint64_t>(parse_int("dataset_seed", v)); }},
        {"patients_a", [&](const std::string& v) { plan.patients_a = static_cast<int>(parse_int("patients_a", v)); }},
        {"test_a", [&](const std::string& v) { plan.test_a = static_cast<int>(parse_int("test_a", v)); }},
        {"patients_b", [&](const std::string& v) { plan.patients_b = static_cast<int>(parse_int("patients_b", v)); }},
        {"test_b", [&](const std::string& v) { plan.test_b = static_cast<int>(parse_int("test_b", v)); }},
        {"slices_per_patient", [&](const std::string& v) { plan.slices_per_patient = static_cast<int>(parse_int("slices_per_patient", v)); }},
        {"image_hw", [&](const std::string& v) { plan.image_hw = static_cast<int>(parse_int("image_hw", v)); }},
        {"record_walltime", [&](const std::string& v) { plan.record_walltime = parse_bool("record_walltime", v); }},
        {"jobs", [&](const std::string& v) { plan.jobs = static_cast<int>(parse_int("jobs", v)); }},
    };

    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            fail(ErrorKind::Config, origin + ":" + std::to_string(lineno) +
                                        ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        auto it = setters.find(key);
        if (it == setters.end()) {
            fail(ErrorKind::Config, origin + ":" + std::to_string(lineno) +
                                        ": unknown key '" + key + "'");
        }
        it->second(value);
    }
    return plan;
}

ExperimentPlan parse_plan_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Filesystem, "cannot open config file " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_plan_text(buffer.str(), path);
}

std::string describe_plan(const ExperimentPlan& plan) {
    std::ostringstream os;
    os << "scenario = " << scenario_name(plan.scenario) << "\n";
    os << "strategy = " << sampling::strategy_name(plan.strategy) << "\n";
    os << "method = ";
    for (std::size_t i = 0; i < plan.methods.size(); ++i) {
        if (i) os << ",";
        os << sampling::method_name(plan.methods[i]);
    }
    os << "\n";
    os << "budget = ";
    for (std::size_t i = 0; i < plan.budgets.size(); ++i) {
        if (i) os << ",";
        os << plan.budgets[i];
    }
    os << "\n";
    os << "repeats = " << plan.repeats << "\n";
    os << "seed = " << plan.seed << "\n";
    os << "epochs_initial = " << plan.epochs_initial << "\n";
    os << "epochs_after = " << plan.epochs_after << "\n";
    os << "pretrain_epochs = " << plan.pretrain_epochs << "\n";
    os << "rounds = " << plan.rounds << "\n";
    os << "seg_lr = " << plan.seg_lr << "\n";
    os << "alpha = " << plan.alpha << "\n";
    os << "theta_max = " << plan.theta_max << "\n";
    os << "threshold = " << plan.threshold << "\n";
    os << "batch_size = " << plan.batch_size << "\n";
    os << "vae_epochs = " << plan.vae_epochs << "\n";
    os << "vae_lr = " << plan.vae_lr << "\n";
    os << "latent_dim = " << plan.latent_dim << "\n";
    os << "dataset_dir = " << plan.dataset_dir << "\n";
    os << "dataset_seed = " << plan.dataset_seed << "\n";
    os << "patients_a = " << plan.patients_a << "\n";
    os << "test_a = " << plan.test_a << "\n";
    os << "patients_b = " << plan.patients_b << "\n";
    os << "test_b = " << plan.test_b << "\n";
    os << "slices_per_patient = " << plan.slices_per_patient << "\n";
    os << "image_hw = " << plan.image_hw << "\n";
    os << "record_walltime = " << (plan.record_walltime ? "true" : "false") << "\n";
    os << "jobs = " << plan.jobs << "\n";
    return os.str();
}

} // namespace ggsa::harness
