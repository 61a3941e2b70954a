#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "ggsa/harness.hpp"

namespace ggsa::harness {

using sampling::Method;
using sampling::Strategy;

namespace {

// Shortest decimal form that parses back to the same double.
std::string format_double(double v) {
    char buf[40];
    for (int precision = 1; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

struct RowKey {
    int scenario, strategy, method, budget;
    std::uint64_t seed;
    auto operator<=>(const RowKey&) const = default;
};

RowKey key_of(const RoundReport& r) {
    return {static_cast<int>(r.scenario), static_cast<int>(r.strategy),
            static_cast<int>(r.method), r.budget, r.seed};
}

const char* kCsvHeader =
    "scenario,method,strategy,budget,seed,dice,annotated_slices,context_slices,"
    "fallbacks,wall_ms";

} // namespace

std::string report_csv_text(const std::vector<RoundReport>& reports) {
    std::vector<RoundReport> sorted = reports;
    std::sort(sorted.begin(), sorted.end(),
              [](const RoundReport& a, const RoundReport& b) { return key_of(a) < key_of(b); });

    std::ostringstream os;
    os << kCsvHeader << "\n";
    for (const auto& r : sorted) {
        os << scenario_name(r.scenario) << ',' << sampling::method_name(r.method) << ','
           << sampling::strategy_name(r.strategy) << ',' << r.budget << ',' << r.seed
           << ',' << format_double(r.dice) << ',' << r.annotated_slices << ','
           << r.context_views << ',' << r.fallbacks << ',' << r.wall_ms << "\n";
    }
    return os.str();
}

std::vector<RoundReport> parse_report_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader) {
        fail(ErrorKind::Format, "report CSV header mismatch");
    }
    std::vector<RoundReport> reports;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 10) {
            fail(ErrorKind::Format, "report CSV row needs 10 fields: " + line);
        }
        RoundReport r;
        r.scenario = parse_scenario(fields[0]);
        r.method = sampling::parse_method(fields[1]);
        r.strategy = sampling::parse_strategy(fields[2]);
        r.budget = std::stoi(fields[3]);
        r.seed = std::stoull(fields[4]);
        r.dice = std::strtod(fields[5].c_str(), nullptr);
        r.annotated_slices = std::stoll(fields[6]);
        r.context_views = std::stoll(fields[7]);
        r.fallbacks = std::stoi(fields[8]);
        r.wall_ms = std::stoll(fields[9]);
        reports.push_back(r);
    }
    return reports;
}

std::vector<std::tuple<Scenario, Strategy, Method, std::vector<SeriesPoint>>>
aggregate_reports(const std::vector<RoundReport>& reports) {
    std::map<std::tuple<int, int, int>, std::map<int, std::vector<double>>> cells;
    for (const auto& r : reports) {
        cells[{static_cast<int>(r.scenario), static_cast<int>(r.strategy),
               static_cast<int>(r.method)}][r.budget]
            .push_back(r.dice);
    }
    std::vector<std::tuple<Scenario, Strategy, Method, std::vector<SeriesPoint>>> out;
    for (const auto& [key, budgets] : cells) {
        std::vector<SeriesPoint> series;
        for (const auto& [budget, dices] : budgets) {
            double mean = 0.0;
            for (double d : dices) mean += d;
            mean /= static_cast<double>(dices.size());
            double var = 0.0;
            for (double d : dices) var += (d - mean) * (d - mean);
            var = dices.size() > 1 ? var / static_cast<double>(dices.size() - 1) : 0.0;
            series.push_back({budget, mean, std::sqrt(var)});
        }
        out.emplace_back(static_cast<Scenario>(std::get<0>(key)),
                         static_cast<Strategy>(std::get<1>(key)),
                         static_cast<Method>(std::get<2>(key)), std::move(series));
    }
    return out;
}

namespace {

const char* method_color(Method m) {
    switch (m) {
        case Method::Random: return "#d62728";
        case Method::Gradient: return "#1f77b4";
        case Method::Oracle: return "#2ca02c";
    }
    return "#000000";
}

// One static line chart: budget on x, Dice on y, a mean line plus a +-1 std
// band per method.
std::string render_chart(
    Scenario scenario, Strategy strategy,
    const std::vector<std::pair<Method, std::vector<SeriesPoint>>>& series_set) {
    const double width = 640, height = 420;
    const double left = 64, right = 480, top = 48, bottom = 360;

    double x_min = 1e300, x_max = -1e300, y_min = 1.0, y_max = 0.0;
    for (const auto& [method, series] : series_set) {
        for (const auto& p : series) {
            x_min = std::min(x_min, static_cast<double>(p.budget));
            x_max = std::max(x_max, static_cast<double>(p.budget));
            y_min = std::min(y_min, p.mean - p.stdev);
            y_max = std::max(y_max, p.mean + p.stdev);
        }
    }
    if (x_max <= x_min) x_max = x_min + 1.0;
    y_min = std::max(0.0, y_min - 0.03);
    y_max = std::min(1.0, y_max + 0.03);
    if (y_max <= y_min) y_max = y_min + 0.01;

    auto sx = [&](double b) { return left + (b - x_min) / (x_max - x_min) * (right - left); };
    auto sy = [&](double d) { return bottom - (d - y_min) / (y_max - y_min) * (bottom - top); };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
       << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    os << "  <rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    os << "  <text x=\"" << (left + right) / 2 << "\" y=\"24\" text-anchor=\"middle\" "
       << "font-family=\"sans-serif\" font-size=\"15\">Dice vs budget ("
       << scenario_name(scenario) << ", " << sampling::strategy_name(strategy)
       << "-wise)</text>\n";

    // axes
    os << "  <line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << right
       << "\" y2=\"" << bottom << "\" stroke=\"#333\"/>\n";
    os << "  <line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
       << bottom << "\" stroke=\"#333\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double d = y_min + (y_max - y_min) * i / 4.0;
        os << "  <text x=\"" << left - 8 << "\" y=\"" << sy(d) + 4
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">";
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%.3f", d);
        os << buf << "</text>\n";
        os << "  <line x1=\"" << left << "\" y1=\"" << sy(d) << "\" x2=\"" << right
           << "\" y2=\"" << sy(d) << "\" stroke=\"#ddd\"/>\n";
    }

    std::vector<int> budgets;
    for (const auto& [method, series] : series_set) {
        for (const auto& p : series) budgets.push_back(p.budget);
    }
    std::sort(budgets.begin(), budgets.end());
    budgets.erase(std::unique(budgets.begin(), budgets.end()), budgets.end());
    for (int b : budgets) {
        os << "  <text x=\"" << sx(b) << "\" y=\"" << bottom + 18
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << b
           << "</text>\n";
    }
    os << "  <text x=\"" << (left + right) / 2 << "\" y=\"" << bottom + 38
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
       << "annotated units (budget)</text>\n";
    os << "  <text x=\"18\" y=\"" << (top + bottom) / 2
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
       << "transform=\"rotate(-90 18 " << (top + bottom) / 2 << ")\">mean Dice</text>\n";

    double legend_y = top + 10;
    for (const auto& [method, series] : series_set) {
        if (series.empty()) continue;
        const char* color = method_color(method);

        // +-1 std band
        std::ostringstream band;
        for (const auto& p : series) band << sx(p.budget) << "," << sy(p.mean + p.stdev) << " ";
        for (auto it = series.rbegin(); it != series.rend(); ++it) {
            band << sx(it->budget) << "," << sy(it->mean - it->stdev) << " ";
        }
        os << "  <polygon points=\"" << band.str() << "\" fill=\"" << color
           << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";

        std::ostringstream line;
        for (const auto& p : series) line << sx(p.budget) << "," << sy(p.mean) << " ";
        os << "  <polyline points=\"" << line.str() << "\" fill=\"none\" stroke=\"" << color
           << "\" stroke-width=\"2\"/>\n";
        for (const auto& p : series) {
            os << "  <circle cx=\"" << sx(p.budget) << "\" cy=\"" << sy(p.mean)
               << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        }

        os << "  <line x1=\"" << right + 16 << "\" y1=\"" << legend_y << "\" x2=\""
           << right + 44 << "\" y2=\"" << legend_y << "\" stroke=\"" << color
           << "\" stroke-width=\"2\"/>\n";
        os << "  <text x=\"" << right + 50 << "\" y=\"" << legend_y + 4
           << "\" font-family=\"sans-serif\" font-size=\"12\">"
           << sampling::method_name(method) << "</text>\n";
        legend_y += 20;
    }
    os << "</svg>\n";
    return os.str();
}

} // namespace

void emit_report(const std::vector<RoundReport>& reports, const std::string& out_dir) {
    if (reports.empty()) fail(ErrorKind::EmptyInput, "no round reports to emit");
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) fail(ErrorKind::Filesystem, "cannot create " + out_dir);

    {
        std::ofstream csv(fs::path(out_dir) / "rounds.csv", std::ios::trunc);
        if (!csv) fail(ErrorKind::Filesystem, "cannot write rounds.csv in " + out_dir);
        csv << report_csv_text(reports);
    }

    // group aggregates per chart
    std::map<std::pair<int, int>, std::vector<std::pair<Method, std::vector<SeriesPoint>>>>
        charts;
    for (auto& [scenario, strategy, method, series] : aggregate_reports(reports)) {
        charts[{static_cast<int>(scenario), static_cast<int>(strategy)}].emplace_back(
            method, series);
    }
    for (auto& [key, series_set] : charts) {
        std::sort(series_set.begin(), series_set.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        const auto scenario = static_cast<Scenario>(key.first);
        const auto strategy = static_cast<Strategy>(key.second);
        const std::string name = std::string("dice_") + scenario_name(scenario) + "_" +
                                 sampling::strategy_name(strategy) + ".svg";
        std::ofstream svg(fs::path(out_dir) / name, std::ios::trunc);
        if (!svg) fail(ErrorKind::Filesystem, "cannot write " + name);
        svg << render_chart(scenario, strategy, series_set);
    }
}

} // namespace ggsa::harness
