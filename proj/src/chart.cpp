#include "trendproxy/chart.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include <fmt/format.h>

#include "trendproxy/common.hpp"
#include "trendproxy/csv.hpp"
#include "trendproxy/screening.hpp"
#include "trendproxy/trends.hpp"

namespace trendproxy::chart {

namespace {

constexpr double kWidth = 900.0;
constexpr double kPanelHeight = 160.0;
constexpr double kMargin = 40.0;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string escape(std::string_view s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += ch;
        }
    }
    return out;
}

std::vector<double> zscore(std::vector<double> v) {
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (double x : v) {
        if (std::isnan(x)) continue;
        sum += x;
        ++n;
    }
    if (n == 0) return v;
    const double mean = sum / static_cast<double>(n);
    for (double x : v) {
        if (!std::isnan(x)) sq += (x - mean) * (x - mean);
    }
    const double sd = std::sqrt(sq / static_cast<double>(n));
    for (double& x : v) {
        if (!std::isnan(x)) x = sd > 0.0 ? (x - mean) / sd : 0.0;
    }
    return v;
}

}  // namespace

void write_svg(const std::filesystem::path& path, const std::string& title, const std::vector<Panel>& panels) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
    const double height = kMargin + static_cast<double>(panels.size()) * (kPanelHeight + kMargin);
    out << fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif">)",
                       kWidth, height)
        << '\n';
    out << fmt::format(R"(<text x="{}" y="24" font-size="16">{}</text>)", kMargin, escape(title)) << '\n';

    for (std::size_t p = 0; p < panels.size(); ++p) {
        const auto& panel = panels[p];
        const double top = kMargin + static_cast<double>(p) * (kPanelHeight + kMargin) + 16.0;
        const double left = kMargin, right = kWidth - kMargin, bottom = top + kPanelHeight;
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        std::size_t n = 0;
        for (const auto& l : panel.lines) {
            n = std::max(n, l.y.size());
            for (double v : l.y) {
                if (std::isnan(v)) continue;
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
        if (!(lo <= hi)) lo = 0.0, hi = 1.0;
        if (hi == lo) hi = lo + 1.0;
        out << fmt::format(R"(<text x="{}" y="{}" font-size="12">{}</text>)", left, top - 4.0, escape(panel.title))
            << '\n';
        out << fmt::format(R"(<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#999"/>)", left, top,
                           right - left, kPanelHeight)
            << '\n';
        out << fmt::format(R"(<text x="{}" y="{}" font-size="10">{:.3g}</text>)", 2.0, top + 10.0, hi) << '\n';
        out << fmt::format(R"(<text x="{}" y="{}" font-size="10">{:.3g}</text>)", 2.0, bottom, lo) << '\n';

        for (std::size_t li = 0; li < panel.lines.size(); ++li) {
            const auto& line = panel.lines[li];
            std::string d;
            bool pen = false;
            for (std::size_t i = 0; i < line.y.size(); ++i) {
                if (std::isnan(line.y[i])) {
                    pen = false;
                    continue;
                }
                const double x = left + (n > 1 ? (right - left) * static_cast<double>(i) / static_cast<double>(n - 1) : 0.0);
                const double y = bottom - (line.y[i] - lo) / (hi - lo) * kPanelHeight;
                d += fmt::format("{}{:.1f},{:.1f} ", pen ? "L" : "M", x, y);
                pen = true;
            }
            out << fmt::format(R"(<path d="{}" fill="none" stroke="{}" stroke-width="1"/>)", d, line.color) << '\n';
            out << fmt::format(R"(<text x="{}" y="{}" font-size="10" fill="{}">{}</text>)",
                               right - 160.0, top + 12.0 + 12.0 * static_cast<double>(li), line.color,
                               escape(line.label))
                << '\n';
        }
    }
    out << "</svg>\n";
}

std::size_t write_charts(const std::filesystem::path& screen_dir, const std::filesystem::path& report_dir,
                         const std::filesystem::path& out_dir) {
    // Calendar signal per meter next to its best-fit topic.
    const auto signals = csv::Table::read(screen_dir / "calendar_signals.csv");
    const auto results = screening::read_screening_results(screen_dir / "screening_results.csv");
    auto trend_series = trends::load_trend_csv(screen_dir / "trends.csv");
    std::map<std::pair<std::string, std::string>, trends::TrendSeries> trend_of;
    for (auto& s : trend_series) trend_of.emplace(std::pair{s.topic_id, s.geo}, trends::standardize_by_year(s, {true}));

    std::map<std::string, std::vector<std::pair<Date, double>>> by_meter;
    const auto c_id = signals.column("meter_id"), c_date = signals.column("date"), c_score = signals.column("score");
    for (std::size_t i = 0; i < signals.rows(); ++i) {
        const auto& row = signals.row(i);
        by_meter[row[c_id]].emplace_back(parse_date(row[c_date]), csv::parse_double(row[c_score]).value_or(kNaN));
    }
    std::vector<Panel> panels;
    for (const auto& e : results) {
        auto it = by_meter.find(e.meter_id);
        if (it == by_meter.end()) continue;
        Panel panel;
        std::vector<double> score;
        for (const auto& [_, v] : it->second) score.push_back(v);
        panel.lines.push_back({"calendar (z)", "#1f77b4", zscore(score)});
        if (e.result) {
            panel.title = fmt::format("{}  best topic {} ({}), r2 = {:.3f} [{}]", e.meter_id, e.result->best_topic_id,
                                      e.result->geo, e.result->r_squared, screening::to_string(e.result->category));
            auto t = trend_of.find({e.result->best_topic_id, e.result->geo});
            if (t != trend_of.end()) {
                std::vector<double> y;
                for (const auto& [d, _] : it->second) y.push_back(t->second.standardized_at(d));
                panel.lines.push_back({"topic (z)", "#d62728", y});
            }
        } else {
            panel.title = fmt::format("{}  (unscreenable)", e.meter_id);
        }
        panels.push_back(std::move(panel));
    }
    write_svg(out_dir / "calendar_signals.svg", "Calendar signal vs best-fit topic (training year)", panels);

    // Weekly RMSLE, one panel per group.
    const auto weekly = csv::Table::read(report_dir / "weekly_errors.csv");
    const auto c_group = weekly.column("group"), c_base = weekly.column("baseline_rmsle"),
               c_prop = weekly.column("proposed_rmsle");
    std::vector<std::string> order;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> series;
    for (std::size_t i = 0; i < weekly.rows(); ++i) {
        const auto& row = weekly.row(i);
        if (!series.count(row[c_group])) order.push_back(row[c_group]);
        auto& s = series[row[c_group]];
        s.first.push_back(csv::parse_double(row[c_base]).value_or(kNaN));
        s.second.push_back(csv::parse_double(row[c_prop]).value_or(kNaN));
    }
    std::vector<Panel> weekly_panels;
    for (const auto& g : order) {
        weekly_panels.push_back({fmt::format("group {}", g),
                                 {{"baseline", "#7f7f7f", series[g].first}, {"proposed", "#2ca02c", series[g].second}}});
    }
    write_svg(out_dir / "weekly_rmsle.svg", "Weekly RMSLE (validation year)", weekly_panels);
    return 2;
}

}  // namespace trendproxy::chart
