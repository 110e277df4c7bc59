#include "trendproxy/screening.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "trendproxy/csv.hpp"
#include "trendproxy/kernels.hpp"

namespace trendproxy::screening {

std::string_view to_string(CorrelationCategory c) {
    switch (c) {
        case CorrelationCategory::Poor: return "Poor";
        case CorrelationCategory::Fair: return "Fair";
        case CorrelationCategory::High: return "High";
    }
    return "Poor";
}

CorrelationCategory parse_category(std::string_view text) {
    if (text == "Poor") return CorrelationCategory::Poor;
    if (text == "Fair") return CorrelationCategory::Fair;
    if (text == "High") return CorrelationCategory::High;
    throw DataError(fmt::format("unknown correlation category '{}'", text));
}

double pearson_r(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson_r: length mismatch");
    std::vector<double> xs, ys;
    xs.reserve(x.size());
    ys.reserve(y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (std::isnan(x[i]) || std::isnan(y[i])) continue;
        xs.push_back(x[i]);
        ys.push_back(y[i]);
    }
    if (xs.size() < 3) {
        throw InsufficientOverlapError(fmt::format("pearson_r needs >= 3 paired values, got {}", xs.size()));
    }
    auto constant = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [&](double a) { return a == v.front(); });
    };
    if (constant(xs) || constant(ys)) throw ConstantInputError("pearson_r: constant input");
    const double n = static_cast<double>(xs.size());
    const double mx = kernels::sum(xs) / n;
    const double my = kernels::sum(ys) / n;
    const auto m = kernels::centered_moments(xs, ys, mx, my);
    return std::clamp(m.sxy / std::sqrt(m.sxx * m.syy), -1.0, 1.0);
}

CorrelationCategory classify_correlation(double r_squared, const ScreeningConfig& config) {
    if (!(r_squared >= 0.0 && r_squared <= 1.0)) {
        throw std::out_of_range(fmt::format("r_squared {} outside [0, 1]", r_squared));
    }
    if (r_squared < config.fair_threshold) return CorrelationCategory::Poor;
    if (r_squared <= config.high_threshold) return CorrelationCategory::Fair;
    return CorrelationCategory::High;
}

ScreeningResult screen_meter(const calendar::CalendarSignal& signal, std::span<const trends::TrendSeries> trends,
                             int training_year, const ScreeningConfig& config) {
    ScreeningResult best;
    best.meter_id = signal.meter_id;
    bool have_best = false;
    bool any_overlap_failure = false;

    std::vector<double> xs, ys;
    for (const auto& t : trends) {
        xs.clear();
        ys.clear();
        for (std::size_t d = 0; d < signal.dates.size(); ++d) {
            if (!signal.defined[d] || year_of(signal.dates[d]) != training_year) continue;
            double v = t.standardized_at(signal.dates[d]);
            if (std::isnan(v)) continue;
            xs.push_back(signal.scores[d]);
            ys.push_back(v);
        }
        if (xs.size() < std::max<std::size_t>(config.min_overlap_days, 3)) {
            any_overlap_failure = true;
            continue;
        }
        double r;
        try {
            r = pearson_r(xs, ys);
        } catch (const ConstantInputError&) {
            continue;
        }
        const double r2 = r * r;
        best.per_topic_r2[t.topic_id] = r2;
        const bool better = !have_best || r2 > best.r_squared ||
                            (r2 == best.r_squared && t.topic_id < best.best_topic_id);
        if (better) {
            have_best = true;
            best.best_topic_id = t.topic_id;
            best.geo = t.geo;
            best.r = r;
            best.r_squared = r2;
            best.n_days_used = xs.size();
        }
    }
    if (!have_best) {
        if (any_overlap_failure) {
            throw InsufficientOverlapError(fmt::format("meter '{}': no topic overlaps >= {} usable days in {}",
                                                       signal.meter_id, config.min_overlap_days, training_year));
        }
        throw ConstantInputError(fmt::format("meter '{}': calendar or all topics constant", signal.meter_id));
    }
    best.category = classify_correlation(best.r_squared, config);
    return best;
}

double CensusTable::percent(std::size_t count) const {
    return grand_total == 0 ? 0.0 : 100.0 * static_cast<double>(count) / static_cast<double>(grand_total);
}

CensusRow CensusTable::sum_row() const {
    CensusRow s{"Sum", {}};
    for (const auto& r : rows)
        for (std::size_t c = 0; c < 3; ++c) s.counts[c] += r.counts[c];
    return s;
}

Census screening_census(std::span<const CensusEntry> entries) {
    Census census;
    census.by_meter_type.dimension = "meter_type";
    census.by_primary_use.dimension = "primary_use";
    census.by_topic.dimension = "topic";
    for (auto t : ingest::kMeterTypes) census.by_meter_type.rows.push_back({std::string(to_string(t)), {}});

    std::map<std::string, std::array<std::size_t, 3>> uses, topics;
    for (const auto& e : entries) {
        const auto c = static_cast<std::size_t>(e.category());
        census.by_meter_type.rows[static_cast<std::size_t>(e.meter_type)].counts[c]++;
        uses[e.primary_use][c]++;
        topics[e.result ? e.result->best_topic_id : "(none)"][c]++;
    }
    for (auto& [k, v] : uses) census.by_primary_use.rows.push_back({k, v});
    for (auto& [k, v] : topics) census.by_topic.rows.push_back({k, v});
    census.by_meter_type.grand_total = census.by_primary_use.grand_total = census.by_topic.grand_total = entries.size();
    return census;
}

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
    return out;
}

}  // namespace

void write_screening_results(std::span<const CensusEntry> entries, const std::filesystem::path& path) {
    auto out = open_output(path);
    csv::Writer w(out);
    w.row({"meter_id", "meter_type", "primary_use", "screenable", "best_topic", "geo", "r", "r2", "category",
           "n_days_used", "per_topic_r2"});
    for (const auto& e : entries) {
        const std::string type{ingest::to_string(e.meter_type)};
        if (!e.result) {
            w.row({e.meter_id, type, e.primary_use, "0", "", "", "", "", "Poor", "0", ""});
            continue;
        }
        const auto& r = *e.result;
        std::string table;
        for (const auto& [topic, r2] : r.per_topic_r2) {
            if (!table.empty()) table += ';';
            table += fmt::format("{}={}", topic, csv::format_double(r2));
        }
        w.row({e.meter_id, type, e.primary_use, "1", r.best_topic_id, r.geo, csv::format_double(r.r),
               csv::format_double(r.r_squared), std::string(to_string(r.category)), std::to_string(r.n_days_used),
               table});
    }
}

std::vector<CensusEntry> read_screening_results(const std::filesystem::path& path) {
    auto table = csv::Table::read(path);
    const auto c_id = table.column("meter_id");
    const auto c_type = table.column("meter_type");
    const auto c_use = table.column("primary_use");
    const auto c_ok = table.column("screenable");
    const auto c_topic = table.column("best_topic");
    const auto c_geo = table.column("geo");
    const auto c_r = table.column("r");
    const auto c_r2 = table.column("r2");
    const auto c_cat = table.column("category");
    const auto c_n = table.column("n_days_used");
    const auto c_table = table.column("per_topic_r2");
    std::vector<CensusEntry> out;
    for (std::size_t i = 0; i < table.rows(); ++i) {
        const auto& row = table.row(i);
        CensusEntry e;
        e.meter_id = row[c_id];
        e.meter_type = ingest::parse_meter_type(row[c_type]);
        e.primary_use = row[c_use];
        if (row[c_ok] == "1") {
            ScreeningResult r;
            r.meter_id = e.meter_id;
            r.best_topic_id = row[c_topic];
            r.geo = row[c_geo];
            r.r = csv::parse_double(row[c_r]).value_or(0.0);
            r.r_squared = csv::parse_double(row[c_r2]).value_or(0.0);
            r.category = parse_category(row[c_cat]);
            r.n_days_used = static_cast<std::size_t>(csv::parse_int(row[c_n]).value_or(0));
            std::string_view rest = row[c_table];
            while (!rest.empty()) {
                auto semi = rest.find(';');
                auto item = rest.substr(0, semi);
                auto eq = item.rfind('=');
                if (eq != std::string_view::npos) {
                    r.per_topic_r2[std::string(item.substr(0, eq))] = csv::parse_double(item.substr(eq + 1)).value_or(0.0);
                }
                if (semi == std::string_view::npos) break;
                rest.remove_prefix(semi + 1);
            }
            e.result = std::move(r);
        }
        out.push_back(std::move(e));
    }
    return out;
}

void write_census_table(const CensusTable& table, const std::filesystem::path& path) {
    auto out = open_output(path);
    csv::Writer w(out);
    w.row({table.dimension, "poor_count", "poor_pct", "fair_count", "fair_pct", "high_count", "high_pct", "total"});
    auto emit = [&](const CensusRow& r) {
        w.row({r.label, std::to_string(r.counts[0]), fmt::format("{:.1f}", table.percent(r.counts[0])),
               std::to_string(r.counts[1]), fmt::format("{:.1f}", table.percent(r.counts[1])),
               std::to_string(r.counts[2]), fmt::format("{:.1f}", table.percent(r.counts[2])),
               std::to_string(r.total())});
    };
    for (const auto& r : table.rows) emit(r);
    emit(table.sum_row());
}

}  // namespace trendproxy::screening
