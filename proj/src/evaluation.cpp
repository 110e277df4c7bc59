#include "trendproxy/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "trendproxy/csv.hpp"
#include "trendproxy/kernels.hpp"

namespace trendproxy::eval {

using screening::CorrelationCategory;

double rmsle(std::span<const double> predicted, std::span<const double> actual) {
    if (predicted.size() != actual.size()) {
        throw DataError(fmt::format("rmsle: {} predictions vs {} actuals", predicted.size(), actual.size()));
    }
    if (predicted.empty()) throw DataError("rmsle: empty input");
    std::vector<double> lp(predicted.size()), la(actual.size());
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const double p = predicted[i], a = actual[i];
        if (!(p >= 0.0) || !(a >= 0.0) || !std::isfinite(p) || !std::isfinite(a)) {
            throw DataError(fmt::format("rmsle: value at {} is negative or not finite (p={}, a={})", i, p, a));
        }
        lp[i] = std::log1p(p);
        la[i] = std::log1p(a);
    }
    return std::sqrt(kernels::sum_sq_diff(lp, la) / static_cast<double>(lp.size()));
}

double rmsle(std::span<const PredictionRecord> records) {
    std::vector<double> p, a;
    p.reserve(records.size());
    a.reserve(records.size());
    for (const auto& r : records) {
        p.push_back(r.predicted);
        a.push_back(r.actual);
    }
    return rmsle(p, a);
}

std::map<ingest::DayType, double> segment_by_daytype(std::span<const PredictionRecord> records,
                                                     const ingest::DayTypeCalendar& calendar) {
    std::map<ingest::DayType, std::vector<PredictionRecord>> parts;
    for (const auto& r : records) parts[calendar.at(r.site_id, date_of(r.timestamp))].push_back(r);
    std::map<ingest::DayType, double> out;
    for (const auto& [type, subset] : parts) out[type] = rmsle(subset);
    return out;
}

double change_rate(double baseline_rmsle, double proposed_rmsle) {
    if (!(baseline_rmsle > 0.0)) throw DataError(fmt::format("change rate undefined for baseline {}", baseline_rmsle));
    return 100.0 * (proposed_rmsle - baseline_rmsle) / baseline_rmsle;
}

std::string format_change_rate(double percent) {
    auto s = fmt::format("{:+.1f}", percent);
    if (s == "+0.0" || s == "-0.0") return "0.0%";
    return s + "%";
}

std::string_view to_string(Tier tier) {
    switch (tier) {
        case Tier::Top5: return "Top 5";
        case Tier::Gold: return "Gold";
        case Tier::Silver: return "Silver";
        case Tier::Bronze: return "Bronze";
        case Tier::NoMedal: return "no medal";
    }
    return "no medal";
}

BenchmarkTable BenchmarkTable::defaults() {
    BenchmarkTable t;
    t.set(CorrelationCategory::High, {0.434, 0.436, 0.453, 0.510});
    t.set(CorrelationCategory::Fair, {0.962, 0.970, 0.976, 1.020});
    t.set(CorrelationCategory::Poor, {1.125, 1.135, 1.148, 1.196});
    return t;
}

void BenchmarkTable::set(CorrelationCategory category, std::array<double, 4> tiers) {
    for (std::size_t i = 0; i < tiers.size(); ++i) {
        if (!std::isfinite(tiers[i]) || (i > 0 && !(tiers[i] > tiers[i - 1]))) {
            throw DataError(fmt::format("benchmark tiers for {} must be finite and strictly increasing",
                                        screening::to_string(category)));
        }
    }
    rows_[category] = tiers;
}

const std::array<double, 4>* BenchmarkTable::find(CorrelationCategory category) const {
    auto it = rows_.find(category);
    return it == rows_.end() ? nullptr : &it->second;
}

BenchmarkTable BenchmarkTable::load(const std::filesystem::path& path) {
    auto table = csv::Table::read(path);
    const std::array<std::size_t, 5> cols{table.column("category"), table.column("top5"), table.column("gold"),
                                          table.column("silver"), table.column("bronze")};
    BenchmarkTable out;
    for (std::size_t i = 0; i < table.rows(); ++i) {
        const auto& row = table.row(i);
        std::array<double, 4> v{};
        for (std::size_t k = 0; k < 4; ++k) {
            auto x = csv::parse_double(row[cols[k + 1]]);
            if (!x) throw DataError(fmt::format("{}:{}: bad benchmark value", path.string(), table.line_of(i)));
            v[k] = *x;
        }
        out.set(screening::parse_category(row[cols[0]]), v);
    }
    return out;
}

void BenchmarkTable::write(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
    csv::Writer w(out);
    w.row({"category", "top5", "gold", "silver", "bronze"});
    for (const auto& [c, v] : rows_) {
        w.row({std::string(screening::to_string(c)), csv::format_double(v[0]), csv::format_double(v[1]),
               csv::format_double(v[2]), csv::format_double(v[3])});
    }
}

Tier benchmark_tier(double score, CorrelationCategory category, const BenchmarkTable& table) {
    const auto* tiers = table.find(category);
    if (!tiers) throw DataError(fmt::format("no benchmark row for category {}", screening::to_string(category)));
    for (std::size_t i = 0; i < tiers->size(); ++i) {
        if ((*tiers)[i] >= score) return static_cast<Tier>(i);
    }
    return Tier::NoMedal;
}

std::vector<IsoWeek> iso_weeks_in(DateRange range) {
    std::vector<IsoWeek> out;
    for (Date d = range.begin; d < range.end; d += std::chrono::days{1}) {
        const auto w = iso_week(d);
        if (out.empty() || out.back() != w) out.push_back(w);
    }
    return out;
}

std::vector<const EvalCell*> EvalReport::breakdown(std::string_view first_dimension, std::size_t key_size) const {
    std::vector<const EvalCell*> out;
    for (const auto& c : cells) {
        if (c.key.size() == key_size && c.key.front().first == first_dimension) out.push_back(&c);
    }
    return out;
}

namespace {

// Group key component: ordinal for a fixed presentation order, then label.
using KeyPart = std::pair<int, std::string>;

int category_rank(CorrelationCategory c) { return 2 - static_cast<int>(c); }  // High, Fair, Poor

struct Dimension {
    std::string name;
    KeyPart (*of)(const PredictionRecord&);
};

const Dimension kScope{"scope", [](const PredictionRecord&) { return KeyPart{0, std::string("all")}; }};
const Dimension kMeterType{"meter_type", [](const PredictionRecord& r) {
                               return KeyPart{static_cast<int>(r.meter_type),
                                              std::string(ingest::to_string(r.meter_type))};
                           }};
const Dimension kCategory{"category", [](const PredictionRecord& r) {
                              return KeyPart{category_rank(r.category), std::string(screening::to_string(r.category))};
                          }};
const Dimension kTopic{"topic", [](const PredictionRecord& r) {
                           return KeyPart{0, r.topic_id.empty() ? std::string("(none)") : r.topic_id};
                       }};
const Dimension kCountry{"country", [](const PredictionRecord& r) {
                             return KeyPart{0, r.country.empty() ? std::string("(unknown)") : r.country};
                         }};

double subset_rmsle(std::span<const PredictionRecord> records, const std::vector<std::size_t>& idx) {
    std::vector<double> p, a;
    p.reserve(idx.size());
    a.reserve(idx.size());
    for (auto i : idx) {
        p.push_back(records[i].predicted);
        a.push_back(records[i].actual);
    }
    return rmsle(p, a);
}

std::size_t meter_count(std::span<const PredictionRecord> records, const std::vector<std::size_t>& idx) {
    std::set<std::string_view> ids;
    for (auto i : idx) ids.insert(records[i].meter_id);
    return ids.size();
}

void check_paired(std::span<const PredictionRecord> baseline, std::span<const PredictionRecord> proposed) {
    if (baseline.size() != proposed.size()) {
        throw DataError(fmt::format("baseline and proposed runs cover different rows ({} vs {})", baseline.size(),
                                    proposed.size()));
    }
    for (std::size_t i = 0; i < baseline.size(); ++i) {
        const auto& b = baseline[i];
        const auto& p = proposed[i];
        if (b.meter_id != p.meter_id || b.timestamp != p.timestamp || b.actual != p.actual) {
            throw DataError(fmt::format("baseline and proposed rows differ at {}: {} {} vs {} {}", i, b.meter_id,
                                        format_timestamp(b.timestamp), p.meter_id, format_timestamp(p.timestamp)));
        }
    }
}

}  // namespace

EvalReport evaluate(std::span<const PredictionRecord> baseline, std::span<const PredictionRecord> proposed,
                    const EvalConfig& config, const BenchmarkTable& benchmark) {
    check_paired(baseline, proposed);
    if (baseline.empty()) throw DataError("evaluate: no prediction records");

    EvalReport report;
    report.min_meters = config.min_meters;
    report.benchmark = benchmark;
    report.n_records = baseline.size();
    std::vector<std::size_t> all(baseline.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    report.n_meters = meter_count(baseline, all);
    report.baseline_rmsle = subset_rmsle(baseline, all);
    report.proposed_rmsle = subset_rmsle(proposed, all);
    report.change_rate = change_rate(report.baseline_rmsle, report.proposed_rmsle);

    // Day type and group labels come from the proposed records (topic is only
    // known there); both runs share them for every other field.
    const std::vector<std::vector<const Dimension*>> breakdowns{
        {&kScope}, {&kMeterType, &kCategory}, {&kCategory}, {&kTopic}, {&kCountry}};
    for (const auto& dims : breakdowns) {
        std::map<std::vector<KeyPart>, std::vector<std::size_t>> groups;
        for (std::size_t i = 0; i < proposed.size(); ++i) {
            std::vector<KeyPart> key;
            for (const auto* d : dims) key.push_back(d->of(proposed[i]));
            groups[std::move(key)].push_back(i);
        }
        for (const auto& [key, idx] : groups) {
            std::map<std::string, std::vector<std::size_t>> by_day;
            by_day["all"] = idx;
            std::array<std::vector<std::size_t>, 3> typed;
            for (auto i : idx) typed[static_cast<std::size_t>(proposed[i].day_type)].push_back(i);

            auto emit = [&](std::string day, const std::vector<std::size_t>& subset) {
                if (subset.empty()) return;
                EvalCell cell;
                for (std::size_t k = 0; k < dims.size(); ++k) cell.key.emplace_back(dims[k]->name, key[k].second);
                cell.day_type = std::move(day);
                cell.n_meters = meter_count(proposed, subset);
                cell.n_records = subset.size();
                cell.baseline_rmsle = subset_rmsle(baseline, subset);
                cell.proposed_rmsle = subset_rmsle(proposed, subset);
                cell.change_rate = cell.baseline_rmsle > 0.0 ? change_rate(cell.baseline_rmsle, cell.proposed_rmsle)
                                                             : 0.0;
                cell.low_support = cell.n_meters < config.min_meters;
                if (dims.size() == 1 && dims[0] == &kCategory && cell.day_type == "all") {
                    const auto category = proposed[subset.front()].category;
                    if (benchmark.find(category)) {
                        cell.baseline_tier = benchmark_tier(cell.baseline_rmsle, category, benchmark);
                        cell.proposed_tier = benchmark_tier(cell.proposed_rmsle, category, benchmark);
                    }
                }
                report.cells.push_back(std::move(cell));
            };
            emit("all", idx);
            for (auto t : ingest::kDayTypes) emit(std::string(ingest::to_string(t)), typed[static_cast<std::size_t>(t)]);
        }
    }

    // Weekly series: pooled over everything, then per category.
    const auto weeks = iso_weeks_in(config.range);
    std::map<std::pair<int, std::string>, std::map<IsoWeek, std::vector<std::size_t>>> weekly;
    weekly[{-1, "all"}];
    for (std::size_t i = 0; i < proposed.size(); ++i) {
        const auto w = iso_week(date_of(proposed[i].timestamp));
        weekly[{-1, "all"}][w].push_back(i);
        weekly[kCategory.of(proposed[i])][w].push_back(i);
    }
    for (const auto& [group, by_week] : weekly) {
        for (const auto& w : weeks) {
            WeeklyPoint point;
            point.group = group.second;
            point.week = w;
            if (auto it = by_week.find(w); it != by_week.end()) {
                point.n_records = it->second.size();
                point.baseline_rmsle = subset_rmsle(baseline, it->second);
                point.proposed_rmsle = subset_rmsle(proposed, it->second);
            }
            report.weekly.push_back(std::move(point));
        }
    }
    return report;
}

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
    return out;
}

std::string fixed6(double v) { return fmt::format("{:.6f}", v); }

void write_breakdown(const EvalReport& report, std::string_view dimension, std::size_t key_size,
                     const std::filesystem::path& path) {
    auto out = open_output(path);
    csv::Writer w(out);
    std::vector<std::string> header;
    const auto cells = report.breakdown(dimension, key_size);
    if (!cells.empty()) {
        for (const auto& [name, _] : cells.front()->key) header.push_back(name);
    } else {
        header.emplace_back(dimension);
    }
    for (const char* h : {"day_type", "n_meters", "n_records", "baseline_rmsle", "proposed_rmsle", "change_rate",
                          "change_rate_pct", "low_support"}) {
        header.emplace_back(h);
    }
    w.row(header);
    for (const auto* c : cells) {
        std::vector<std::string> row;
        for (const auto& [_, label] : c->key) row.push_back(label);
        row.push_back(c->day_type);
        row.push_back(std::to_string(c->n_meters));
        row.push_back(std::to_string(c->n_records));
        row.push_back(fixed6(c->baseline_rmsle));
        row.push_back(fixed6(c->proposed_rmsle));
        row.push_back(c->low_support ? "-" : format_change_rate(c->change_rate));
        row.push_back(csv::format_double(c->change_rate));
        row.push_back(c->low_support ? "1" : "0");
        w.row(row);
    }
}

}  // namespace

void emit_report(const EvalReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_breakdown(report, "scope", 1, dir / "table_overall.csv");
    write_breakdown(report, "meter_type", 2, dir / "table_meter_type.csv");
    write_breakdown(report, "category", 1, dir / "table_category.csv");
    write_breakdown(report, "topic", 1, dir / "table_topic.csv");
    write_breakdown(report, "country", 1, dir / "table_country.csv");

    {
        auto out = open_output(dir / "table_benchmark.csv");
        csv::Writer w(out);
        w.row({"category", "n_meters", "baseline_rmsle", "baseline_tier", "proposed_rmsle", "proposed_tier",
               "change_rate", "top5", "gold", "silver", "bronze"});
        for (const auto* c : report.breakdown("category", 1)) {
            if (c->day_type != "all" || !c->baseline_tier) continue;
            const auto* tiers = report.benchmark.find(screening::parse_category(c->key.front().second));
            w.row({c->key.front().second, std::to_string(c->n_meters), fixed6(c->baseline_rmsle),
                   std::string(to_string(*c->baseline_tier)), fixed6(c->proposed_rmsle),
                   std::string(to_string(*c->proposed_tier)), format_change_rate(c->change_rate),
                   csv::format_double((*tiers)[0]), csv::format_double((*tiers)[1]), csv::format_double((*tiers)[2]),
                   csv::format_double((*tiers)[3])});
        }
    }
    {
        auto out = open_output(dir / "weekly_errors.csv");
        csv::Writer w(out);
        w.row({"group", "iso_week", "n_records", "baseline_rmsle", "proposed_rmsle"});
        for (const auto& p : report.weekly) {
            w.row({p.group, format_iso_week(p.week), std::to_string(p.n_records),
                   p.baseline_rmsle ? fixed6(*p.baseline_rmsle) : "", p.proposed_rmsle ? fixed6(*p.proposed_rmsle) : ""});
        }
    }

    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["software_version"] = std::string(kVersion);
    j["change_rate_convention"] = "100 * (proposed - baseline) / baseline on unrounded RMSLE";
    j["min_meters"] = report.min_meters;
    j["overall"] = {{"n_meters", report.n_meters},
                    {"n_records", report.n_records},
                    {"baseline_rmsle", report.baseline_rmsle},
                    {"proposed_rmsle", report.proposed_rmsle},
                    {"change_rate_pct", report.change_rate}};
    auto& cells = j["cells"] = nlohmann::ordered_json::array();
    for (const auto& c : report.cells) {
        nlohmann::ordered_json cell;
        nlohmann::ordered_json key = nlohmann::ordered_json::object();
        for (const auto& [name, label] : c.key) key[name] = label;
        cell["key"] = std::move(key);
        cell["day_type"] = c.day_type;
        cell["n_meters"] = c.n_meters;
        cell["n_records"] = c.n_records;
        cell["baseline_rmsle"] = c.baseline_rmsle;
        cell["proposed_rmsle"] = c.proposed_rmsle;
        cell["change_rate_pct"] = c.change_rate;
        cell["low_support"] = c.low_support;
        if (c.baseline_tier) cell["baseline_tier"] = std::string(to_string(*c.baseline_tier));
        if (c.proposed_tier) cell["proposed_tier"] = std::string(to_string(*c.proposed_tier));
        cells.push_back(std::move(cell));
    }
    auto& weekly = j["weekly"] = nlohmann::ordered_json::array();
    for (const auto& p : report.weekly) {
        nlohmann::ordered_json point{{"group", p.group}, {"iso_week", format_iso_week(p.week)}, {"n_records", p.n_records}};
        point["baseline_rmsle"] = p.baseline_rmsle ? nlohmann::ordered_json(*p.baseline_rmsle) : nullptr;
        point["proposed_rmsle"] = p.proposed_rmsle ? nlohmann::ordered_json(*p.proposed_rmsle) : nullptr;
        weekly.push_back(std::move(point));
    }
    auto out = open_output(dir / "report.json");
    out << j.dump(2) << '\n';
}

void write_predictions(std::span<const PredictionRecord> records, const std::filesystem::path& path) {
    auto out = open_output(path);
    csv::Writer w(out);
    w.row({"meter_id", "timestamp", "actual", "predicted", "day_type", "category", "meter_type", "site_id", "country",
           "topic_id"});
    for (const auto& r : records) {
        w.row({r.meter_id, format_timestamp(r.timestamp), csv::format_double(r.actual), csv::format_double(r.predicted),
               std::string(ingest::to_string(r.day_type)), std::string(screening::to_string(r.category)),
               std::string(ingest::to_string(r.meter_type)), r.site_id, r.country, r.topic_id});
    }
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw MissingArtifactError(fmt::format("predictions '{}' not found", path.string()));
    }
    auto table = csv::Table::read(path);
    const auto c_id = table.column("meter_id"), c_ts = table.column("timestamp"), c_a = table.column("actual"),
               c_p = table.column("predicted"), c_day = table.column("day_type"), c_cat = table.column("category"),
               c_type = table.column("meter_type"), c_site = table.column("site_id"),
               c_country = table.column("country"), c_topic = table.column("topic_id");
    std::vector<PredictionRecord> out;
    out.reserve(table.rows());
    for (std::size_t i = 0; i < table.rows(); ++i) {
        const auto& row = table.row(i);
        PredictionRecord r;
        r.meter_id = row[c_id];
        r.timestamp = parse_timestamp(row[c_ts]);
        auto a = csv::parse_double(row[c_a]);
        auto p = csv::parse_double(row[c_p]);
        if (!a || !p) throw DataError(fmt::format("{}:{}: missing actual or prediction", path.string(), table.line_of(i)));
        r.actual = *a;
        r.predicted = *p;
        r.day_type = ingest::parse_day_type(row[c_day]);
        r.category = screening::parse_category(row[c_cat]);
        r.meter_type = ingest::parse_meter_type(row[c_type]);
        r.site_id = row[c_site];
        r.country = row[c_country];
        r.topic_id = row[c_topic];
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace trendproxy::eval
