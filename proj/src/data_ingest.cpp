#include "trendproxy/data_ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "trendproxy/csv.hpp"
#include "trendproxy/kernels.hpp"

namespace trendproxy::ingest {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
    return out;
}

std::size_t hours_between(Hour from, Hour to) { return static_cast<std::size_t>((to - from).count()); }

}  // namespace

std::string_view to_string(MeterType type) {
    switch (type) {
        case MeterType::Electricity: return "electricity";
        case MeterType::ChilledWater: return "chilledwater";
        case MeterType::Steam: return "steam";
        case MeterType::HotWater: return "hotwater";
    }
    return "unknown";
}

MeterType parse_meter_type(std::string_view text) {
    if (text == "0" || text == "electricity") return MeterType::Electricity;
    if (text == "1" || text == "chilledwater") return MeterType::ChilledWater;
    if (text == "2" || text == "steam") return MeterType::Steam;
    if (text == "3" || text == "hotwater") return MeterType::HotWater;
    throw DataError(fmt::format("unknown meter type '{}' (expected 0-3 or electricity|chilledwater|steam|hotwater)",
                                text));
}

std::string make_meter_id(std::string_view building_id, MeterType type) {
    return fmt::format("{}_{}", building_id, to_string(type));
}

std::size_t MeterSeries::valid_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

std::optional<std::size_t> MeterSeries::index_of(Hour h) const {
    if (h < start) return std::nullopt;
    auto i = hours_between(start, h);
    if (i >= size()) return std::nullopt;
    return i;
}

MeterLoadResult load_meter_readings(const std::filesystem::path& path, const MeterLoadOptions& options) {
    auto table = csv::Table::read(path);
    const auto c_building = table.column("building_id");
    const auto c_meter = table.column("meter");
    const auto c_time = table.column("timestamp");
    const auto c_reading = table.column("meter_reading");
    const auto c_valid = table.find_column("valid");

    struct Row {
        Hour time;
        double value;
        bool valid;
    };
    struct Pending {
        std::string building_id;
        MeterType type;
        std::vector<Row> rows;
    };
    std::map<std::string, Pending> pending;
    MeterLoadResult result;

    for (std::size_t i = 0; i < table.rows(); ++i) {
        const auto& r = table.row(i);
        MeterType type;
        Hour time;
        try {
            type = parse_meter_type(r[c_meter]);
            time = parse_timestamp(r[c_time]);
        } catch (const DataError& e) {
            throw DataError(fmt::format("{}:{}: {}", table.source(), table.line_of(i), e.what()));
        }
        if (options.range && !options.range->contains(date_of(time))) {
            ++result.dropped_out_of_range;
            continue;
        }
        bool ok = true;
        auto value = csv::parse_double(r[c_reading], &ok);
        bool valid = value.has_value();
        if (!ok) ++result.unparseable_reading_count;
        if (value && *value < 0.0) {
            ++result.negative_reading_count;
            valid = false;
        }
        if (c_valid && r[*c_valid] == "0") valid = false;

        auto id = make_meter_id(r[c_building], type);
        auto& p = pending[id];
        if (p.rows.empty()) {
            p.building_id = r[c_building];
            p.type = type;
        }
        p.rows.push_back({time, value.value_or(kNaN), valid});
    }

    for (auto& [id, p] : pending) {
        MeterSeries s;
        s.meter_id = id;
        s.building_id = p.building_id;
        s.type = p.type;
        Hour first, last_excl;
        if (options.range) {
            first = Hour{options.range->begin};
            last_excl = Hour{options.range->end};
        } else {
            auto [lo, hi] = std::minmax_element(p.rows.begin(), p.rows.end(),
                                                [](const Row& a, const Row& b) { return a.time < b.time; });
            first = lo->time;
            last_excl = hi->time + std::chrono::hours{1};
        }
        s.start = first;
        const auto n = hours_between(first, last_excl);
        s.readings.assign(n, kNaN);
        s.valid.assign(n, 0);
        std::vector<std::uint8_t> seen(n, 0);
        for (const auto& row : p.rows) {
            auto idx = hours_between(first, row.time);
            if (seen[idx]) ++result.duplicate_warning_count;
            seen[idx] = 1;
            s.readings[idx] = row.value;
            s.valid[idx] = row.valid ? 1 : 0;
        }
        result.series.push_back(std::move(s));
    }
    return result;
}

void write_meter_readings(std::span<const MeterSeries> series, const std::filesystem::path& path) {
    auto out = open_output(path);
    csv::Writer w(out);
    w.row({"building_id", "meter", "timestamp", "meter_reading", "valid"});
    for (const auto& s : series) {
        const std::string type{to_string(s.type)};
        for (std::size_t i = 0; i < s.size(); ++i) {
            w.row({s.building_id, type, format_timestamp(s.timestamp(i)), csv::format_double(s.readings[i]),
                   s.valid[i] ? "1" : "0"});
        }
    }
}

void BuildingTable::insert(BuildingMeta meta) {
    auto id = meta.building_id;
    if (!entries_.emplace(id, std::move(meta)).second) {
        throw DataError(fmt::format("duplicate building_id '{}'", id));
    }
}

const BuildingMeta* BuildingTable::find(std::string_view building_id) const {
    auto it = entries_.find(building_id);
    return it == entries_.end() ? nullptr : &it->second;
}

const BuildingMeta& BuildingTable::at(std::string_view building_id) const {
    if (auto* m = find(building_id)) return *m;
    throw DataError(fmt::format("no building metadata for '{}'", building_id));
}

BuildingTable load_building_metadata(const std::filesystem::path& path) {
    auto table = csv::Table::read(path);
    const auto c_id = table.column("building_id");
    const auto c_site = table.column("site_id");
    const auto c_use = table.column("primary_use");
    const auto c_sqft = table.column("square_feet");
    const auto c_year = table.column("year_built");
    const auto c_floors = table.column("floor_count");

    BuildingTable out;
    for (std::size_t i = 0; i < table.rows(); ++i) {
        const auto& r = table.row(i);
        auto where = [&] { return fmt::format("{}:{}", table.source(), table.line_of(i)); };
        BuildingMeta m;
        m.building_id = r[c_id];
        m.site_id = r[c_site];
        m.primary_use = r[c_use];
        if (m.building_id.empty()) throw DataError(fmt::format("{}: empty building_id", where()));
        auto sqft = csv::parse_double(r[c_sqft]);
        if (!sqft || *sqft <= 0.0) {
            throw DataError(fmt::format("{}: square_feet must be > 0 for building '{}'", where(), m.building_id));
        }
        m.square_feet = *sqft;
        bool ok = true;
        if (auto y = csv::parse_int(r[c_year], &ok)) m.year_built = static_cast<int>(*y);
        if (!ok) throw DataError(fmt::format("{}: malformed year_built '{}'", where(), r[c_year]));
        if (auto f = csv::parse_int(r[c_floors], &ok)) m.floor_count = static_cast<int>(*f);
        if (!ok) throw DataError(fmt::format("{}: malformed floor_count '{}'", where(), r[c_floors]));
        try {
            out.insert(std::move(m));
        } catch (const DataError& e) {
            throw DataError(fmt::format("{}: {}", where(), e.what()));
        }
    }
    return out;
}

void attach_sites(std::span<MeterSeries> series, const BuildingTable& meta) {
    for (auto& s : series) {
        const auto* m = meta.find(s.building_id);
        if (!m) throw DataError(fmt::format("meter '{}' has no building metadata", s.meter_id));
        s.site_id = m->site_id;
    }
}

std::string_view column_name(WeatherField field) {
    switch (field) {
        case WeatherField::AirTemperature: return "air_temperature";
        case WeatherField::CloudCoverage: return "cloud_coverage";
        case WeatherField::DewTemperature: return "dew_temperature";
        case WeatherField::PrecipDepth: return "precip_depth_1_hr";
        case WeatherField::SeaLevelPressure: return "sea_level_pressure";
        case WeatherField::WindSpeed: return "wind_speed";
        case WeatherField::WindDirection: return "wind_direction";
    }
    return "";
}

std::optional<std::size_t> WeatherSeries::index_of(Hour h) const {
    if (h < start) return std::nullopt;
    auto i = hours_between(start, h);
    if (i >= hours) return std::nullopt;
    return i;
}

double WeatherSeries::value_at(WeatherField f, Hour h) const {
    auto i = index_of(h);
    if (!i) return kNaN;
    const auto& ch = channel(f);
    return ch.present[*i] ? ch.values[*i] : kNaN;
}

WeatherLoadResult load_weather(const std::filesystem::path& path, std::optional<DateRange> range) {
    auto table = csv::Table::read(path);
    const auto c_site = table.column("site_id");
    const auto c_time = table.column("timestamp");
    std::array<std::size_t, kWeatherFieldCount> cols{};
    for (std::size_t f = 0; f < kWeatherFieldCount; ++f) {
        auto field = static_cast<WeatherField>(f);
        if (field == WeatherField::PrecipDepth) {
            auto c = table.find_column("precip_depth_1_hr");
            cols[f] = c ? *c : table.column("precip_depth");
        } else {
            cols[f] = table.column(column_name(field));
        }
    }

    struct Row {
        Hour time;
        std::array<double, kWeatherFieldCount> values;
    };
    std::map<std::string, std::vector<Row>> per_site;
    WeatherLoadResult result;
    auto warn = [&](std::string msg) {
        ++result.warning_count;
        if (result.warnings.size() < 100) result.warnings.push_back(std::move(msg));
    };

    for (std::size_t i = 0; i < table.rows(); ++i) {
        const auto& r = table.row(i);
        Hour time;
        try {
            time = parse_timestamp(r[c_time]);
        } catch (const DataError& e) {
            throw DataError(fmt::format("{}:{}: {}", table.source(), table.line_of(i), e.what()));
        }
        if (range && !range->contains(date_of(time))) continue;
        Row row{time, {}};
        for (std::size_t f = 0; f < kWeatherFieldCount; ++f) {
            bool ok = true;
            auto v = csv::parse_double(r[cols[f]], &ok);
            if (!ok) {
                warn(fmt::format("{}:{}: unparseable {} '{}' masked missing", table.source(), table.line_of(i),
                                 column_name(static_cast<WeatherField>(f)), r[cols[f]]));
            }
            if (v && static_cast<WeatherField>(f) == WeatherField::WindDirection && (*v < 0.0 || *v > 360.0)) {
                warn(fmt::format("{}:{}: wind_direction {} outside [0, 360] masked invalid", table.source(),
                                 table.line_of(i), *v));
                v.reset();
            }
            row.values[f] = v.value_or(kNaN);
        }
        per_site[r[c_site]].push_back(row);
    }

    for (auto& [site, rows] : per_site) {
        WeatherSeries w;
        w.site_id = site;
        Hour first, last_excl;
        if (range) {
            first = Hour{range->begin};
            last_excl = Hour{range->end};
        } else {
            auto [lo, hi] = std::minmax_element(rows.begin(), rows.end(),
                                                [](const Row& a, const Row& b) { return a.time < b.time; });
            first = lo->time;
            last_excl = hi->time + std::chrono::hours{1};
        }
        w.start = first;
        w.hours = hours_between(first, last_excl);
        for (auto& ch : w.fields) {
            ch.values.assign(w.hours, kNaN);
            ch.present.assign(w.hours, 0);
            ch.imputed.assign(w.hours, 0);
        }
        for (const auto& row : rows) {
            auto idx = hours_between(first, row.time);
            for (std::size_t f = 0; f < kWeatherFieldCount; ++f) {
                w.fields[f].values[idx] = row.values[f];
                w.fields[f].present[idx] = std::isnan(row.values[f]) ? 0 : 1;
            }
        }
        result.sites.emplace(site, std::move(w));
    }
    return result;
}

void write_weather(const std::map<std::string, WeatherSeries>& sites, const std::filesystem::path& path) {
    auto out = open_output(path);
    csv::Writer w(out);
    std::vector<std::string> header{"site_id", "timestamp"};
    for (std::size_t f = 0; f < kWeatherFieldCount; ++f) {
        header.emplace_back(column_name(static_cast<WeatherField>(f)));
    }
    w.row(header);
    for (const auto& [site, series] : sites) {
        for (std::size_t i = 0; i < series.hours; ++i) {
            std::vector<std::string> row{site, format_timestamp(series.timestamp(i))};
            for (const auto& ch : series.fields) {
                row.push_back(ch.present[i] ? csv::format_double(ch.values[i]) : std::string{});
            }
            w.row(row);
        }
    }
}

namespace {

void fill_seasonal_means(WeatherChannel& ch, const WeatherSeries& w, WeatherField field) {
    // Means keyed by (month, hour of day) over originally present values.
    std::array<double, 12 * 24> sums{};
    std::array<std::size_t, 12 * 24> counts{};
    std::array<double, 24> hour_sums{};
    std::array<std::size_t, 24> hour_counts{};
    double total = 0.0;
    std::size_t total_count = 0;
    const auto& original = w.channel(field);
    for (std::size_t i = 0; i < w.hours; ++i) {
        if (!original.present[i]) continue;
        auto t = w.timestamp(i);
        auto key = (month_of(date_of(t)) - 1) * 24 + static_cast<unsigned>(hour_of_day(t));
        sums[key] += original.values[i];
        ++counts[key];
        hour_sums[hour_of_day(t)] += original.values[i];
        ++hour_counts[hour_of_day(t)];
        total += original.values[i];
        ++total_count;
    }
    for (std::size_t i = 0; i < w.hours; ++i) {
        if (ch.present[i]) continue;
        auto t = w.timestamp(i);
        auto h = static_cast<std::size_t>(hour_of_day(t));
        auto key = (month_of(date_of(t)) - 1) * 24 + h;
        double v;
        if (counts[key]) {
            v = sums[key] / static_cast<double>(counts[key]);
        } else if (hour_counts[h]) {
            v = hour_sums[h] / static_cast<double>(hour_counts[h]);
        } else {
            v = total / static_cast<double>(total_count);
        }
        ch.values[i] = v;
        ch.present[i] = 1;
        ch.imputed[i] = 1;
    }
}

}  // namespace

WeatherSeries impute_weather(const WeatherSeries& weather, const ImputeConfig& config) {
    WeatherSeries out = weather;
    for (std::size_t f = 0; f < kWeatherFieldCount; ++f) {
        auto field = static_cast<WeatherField>(f);
        auto& ch = out.fields[f];
        const bool is_temperature = field == WeatherField::AirTemperature || field == WeatherField::DewTemperature;
        const auto n_present = std::count(ch.present.begin(), ch.present.end(), std::uint8_t{1});
        if (n_present == 0) {
            if (is_temperature && weather.hours > 0) {
                throw DataError(fmt::format("site '{}': {} entirely missing, cannot impute", weather.site_id,
                                            column_name(field)));
            }
            continue;
        }
        // Linear interpolation across short interior gaps.
        std::size_t i = 0;
        while (i < out.hours) {
            if (ch.present[i]) {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j < out.hours && !ch.present[j]) ++j;
            const std::size_t len = j - i;
            if (i > 0 && j < out.hours && len <= config.max_interp_hours) {
                const double a = ch.values[i - 1];
                const double b = ch.values[j];
                for (std::size_t k = 0; k < len; ++k) {
                    double frac = static_cast<double>(k + 1) / static_cast<double>(len + 1);
                    ch.values[i + k] = a + (b - a) * frac;
                    ch.present[i + k] = 1;
                    ch.imputed[i + k] = 1;
                }
            }
            i = j;
        }
        if (is_temperature) fill_seasonal_means(ch, weather, field);
    }
    return out;
}

std::string_view to_string(DayType type) {
    switch (type) {
        case DayType::Regular: return "regular";
        case DayType::PublicHoliday: return "public_holiday";
        case DayType::SiteSpecific: return "site_specific";
    }
    return "unknown";
}

DayType parse_day_type(std::string_view text) {
    if (text == "regular") return DayType::Regular;
    if (text == "public_holiday") return DayType::PublicHoliday;
    if (text == "site_specific") return DayType::SiteSpecific;
    throw DataError(fmt::format("unknown day_type '{}' (allowed: regular, public_holiday, site_specific)", text));
}

void DayTypeCalendar::set(const std::string& site_id, Date date, DayType type) { labels_[site_id][date] = type; }

std::optional<DayType> DayTypeCalendar::find(std::string_view site_id, Date date) const {
    auto s = labels_.find(site_id);
    if (s == labels_.end()) return std::nullopt;
    auto d = s->second.find(date);
    if (d == s->second.end()) return std::nullopt;
    return d->second;
}

DayType DayTypeCalendar::at(std::string_view site_id, Date date) const {
    if (auto t = find(site_id, date)) return *t;
    throw DataError(fmt::format("no day-type label for site '{}' on {}", site_id, format_date(date)));
}

bool DayTypeCalendar::has_site(std::string_view site_id) const { return labels_.find(site_id) != labels_.end(); }

std::vector<std::string> DayTypeCalendar::sites() const {
    std::vector<std::string> out;
    for (const auto& [s, _] : labels_) out.push_back(s);
    return out;
}

DayTypeCalendar load_daytype_calendar(const std::filesystem::path& path, std::optional<DateRange> required) {
    auto table = csv::Table::read(path);
    const auto c_site = table.column("site_id");
    const auto c_date = table.column("date");
    const auto c_type = table.column("day_type");
    DayTypeCalendar cal;
    for (std::size_t i = 0; i < table.rows(); ++i) {
        const auto& r = table.row(i);
        try {
            cal.set(r[c_site], parse_date(r[c_date]), parse_day_type(r[c_type]));
        } catch (const DataError& e) {
            throw DataError(fmt::format("{}:{}: {}", table.source(), table.line_of(i), e.what()));
        }
    }
    if (required) {
        for (const auto& site : cal.sites()) {
            for (Date d = required->begin; d < required->end; d += std::chrono::days{1}) {
                if (!cal.find(site, d)) {
                    throw DataError(
                        fmt::format("{}: site '{}' is missing day-type label for {}", table.source(), site, format_date(d)));
                }
            }
        }
    }
    return cal;
}

CleanedMeter clean_meter_series(const MeterSeries& series, const CleaningConfig& config) {
    CleanedMeter out{series, {}};
    auto& s = out.series;
    auto& report = out.report;
    report.meter_id = series.meter_id;
    report.rules_applied = {fmt::format("constant_run>={}h", config.min_constant_hours),
                            fmt::format("abs_z_log1p>{}", config.z_threshold)};
    std::vector<std::size_t> removed;

    // Maximal runs of identical consecutive valid readings.
    std::size_t i = 0;
    while (i < s.size()) {
        if (!s.valid[i]) {
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        while (j < s.size() && s.valid[j] && s.readings[j] == s.readings[i]) ++j;
        if (config.min_constant_hours > 0 && j - i >= config.min_constant_hours) {
            ++report.removed_constant_run_count;
            for (std::size_t k = i; k < j; ++k) {
                s.valid[k] = 0;
                removed.push_back(k);
            }
        }
        i = j;
    }

    // |z| on log1p readings, repeated until no hour exceeds the threshold.
    std::vector<double> logs;
    std::vector<std::size_t> index;
    for (;;) {
        logs.clear();
        index.clear();
        for (std::size_t k = 0; k < s.size(); ++k) {
            if (s.valid[k]) {
                logs.push_back(std::log1p(s.readings[k]));
                index.push_back(k);
            }
        }
        if (logs.size() < 2) break;
        const double n = static_cast<double>(logs.size());
        const double mean = kernels::sum(logs) / n;
        const double sd = std::sqrt(kernels::centered_sum_sq(logs, mean) / n);
        if (!(sd > 0.0)) break;
        std::size_t flagged = 0;
        for (std::size_t k = 0; k < logs.size(); ++k) {
            if (std::abs((logs[k] - mean) / sd) > config.z_threshold) {
                s.valid[index[k]] = 0;
                removed.push_back(index[k]);
                ++flagged;
            }
        }
        report.removed_outlier_count += flagged;
        if (flagged == 0) break;
    }

    std::sort(removed.begin(), removed.end());
    report.removed_hours.reserve(removed.size());
    for (auto k : removed) report.removed_hours.push_back(s.timestamp(k));
    return out;
}

void write_cleaning_reports(std::span<const CleaningReport> reports, const std::filesystem::path& path) {
    auto out = open_output(path);
    csv::Writer w(out);
    w.row({"meter_id", "removed_outlier_count", "removed_constant_run_count", "removed_hour_count", "rules_applied",
           "first_removed", "last_removed"});
    for (const auto& r : reports) {
        std::string rules;
        for (const auto& rule : r.rules_applied) {
            if (!rules.empty()) rules += ';';
            rules += rule;
        }
        w.row({r.meter_id, std::to_string(r.removed_outlier_count), std::to_string(r.removed_constant_run_count),
               std::to_string(r.removed_hours.size()), rules,
               r.removed_hours.empty() ? "" : format_timestamp(r.removed_hours.front()),
               r.removed_hours.empty() ? "" : format_timestamp(r.removed_hours.back())});
    }
}

}  // namespace trendproxy::ingest
