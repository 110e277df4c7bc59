#include "trendproxy/trends.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "trendproxy/csv.hpp"
#include "trendproxy/kernels.hpp"

namespace trendproxy::trends {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<TrendSeries> series_from_table(const csv::Table& table) {
    const auto c_topic = table.column("topic_id");
    const auto c_geo = table.column("geo");
    const auto c_date = table.column("date");
    const auto c_volume = table.column("volume");

    std::map<std::pair<std::string, std::string>, std::map<Date, double>> grouped;
    for (std::size_t i = 0; i < table.rows(); ++i) {
        const auto& r = table.row(i);
        auto where = [&] { return fmt::format("{}:{}", table.source(), table.line_of(i)); };
        Date d;
        try {
            d = parse_date(r[c_date]);
        } catch (const DataError& e) {
            throw DataError(fmt::format("{}: {}", where(), e.what()));
        }
        bool ok = true;
        auto v = csv::parse_double(r[c_volume], &ok);
        if (!v) {
            throw DataError(fmt::format("{}: missing or malformed volume '{}'", where(), r[c_volume]));
        }
        if (*v < 0.0 || *v > 100.0) {
            throw DataError(fmt::format("{}: volume {} outside [0, 100]", where(), *v));
        }
        grouped[{r[c_topic], r[c_geo]}][d] = *v;
    }

    std::vector<TrendSeries> out;
    for (auto& [key, points] : grouped) {
        TrendSeries s;
        s.topic_id = key.first;
        s.geo = key.second;
        s.start = points.begin()->first;
        const Date last = points.rbegin()->first;
        const auto n = static_cast<std::size_t>((last - s.start).count()) + 1;
        if (n < 365) {
            throw DataError(fmt::format("{}: series ({}, {}) spans {} days, shorter than one full year",
                                        table.source(), s.topic_id, s.geo, n));
        }
        s.raw.assign(n, kNaN);
        s.interpolated.assign(n, 0);
        for (const auto& [d, v] : points) s.raw[static_cast<std::size_t>((d - s.start).count())] = v;
        // Interior gaps: linear interpolation rounded to the nearest integer.
        std::size_t i = 0;
        while (i < n) {
            if (!std::isnan(s.raw[i])) {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (std::isnan(s.raw[j])) ++j;  // last point is always present
            const double a = s.raw[i - 1];
            const double b = s.raw[j];
            const auto len = j - i;
            for (std::size_t k = 0; k < len; ++k) {
                double frac = static_cast<double>(k + 1) / static_cast<double>(len + 1);
                s.raw[i + k] = std::round(a + (b - a) * frac);
                s.interpolated[i + k] = 1;
            }
            i = j;
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::string sanitize(std::string_view text) {
    std::string out;
    for (char c : text) {
        bool keep = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                    c == '_' || c == '.';
        out.push_back(keep ? c : '_');
    }
    return out;
}

}  // namespace

std::string_view to_string(TopicCategory c) {
    return c == TopicCategory::BuildingType ? "building_type" : "productivity_tool";
}

TopicCategory parse_topic_category(std::string_view text) {
    if (text == "building_type") return TopicCategory::BuildingType;
    if (text == "productivity_tool") return TopicCategory::ProductivityTool;
    throw DataError(fmt::format("unknown topic category '{}' (allowed: building_type, productivity_tool)", text));
}

std::vector<TrendTopic> load_topic_catalog(const std::filesystem::path& path) {
    auto table = csv::Table::read(path);
    const auto c_id = table.column("topic_id");
    const auto c_name = table.column("display_name");
    const auto c_cat = table.column("category");
    std::vector<TrendTopic> out;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < table.rows(); ++i) {
        const auto& r = table.row(i);
        auto where = [&] { return fmt::format("{}:{}", table.source(), table.line_of(i)); };
        if (r[c_id].empty()) throw DataError(fmt::format("{}: empty topic_id", where()));
        if (!seen.insert(r[c_id]).second) {
            throw DataError(fmt::format("{}: duplicate topic_id '{}'", where(), r[c_id]));
        }
        try {
            out.push_back({r[c_id], r[c_name], parse_topic_category(r[c_cat])});
        } catch (const DataError& e) {
            throw DataError(fmt::format("{}: {}", where(), e.what()));
        }
    }
    if (out.empty()) throw DataError(fmt::format("{}: empty catalog", table.source()));
    return out;
}

std::optional<std::size_t> TrendSeries::index_of(Date d) const {
    if (d < start) return std::nullopt;
    auto i = static_cast<std::size_t>((d - start).count());
    if (i >= size()) return std::nullopt;
    return i;
}

double TrendSeries::standardized_at(Date d) const {
    auto i = index_of(d);
    if (!i || standardized.empty()) return kNaN;
    return standardized[*i];
}

std::vector<TrendSeries> load_trend_csv(const std::filesystem::path& path) {
    return series_from_table(csv::Table::read(path));
}

void write_trend_csv(std::span<const TrendSeries> series, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
    csv::Writer w(out);
    w.row({"topic_id", "geo", "date", "volume"});
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.size(); ++i) {
            w.row({s.topic_id, s.geo, format_date(s.date(i)), csv::format_double(s.raw[i])});
        }
    }
}

TrendSeries standardize_by_year(TrendSeries series, const StandardizeOptions& options) {
    series.standardized.assign(series.size(), 0.0);
    series.degenerate_years.clear();
    series.partial_years.clear();
    std::size_t i = 0;
    while (i < series.size()) {
        const int year = year_of(series.date(i));
        std::size_t j = i;
        while (j < series.size() && year_of(series.date(j)) == year) ++j;
        const auto n = j - i;
        if (static_cast<int>(n) < days_in_year(year)) {
            if (!options.allow_partial_years) {
                throw DataError(fmt::format("series ({}, {}) covers only {} of {} days in {}", series.topic_id,
                                            series.geo, n, days_in_year(year), year));
            }
            series.partial_years.push_back(year);
        }
        std::span<const double> block(series.raw.data() + i, n);
        const double mean = kernels::sum(block) / static_cast<double>(n);
        const double sd = std::sqrt(kernels::centered_sum_sq(block, mean) / static_cast<double>(n));
        if (sd > 0.0) {
            for (std::size_t k = i; k < j; ++k) series.standardized[k] = (series.raw[k] - mean) / sd;
        } else {
            series.degenerate_years.push_back(year);
        }
        i = j;
    }
    return series;
}

TrendFetcher::TrendFetcher(std::filesystem::path cache_dir, TrendTransport* transport, FetchOptions options,
                           Sleeper sleeper)
    : cache_dir_(std::move(cache_dir)), transport_(transport), options_(options), sleep_(std::move(sleeper)) {
    if (!sleep_) sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::filesystem::path TrendFetcher::cache_path(const std::string& topic_id, const std::string& geo,
                                               DateRange range) const {
    return cache_dir_ / fmt::format("{}__{}__{}_{}.csv", sanitize(topic_id), sanitize(geo), format_date(range.begin),
                                    format_date(range.end - std::chrono::days{1}));
}

std::string TrendFetcher::request_with_retries(const std::string& topic_id, const std::string& geo, DateRange range) {
    if (!transport_) {
        throw NetworkError(fmt::format("no network transport configured and no cached data for ({}, {})", topic_id, geo));
    }
    auto backoff = options_.initial_backoff;
    for (int attempt = 0;; ++attempt) {
        {
            std::lock_guard lock(gate_);
            auto now = std::chrono::steady_clock::now();
            if (last_request_) {
                auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(now - *last_request_);
                if (elapsed < options_.min_spacing) sleep_(options_.min_spacing - elapsed);
            }
            last_request_ = std::chrono::steady_clock::now();
            ++requests_;
        }
        try {
            return transport_->get(topic_id, geo, range);
        } catch (const NetworkError&) {
            if (attempt >= options_.max_retries) throw;
        } catch (const ThrottledError&) {
            if (attempt >= options_.max_retries) throw;
        }
        sleep_(backoff);
        backoff *= 2;
    }
}

TrendSeries TrendFetcher::fetch(const std::string& topic_id, const std::string& geo, DateRange range) {
    const auto path = cache_path(topic_id, geo, range);
    if (!std::filesystem::exists(path)) {
        auto body = request_with_retries(topic_id, geo, range);
        std::vector<TrendSeries> parsed;
        try {
            parsed = series_from_table(csv::Table::parse(body, fmt::format("response({}, {})", topic_id, geo)));
        } catch (const DataError& e) {
            throw DataError(fmt::format("unparseable trends response: {}", e.what()));
        }
        auto it = std::find_if(parsed.begin(), parsed.end(),
                               [&](const TrendSeries& s) { return s.topic_id == topic_id && s.geo == geo; });
        if (it == parsed.end()) {
            throw DataError(fmt::format("trends response lacks series ({}, {})", topic_id, geo));
        }
        std::filesystem::create_directories(cache_dir_);
        auto tmp = path;
        tmp += ".tmp";
        write_trend_csv(std::span<const TrendSeries>(&*it, 1), tmp);
        std::filesystem::rename(tmp, path);
    }
    auto cached = load_trend_csv(path);
    if (cached.size() != 1) throw DataError(fmt::format("corrupt trends cache file '{}'", path.string()));
    return std::move(cached.front());
}

}  // namespace trendproxy::trends
