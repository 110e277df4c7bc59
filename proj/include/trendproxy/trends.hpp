#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trendproxy/common.hpp"

namespace trendproxy::trends {

enum class TopicCategory : std::uint8_t { BuildingType, ProductivityTool };

std::string_view to_string(TopicCategory c);
TopicCategory parse_topic_category(std::string_view text);

struct TrendTopic {
    std::string topic_id;
    std::string display_name;
    TopicCategory category = TopicCategory::BuildingType;
};

// Columns: topic_id, display_name, category.
std::vector<TrendTopic> load_topic_catalog(const std::filesystem::path& path);

// Daily search volume for one (topic, geo). raw is on the platform's 0-100
// scale; standardized holds per-calendar-year z-scores once
// standardize_by_year has run (empty before).
struct TrendSeries {
    std::string topic_id;
    std::string geo;
    Date start{};
    std::vector<double> raw;
    std::vector<std::uint8_t> interpolated;
    std::vector<double> standardized;
    std::vector<int> degenerate_years;
    std::vector<int> partial_years;

    std::size_t size() const { return raw.size(); }
    Date date(std::size_t i) const { return start + std::chrono::days{static_cast<long>(i)}; }
    std::optional<std::size_t> index_of(Date d) const;
    // NaN outside the series or before standardization.
    double standardized_at(Date d) const;
};

// Columns: topic_id, geo, date, volume. One series per (topic_id, geo),
// ordered by (topic_id, geo).
std::vector<TrendSeries> load_trend_csv(const std::filesystem::path& path);
void write_trend_csv(std::span<const TrendSeries> series, const std::filesystem::path& path);

struct StandardizeOptions {
    bool allow_partial_years = false;
};

// Per calendar year: (raw - mean) / population std. A zero-variance year maps
// to zeros and is listed in degenerate_years.
TrendSeries standardize_by_year(TrendSeries series, const StandardizeOptions& options = {});

// Transport used by TrendFetcher. Implementations return the response body in
// the trends CSV schema, or throw NetworkError / ThrottledError.
class TrendTransport {
public:
    virtual ~TrendTransport() = default;
    virtual std::string get(const std::string& topic_id, const std::string& geo, DateRange range) = 0;
};

// Plain-HTTP gateway: GET {base_url}/trends?topic=..&geo=..&start=..&end=..
// (end inclusive). HTTP 429 maps to ThrottledError.
std::unique_ptr<TrendTransport> make_http_transport(std::string base_url);

struct FetchOptions {
    std::chrono::milliseconds min_spacing{1000};
    int max_retries = 3;
    std::chrono::milliseconds initial_backoff{2000};
};

// Cache-first fetcher. Cache files use the trends CSV schema, one per
// (topic, geo, range). Requests pass through a single rate-limit gate.
class TrendFetcher {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    TrendFetcher(std::filesystem::path cache_dir, TrendTransport* transport, FetchOptions options = {},
                 Sleeper sleeper = {});

    TrendSeries fetch(const std::string& topic_id, const std::string& geo, DateRange range);

    std::filesystem::path cache_path(const std::string& topic_id, const std::string& geo, DateRange range) const;
    std::size_t requests_issued() const { return requests_; }

private:
    std::string request_with_retries(const std::string& topic_id, const std::string& geo, DateRange range);

    std::filesystem::path cache_dir_;
    TrendTransport* transport_;
    FetchOptions options_;
    Sleeper sleep_;
    std::mutex gate_;
    std::optional<std::chrono::steady_clock::time_point> last_request_;
    std::size_t requests_ = 0;
};

}  // namespace trendproxy::trends
