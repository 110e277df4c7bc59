#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trendproxy/calendar.hpp"
#include "trendproxy/data_ingest.hpp"
#include "trendproxy/trends.hpp"

namespace trendproxy::screening {

enum class CorrelationCategory : std::uint8_t { Poor = 0, Fair = 1, High = 2 };
inline constexpr std::array<CorrelationCategory, 3> kCategories{CorrelationCategory::Poor, CorrelationCategory::Fair,
                                                                CorrelationCategory::High};

std::string_view to_string(CorrelationCategory c);
CorrelationCategory parse_category(std::string_view text);

struct ScreeningConfig {
    double fair_threshold = 0.6;
    double high_threshold = 0.8;
    std::size_t min_overlap_days = 180;
};

// Pearson product-moment correlation. Index pairs where either side is NaN
// are dropped first. Throws InsufficientOverlapError for fewer than 3 pairs
// and ConstantInputError when either side is constant.
double pearson_r(std::span<const double> x, std::span<const double> y);

// r^2 < fair -> Poor; fair <= r^2 <= high -> Fair; r^2 > high -> High.
CorrelationCategory classify_correlation(double r_squared, const ScreeningConfig& config = {});

struct ScreeningResult {
    std::string meter_id;
    std::string best_topic_id;
    std::string geo;
    double r = 0.0;
    double r_squared = 0.0;
    CorrelationCategory category = CorrelationCategory::Poor;
    std::size_t n_days_used = 0;
    std::map<std::string, double> per_topic_r2;
};

// Correlates the calendar against every standardized topic series of the
// meter's geo over usable days of the training year. The winner maximizes r^2
// (ties: smallest topic_id). Throws InsufficientOverlapError when no topic
// reaches min_overlap_days, ConstantInputError when all topics are constant.
ScreeningResult screen_meter(const calendar::CalendarSignal& signal, std::span<const trends::TrendSeries> trends,
                             int training_year, const ScreeningConfig& config = {});

// One census input row; result empty for unscreenable meters (counted Poor).
struct CensusEntry {
    std::string meter_id;
    ingest::MeterType meter_type = ingest::MeterType::Electricity;
    std::string primary_use;
    std::optional<ScreeningResult> result;

    CorrelationCategory category() const { return result ? result->category : CorrelationCategory::Poor; }
};

struct CensusRow {
    std::string label;
    std::array<std::size_t, 3> counts{};  // Poor, Fair, High
    std::size_t total() const { return counts[0] + counts[1] + counts[2]; }
};

struct CensusTable {
    std::string dimension;
    std::vector<CensusRow> rows;
    std::size_t grand_total = 0;

    // Percentage of the grand total; 0 for an empty table.
    double percent(std::size_t count) const;
    CensusRow sum_row() const;
};

struct Census {
    CensusTable by_meter_type;    // one row per meter type, always all four
    CensusTable by_primary_use;
    CensusTable by_topic;         // "(none)" collects unscreenable meters
};

Census screening_census(std::span<const CensusEntry> entries);

void write_screening_results(std::span<const CensusEntry> entries, const std::filesystem::path& path);
std::vector<CensusEntry> read_screening_results(const std::filesystem::path& path);
void write_census_table(const CensusTable& table, const std::filesystem::path& path);

}  // namespace trendproxy::screening
