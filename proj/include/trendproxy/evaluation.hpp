#pragma once

// RMSLE scoring, day-type segmentation, baseline -> proposed change rates and
// benchmark tiers.

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "trendproxy/common.hpp"
#include "trendproxy/data_ingest.hpp"
#include "trendproxy/screening.hpp"

namespace trendproxy::eval {

struct PredictionRecord {
    std::string meter_id;
    Hour timestamp{};
    double actual = 0.0;     // kWh
    double predicted = 0.0;  // kWh
    ingest::DayType day_type = ingest::DayType::Regular;
    screening::CorrelationCategory category = screening::CorrelationCategory::Poor;
    ingest::MeterType meter_type = ingest::MeterType::Electricity;
    std::string site_id;
    std::string country;
    std::string topic_id;  // best-fit topic; empty when unscreenable
};

// sqrt(mean((ln(p + 1) - ln(a + 1))^2)). Throws DataError on empty input,
// length mismatch, negative or non-finite values.
double rmsle(std::span<const double> predicted, std::span<const double> actual);
double rmsle(std::span<const PredictionRecord> records);

// Pooled RMSLE per day type, labels taken from `calendar` by (site, date).
// Day types without records are absent. Unlabeled dates throw DataError.
std::map<ingest::DayType, double> segment_by_daytype(std::span<const PredictionRecord> records,
                                                     const ingest::DayTypeCalendar& calendar);

// 100 * (proposed - baseline) / baseline, unrounded. Throws DataError when
// baseline is not positive.
double change_rate(double baseline_rmsle, double proposed_rmsle);
// One decimal with sign: "-1.9%", "+50.0%", "0.0%".
std::string format_change_rate(double percent);

enum class Tier : std::uint8_t { Top5, Gold, Silver, Bronze, NoMedal };
std::string_view to_string(Tier tier);

// Average RMSLE of the Top-5 / Gold / Silver / Bronze teams per correlation
// category.
class BenchmarkTable {
public:
    static BenchmarkTable defaults();
    // Columns: category, top5, gold, silver, bronze.
    static BenchmarkTable load(const std::filesystem::path& path);

    // Throws DataError unless the four values are strictly increasing.
    void set(screening::CorrelationCategory category, std::array<double, 4> tiers);
    const std::array<double, 4>* find(screening::CorrelationCategory category) const;
    void write(const std::filesystem::path& path) const;

private:
    std::map<screening::CorrelationCategory, std::array<double, 4>> rows_;
};

// Smallest tier whose average is >= score; above Bronze gives NoMedal.
// Throws DataError for a category missing from the table.
Tier benchmark_tier(double score, screening::CorrelationCategory category, const BenchmarkTable& table);

struct EvalConfig {
    std::size_t min_meters = 3;
    DateRange range{};  // evaluation period; weekly series covers its ISO weeks
};

// One row of a breakdown: a group (e.g. meter_type=electricity,
// category=High) restricted to one day type or "all".
struct EvalCell {
    std::vector<std::pair<std::string, std::string>> key;
    std::string day_type;
    std::size_t n_meters = 0;
    std::size_t n_records = 0;
    double baseline_rmsle = 0.0;
    double proposed_rmsle = 0.0;
    double change_rate = 0.0;
    bool low_support = false;
    std::optional<Tier> baseline_tier;  // set for per-category rows over all days
    std::optional<Tier> proposed_tier;
};

struct WeeklyPoint {
    std::string group;
    IsoWeek week{};
    std::size_t n_records = 0;
    std::optional<double> baseline_rmsle;  // absent for weeks without records
    std::optional<double> proposed_rmsle;
};

struct EvalReport {
    std::size_t min_meters = 3;
    std::size_t n_meters = 0;
    std::size_t n_records = 0;
    double baseline_rmsle = 0.0;
    double proposed_rmsle = 0.0;
    double change_rate = 0.0;
    std::vector<EvalCell> cells;  // breakdowns: scope=all, meter_type x category, category, topic, country
    std::vector<WeeklyPoint> weekly;
    BenchmarkTable benchmark;

    std::vector<const EvalCell*> breakdown(std::string_view first_dimension, std::size_t key_size) const;
};

// Every ISO week touched by the dates of `range`, in order.
std::vector<IsoWeek> iso_weeks_in(DateRange range);

// Baseline and proposed records must cover the same (meter, timestamp) rows
// with equal actuals, in the same order; otherwise DataError.
EvalReport evaluate(std::span<const PredictionRecord> baseline, std::span<const PredictionRecord> proposed,
                    const EvalConfig& config, const BenchmarkTable& benchmark = BenchmarkTable::defaults());

// report.json, table_overall.csv, table_meter_type.csv, table_category.csv, table_topic.csv,
// table_country.csv, table_benchmark.csv, weekly_errors.csv.
void emit_report(const EvalReport& report, const std::filesystem::path& dir);

// Predictions CSV: meter_id, timestamp, actual, predicted, day_type, category,
// meter_type, site_id, country, topic_id.
void write_predictions(std::span<const PredictionRecord> records, const std::filesystem::path& path);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

}  // namespace trendproxy::eval
