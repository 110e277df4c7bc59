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

#include "trendproxy/common.hpp"

namespace trendproxy::ingest {

enum class MeterType : std::uint8_t { Electricity = 0, ChilledWater = 1, Steam = 2, HotWater = 3 };

inline constexpr std::array<MeterType, 4> kMeterTypes{MeterType::Electricity, MeterType::ChilledWater,
                                                      MeterType::Steam, MeterType::HotWater};

std::string_view to_string(MeterType type);
// Accepts the BDG2 numeric code ("0".."3") or the name ("electricity", ...).
MeterType parse_meter_type(std::string_view text);

// One meter's hourly readings on a gap-free hourly grid. Hour i is start + i;
// absent or rejected readings have valid[i] == 0.
struct MeterSeries {
    std::string meter_id;
    std::string building_id;
    std::string site_id;
    MeterType type = MeterType::Electricity;
    Hour start{};
    std::vector<double> readings;
    std::vector<std::uint8_t> valid;

    std::size_t size() const { return readings.size(); }
    Hour timestamp(std::size_t i) const { return start + std::chrono::hours{static_cast<long>(i)}; }
    std::size_t valid_count() const;
    // Index of the hour, or nullopt outside the grid.
    std::optional<std::size_t> index_of(Hour h) const;
};

std::string make_meter_id(std::string_view building_id, MeterType type);

struct MeterLoadOptions {
    // Half-open; rows outside are dropped. Without a range each meter spans
    // its own first..last timestamp.
    std::optional<DateRange> range;
};

struct MeterLoadResult {
    std::vector<MeterSeries> series;  // ordered by meter_id
    std::size_t duplicate_warning_count = 0;
    std::size_t negative_reading_count = 0;
    std::size_t unparseable_reading_count = 0;
    std::size_t dropped_out_of_range = 0;
};

// Columns: building_id, meter, timestamp, meter_reading [, valid].
MeterLoadResult load_meter_readings(const std::filesystem::path& path, const MeterLoadOptions& options = {});
// Writes every grid hour with the optional `valid` column so that a reload
// reproduces the masked series exactly.
void write_meter_readings(std::span<const MeterSeries> series, const std::filesystem::path& path);

struct BuildingMeta {
    std::string building_id;
    std::string site_id;
    std::string primary_use;
    double square_feet = 0.0;
    std::optional<int> year_built;
    std::optional<int> floor_count;
};

class BuildingTable {
public:
    void insert(BuildingMeta meta);
    const BuildingMeta* find(std::string_view building_id) const;
    const BuildingMeta& at(std::string_view building_id) const;
    const std::map<std::string, BuildingMeta, std::less<>>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

private:
    std::map<std::string, BuildingMeta, std::less<>> entries_;
};

BuildingTable load_building_metadata(const std::filesystem::path& path);

// Fills site_id from the metadata table; throws DataError for a meter whose
// building has no metadata.
void attach_sites(std::span<MeterSeries> series, const BuildingTable& meta);

enum class WeatherField : std::uint8_t {
    AirTemperature,
    CloudCoverage,
    DewTemperature,
    PrecipDepth,
    SeaLevelPressure,
    WindSpeed,
    WindDirection,
};
inline constexpr std::size_t kWeatherFieldCount = 7;
std::string_view column_name(WeatherField field);

struct WeatherChannel {
    std::vector<double> values;
    std::vector<std::uint8_t> present;
    std::vector<std::uint8_t> imputed;
};

struct WeatherSeries {
    std::string site_id;
    Hour start{};
    std::size_t hours = 0;
    std::array<WeatherChannel, kWeatherFieldCount> fields;

    WeatherChannel& channel(WeatherField f) { return fields[static_cast<std::size_t>(f)]; }
    const WeatherChannel& channel(WeatherField f) const { return fields[static_cast<std::size_t>(f)]; }
    Hour timestamp(std::size_t i) const { return start + std::chrono::hours{static_cast<long>(i)}; }
    std::optional<std::size_t> index_of(Hour h) const;
    // NaN when missing or outside the grid.
    double value_at(WeatherField f, Hour h) const;
};

struct WeatherLoadResult {
    std::map<std::string, WeatherSeries> sites;
    std::size_t warning_count = 0;
    std::vector<std::string> warnings;
};

// Columns: site_id, timestamp, air_temperature, cloud_coverage,
// dew_temperature, precip_depth_1_hr (or precip_depth), sea_level_pressure,
// wind_direction, wind_speed.
WeatherLoadResult load_weather(const std::filesystem::path& path, std::optional<DateRange> range = std::nullopt);
void write_weather(const std::map<std::string, WeatherSeries>& sites, const std::filesystem::path& path);

struct ImputeConfig {
    std::size_t max_interp_hours = 6;
};

WeatherSeries impute_weather(const WeatherSeries& weather, const ImputeConfig& config = {});

enum class DayType : std::uint8_t { Regular, PublicHoliday, SiteSpecific };
inline constexpr std::array<DayType, 3> kDayTypes{DayType::Regular, DayType::PublicHoliday, DayType::SiteSpecific};
std::string_view to_string(DayType type);
DayType parse_day_type(std::string_view text);

class DayTypeCalendar {
public:
    void set(const std::string& site_id, Date date, DayType type);
    std::optional<DayType> find(std::string_view site_id, Date date) const;
    // Throws DataError naming the site and date when unlabeled.
    DayType at(std::string_view site_id, Date date) const;
    bool has_site(std::string_view site_id) const;
    std::vector<std::string> sites() const;

private:
    std::map<std::string, std::map<Date, DayType>, std::less<>> labels_;
};

// Columns: site_id, date, day_type. When `required` is given every site in the
// file must label every date of the range.
DayTypeCalendar load_daytype_calendar(const std::filesystem::path& path,
                                      std::optional<DateRange> required = std::nullopt);

struct CleaningConfig {
    double z_threshold = 8.0;
    std::size_t min_constant_hours = 48;
};

struct CleaningReport {
    std::string meter_id;
    std::size_t removed_outlier_count = 0;
    std::size_t removed_constant_run_count = 0;
    std::vector<Hour> removed_hours;  // sorted
    std::vector<std::string> rules_applied;
};

struct CleanedMeter {
    MeterSeries series;
    CleaningReport report;
};

CleanedMeter clean_meter_series(const MeterSeries& series, const CleaningConfig& config = {});

void write_cleaning_reports(std::span<const CleaningReport> reports, const std::filesystem::path& path);

}  // namespace trendproxy::ingest
