#pragma once

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
#include "trendproxy/data_ingest.hpp"
#include "trendproxy/screening.hpp"
#include "trendproxy/trends.hpp"

namespace trendproxy::features {

enum class FeatureKind : std::uint8_t { Numeric, Categorical };
enum class FeatureSource : std::uint8_t { Meta, Weather, Temporal, Trend };

std::string_view to_string(FeatureKind kind);
std::string_view to_string(FeatureSource source);

struct FeatureSpec {
    std::string name;
    FeatureKind kind = FeatureKind::Numeric;
    FeatureSource source = FeatureSource::Meta;

    bool operator==(const FeatureSpec&) const = default;
};

struct FeatureSchema {
    std::vector<FeatureSpec> features;

    // building_id, meter_type, primary_use, log10_square_feet, year_built,
    // air_temperature, dew_temperature, cloud_coverage, precip_depth,
    // hour_of_day, day_of_week
    static FeatureSchema baseline();
    // baseline + trend_value
    static FeatureSchema proposed();

    std::size_t width() const { return features.size(); }
    std::optional<std::size_t> index_of(std::string_view name) const;
    bool operator==(const FeatureSchema&) const = default;
};

enum class Mode : std::uint8_t { Baseline, Proposed };
std::string_view to_string(Mode mode);

struct RowKey {
    std::uint32_t meter = 0;  // index into FeatureMatrix::meter_ids
    Hour timestamp{};
};

// Column-major feature table. Missing cells are NaN. Categorical columns keep
// their string labels until encode_categoricals replaces them with codes.
struct FeatureMatrix {
    FeatureSchema schema;
    std::vector<std::string> meter_ids;
    std::vector<RowKey> rows;
    std::vector<std::vector<double>> columns;
    std::vector<std::vector<std::string>> labels;  // per column; empty for numeric or once encoded

    std::size_t row_count() const { return rows.size(); }
    std::size_t width() const { return schema.width(); }
    double at(std::size_t row, std::size_t col) const { return columns[col][row]; }
    bool encoded() const;
    // Appends one column (used for robustness experiments).
    void add_numeric_column(FeatureSpec spec, std::vector<double> values);
};

using TargetVector = std::vector<double>;

struct AssemblyInputs {
    std::span<const ingest::MeterSeries> meters;
    const ingest::BuildingTable* metadata = nullptr;
    const std::map<std::string, ingest::WeatherSeries>* weather = nullptr;
    // Standardized series; looked up by (best topic, geo) in proposed mode.
    std::span<const trends::TrendSeries> trends;
    // Required in proposed mode; unscreenable meters get a missing trend value.
    std::span<const screening::CensusEntry> screening;
};

struct Assembled {
    FeatureMatrix matrix;
    TargetVector target;  // log1p(reading)
};

// One row per valid hour in `range`, ordered by meter_id then timestamp.
Assembled build_feature_matrix(const AssemblyInputs& inputs, Mode mode, DateRange range);

// Per categorical column: labels in first-appearance order; code = position.
struct CategoryDictionary {
    std::vector<std::vector<std::string>> columns;

    int code_of(std::size_t column, std::string_view label) const;
    bool operator==(const CategoryDictionary&) const = default;
};

inline constexpr int kUnknownCode = -1;

struct Encoded {
    FeatureMatrix matrix;
    CategoryDictionary dictionary;
};

// Without a dictionary one is built from the data; with one, labels it does
// not contain (and empty labels) map to kUnknownCode.
Encoded encode_categoricals(FeatureMatrix matrix, const CategoryDictionary* dictionary = nullptr);
std::string decode_category(const CategoryDictionary& dictionary, std::size_t column, int code);

// Audit dump: meter_id, timestamp, one column per feature, target.
void write_feature_matrix(const FeatureMatrix& matrix, const TargetVector& target, const std::filesystem::path& path);

}  // namespace trendproxy::features
