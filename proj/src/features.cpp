#include "trendproxy/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "trendproxy/csv.hpp"

namespace trendproxy::features {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

enum Column : std::size_t {
    kBuilding,
    kMeterType,
    kPrimaryUse,
    kLogSquareFeet,
    kYearBuilt,
    kAirTemperature,
    kDewTemperature,
    kCloudCoverage,
    kPrecipDepth,
    kHourOfDay,
    kDayOfWeek,
    kTrendValue,
};

}  // namespace

std::string_view to_string(FeatureKind kind) { return kind == FeatureKind::Numeric ? "numeric" : "categorical"; }

std::string_view to_string(FeatureSource source) {
    switch (source) {
        case FeatureSource::Meta: return "meta";
        case FeatureSource::Weather: return "weather";
        case FeatureSource::Temporal: return "temporal";
        case FeatureSource::Trend: return "trend";
    }
    return "meta";
}

std::string_view to_string(Mode mode) { return mode == Mode::Baseline ? "baseline" : "proposed"; }

FeatureSchema FeatureSchema::baseline() {
    using K = FeatureKind;
    using S = FeatureSource;
    return {{
        {"building_id", K::Categorical, S::Meta},
        {"meter_type", K::Categorical, S::Meta},
        {"primary_use", K::Categorical, S::Meta},
        {"log10_square_feet", K::Numeric, S::Meta},
        {"year_built", K::Numeric, S::Meta},
        {"air_temperature", K::Numeric, S::Weather},
        {"dew_temperature", K::Numeric, S::Weather},
        {"cloud_coverage", K::Numeric, S::Weather},
        {"precip_depth", K::Numeric, S::Weather},
        {"hour_of_day", K::Numeric, S::Temporal},
        {"day_of_week", K::Numeric, S::Temporal},
    }};
}

FeatureSchema FeatureSchema::proposed() {
    auto s = baseline();
    s.features.push_back({"trend_value", FeatureKind::Numeric, FeatureSource::Trend});
    return s;
}

std::optional<std::size_t> FeatureSchema::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (features[i].name == name) return i;
    }
    return std::nullopt;
}

bool FeatureMatrix::encoded() const {
    for (std::size_t c = 0; c < width(); ++c) {
        if (schema.features[c].kind == FeatureKind::Categorical && !labels[c].empty()) return false;
    }
    return true;
}

void FeatureMatrix::add_numeric_column(FeatureSpec spec, std::vector<double> values) {
    if (values.size() != row_count()) throw std::invalid_argument("add_numeric_column: row count mismatch");
    spec.kind = FeatureKind::Numeric;
    schema.features.push_back(std::move(spec));
    columns.push_back(std::move(values));
    labels.emplace_back();
}

Assembled build_feature_matrix(const AssemblyInputs& in, Mode mode, DateRange range) {
    if (!in.metadata || !in.weather) throw std::invalid_argument("build_feature_matrix: metadata and weather required");
    Assembled out;
    auto& m = out.matrix;
    m.schema = mode == Mode::Baseline ? FeatureSchema::baseline() : FeatureSchema::proposed();
    const auto width = m.schema.width();
    m.columns.assign(width, {});
    m.labels.assign(width, {});

    std::map<std::string_view, const screening::CensusEntry*> screen_by_meter;
    for (const auto& e : in.screening) screen_by_meter[e.meter_id] = &e;
    std::map<std::pair<std::string_view, std::string_view>, const trends::TrendSeries*> trend_by_key;
    for (const auto& t : in.trends) trend_by_key[{t.topic_id, t.geo}] = &t;

    std::vector<const ingest::MeterSeries*> meters;
    for (const auto& s : in.meters) meters.push_back(&s);
    std::sort(meters.begin(), meters.end(), [](auto* a, auto* b) { return a->meter_id < b->meter_id; });

    for (const auto* s : meters) {
        const auto* meta = in.metadata->find(s->building_id);
        if (!meta) throw DataError(fmt::format("meter '{}' lacks building metadata", s->meter_id));
        const ingest::WeatherSeries* weather = nullptr;
        if (auto it = in.weather->find(meta->site_id); it != in.weather->end()) weather = &it->second;

        const trends::TrendSeries* trend = nullptr;
        if (mode == Mode::Proposed) {
            auto it = screen_by_meter.find(s->meter_id);
            if (it == screen_by_meter.end()) {
                throw DataError(fmt::format("proposed mode: meter '{}' has no screening entry", s->meter_id));
            }
            if (const auto& r = it->second->result) {
                auto t = trend_by_key.find({r->best_topic_id, r->geo});
                if (t == trend_by_key.end()) {
                    throw DataError(fmt::format("meter '{}': best topic ({}, {}) has no trend series", s->meter_id,
                                                r->best_topic_id, r->geo));
                }
                trend = t->second;
            }
        }

        const auto meter_index = static_cast<std::uint32_t>(m.meter_ids.size());
        m.meter_ids.push_back(s->meter_id);
        const std::string type_label{ingest::to_string(s->type)};
        const double log_sqft = std::log10(meta->square_feet);
        const double year_built = meta->year_built ? static_cast<double>(*meta->year_built) : kNaN;

        for (std::size_t i = 0; i < s->size(); ++i) {
            if (!s->valid[i]) continue;
            const Hour t = s->timestamp(i);
            const Date d = date_of(t);
            if (!range.contains(d)) continue;
            m.rows.push_back({meter_index, t});
            m.labels[kBuilding].push_back(s->building_id);
            m.labels[kMeterType].push_back(type_label);
            m.labels[kPrimaryUse].push_back(meta->primary_use);
            m.columns[kBuilding].push_back(kNaN);
            m.columns[kMeterType].push_back(kNaN);
            m.columns[kPrimaryUse].push_back(kNaN);
            m.columns[kLogSquareFeet].push_back(log_sqft);
            m.columns[kYearBuilt].push_back(year_built);
            auto w = [&](ingest::WeatherField f) { return weather ? weather->value_at(f, t) : kNaN; };
            m.columns[kAirTemperature].push_back(w(ingest::WeatherField::AirTemperature));
            m.columns[kDewTemperature].push_back(w(ingest::WeatherField::DewTemperature));
            m.columns[kCloudCoverage].push_back(w(ingest::WeatherField::CloudCoverage));
            m.columns[kPrecipDepth].push_back(w(ingest::WeatherField::PrecipDepth));
            m.columns[kHourOfDay].push_back(static_cast<double>(hour_of_day(t)));
            m.columns[kDayOfWeek].push_back(static_cast<double>(day_of_week(d)));
            if (mode == Mode::Proposed) m.columns[kTrendValue].push_back(trend ? trend->standardized_at(d) : kNaN);
            out.target.push_back(std::log1p(s->readings[i]));
        }
    }
    return out;
}

int CategoryDictionary::code_of(std::size_t column, std::string_view label) const {
    if (label.empty() || column >= columns.size()) return kUnknownCode;
    const auto& labels = columns[column];
    auto it = std::find(labels.begin(), labels.end(), label);
    return it == labels.end() ? kUnknownCode : static_cast<int>(it - labels.begin());
}

Encoded encode_categoricals(FeatureMatrix matrix, const CategoryDictionary* dictionary) {
    Encoded out;
    out.dictionary.columns.assign(matrix.width(), {});
    if (dictionary) out.dictionary = *dictionary;
    if (out.dictionary.columns.size() < matrix.width()) out.dictionary.columns.resize(matrix.width());

    for (std::size_t c = 0; c < matrix.width(); ++c) {
        if (matrix.schema.features[c].kind != FeatureKind::Categorical) continue;
        auto& labels = matrix.labels[c];
        if (labels.empty()) {
            // Already encoded, or a categorical column with no rows.
            if (matrix.row_count() == 0) continue;
            if (std::all_of(matrix.columns[c].begin(), matrix.columns[c].end(),
                            [](double x) { return std::isnan(x); })) {
                std::fill(matrix.columns[c].begin(), matrix.columns[c].end(), double{kUnknownCode});
            }
            continue;
        }
        auto& dict = out.dictionary.columns[c];
        std::map<std::string, int, std::less<>> index;
        for (std::size_t k = 0; k < dict.size(); ++k) index.emplace(dict[k], static_cast<int>(k));
        auto& col = matrix.columns[c];
        col.resize(labels.size());
        for (std::size_t r = 0; r < labels.size(); ++r) {
            const auto& label = labels[r];
            int code = kUnknownCode;
            if (!label.empty()) {
                if (auto it = index.find(label); it != index.end()) {
                    code = it->second;
                } else if (!dictionary) {
                    code = static_cast<int>(dict.size());
                    dict.push_back(label);
                    index.emplace(label, code);
                }
            }
            col[r] = static_cast<double>(code);
        }
        labels.clear();
        labels.shrink_to_fit();
    }
    out.matrix = std::move(matrix);
    return out;
}

std::string decode_category(const CategoryDictionary& dictionary, std::size_t column, int code) {
    if (code < 0 || column >= dictionary.columns.size() ||
        static_cast<std::size_t>(code) >= dictionary.columns[column].size()) {
        return {};
    }
    return dictionary.columns[column][static_cast<std::size_t>(code)];
}

void write_feature_matrix(const FeatureMatrix& matrix, const TargetVector& target, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
    csv::Writer w(out);
    std::vector<std::string> header{"meter_id", "timestamp"};
    for (const auto& f : matrix.schema.features) header.push_back(f.name);
    header.emplace_back("target");
    w.row(header);
    for (std::size_t r = 0; r < matrix.row_count(); ++r) {
        std::vector<std::string> row{matrix.meter_ids[matrix.rows[r].meter], format_timestamp(matrix.rows[r].timestamp)};
        for (std::size_t c = 0; c < matrix.width(); ++c) {
            if (!matrix.labels[c].empty()) {
                row.push_back(matrix.labels[c][r]);
            } else {
                row.push_back(csv::format_double(matrix.columns[c][r]));
            }
        }
        row.push_back(csv::format_double(target[r]));
        w.row(row);
    }
}

}  // namespace trendproxy::features
