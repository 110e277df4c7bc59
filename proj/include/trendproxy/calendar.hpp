#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trendproxy/common.hpp"
#include "trendproxy/data_ingest.hpp"

namespace trendproxy::calendar {

inline constexpr std::size_t kHoursPerDay = 24;

// One calendar year of a meter folded into days (rows) x hours (columns).
struct DayMatrix {
    std::string meter_id;
    int year = 0;
    std::vector<Date> dates;
    std::vector<double> values;  // row-major, dates.size() x 24
    std::vector<std::uint8_t> usable;

    std::size_t days() const { return dates.size(); }
    std::span<const double> row(std::size_t d) const { return {values.data() + d * kHoursPerDay, kHoursPerDay}; }
    std::span<double> row(std::size_t d) { return {values.data() + d * kHoursPerDay, kHoursPerDay}; }
    std::size_t usable_count() const;
};

struct CalendarConfig {
    std::size_t min_valid_hours = 12;
};

// Days with fewer than min_valid_hours valid readings are unusable; missing
// hours inside usable days take the mean of that day's valid hours.
DayMatrix resample_daily(const ingest::MeterSeries& series, int year, const CalendarConfig& config = {});

struct CalendarSignal {
    std::string meter_id;
    int year = 0;
    std::vector<Date> dates;
    std::vector<double> scores;  // NaN on unusable days
    std::vector<std::uint8_t> defined;
    std::optional<double> explained_variance_ratio;
    bool sign_convention_applied = false;
    bool from_fallback = false;

    std::size_t defined_count() const;
};

// Eigen-decomposition of a symmetric n x n matrix (row-major) by cyclic
// Jacobi rotations. Eigenvalues descending; vectors stored column-wise.
struct SymmetricEigen {
    std::size_t n = 0;
    std::vector<double> values;
    std::vector<double> vectors;  // vectors[i * n + k] = component i of eigenvector k

    double component(std::size_t i, std::size_t k) const { return vectors[i * n + k]; }
};
SymmetricEigen symmetric_eigen(std::span<const double> matrix, std::size_t n);

// Days are observations, hours are features. Scores are the projections of the
// centered usable days onto the unit top eigenvector of the 24 x 24 hour
// covariance, signed so that they correlate non-negatively with daily mean
// energy. Throws ZeroVarianceError when all usable rows are identical.
CalendarSignal pca_first_component(const DayMatrix& matrix);

// Fallback signal: daily sum of valid readings on usable days.
CalendarSignal daily_totals(const ingest::MeterSeries& series, int year, const CalendarConfig& config = {});

// PCA signal, or daily totals when PCA is degenerate.
CalendarSignal extract_calendar(const ingest::MeterSeries& series, int year, const CalendarConfig& config = {});

// Columns: meter_id, date, score (empty when undefined).
void write_calendar_signals(std::span<const CalendarSignal> signals, const std::filesystem::path& path);

}  // namespace trendproxy::calendar
