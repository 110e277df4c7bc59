#include "trendproxy/calendar.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "trendproxy/csv.hpp"
#include "trendproxy/kernels.hpp"

namespace trendproxy::calendar {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<Date> dates_of_year(int year) {
    std::vector<Date> out;
    auto range = year_range(year);
    for (Date d = range.begin; d < range.end; d += std::chrono::days{1}) out.push_back(d);
    return out;
}

}  // namespace

std::size_t DayMatrix::usable_count() const {
    return static_cast<std::size_t>(std::count(usable.begin(), usable.end(), std::uint8_t{1}));
}

std::size_t CalendarSignal::defined_count() const {
    return static_cast<std::size_t>(std::count(defined.begin(), defined.end(), std::uint8_t{1}));
}

DayMatrix resample_daily(const ingest::MeterSeries& series, int year, const CalendarConfig& config) {
    DayMatrix m;
    m.meter_id = series.meter_id;
    m.year = year;
    m.dates = dates_of_year(year);
    m.values.assign(m.days() * kHoursPerDay, 0.0);
    m.usable.assign(m.days(), 0);

    for (std::size_t d = 0; d < m.days(); ++d) {
        auto row = m.row(d);
        std::array<bool, kHoursPerDay> ok{};
        double sum = 0.0;
        std::size_t n_valid = 0;
        for (std::size_t h = 0; h < kHoursPerDay; ++h) {
            auto idx = series.index_of(Hour{m.dates[d]} + std::chrono::hours{h});
            if (idx && series.valid[*idx]) {
                row[h] = series.readings[*idx];
                ok[h] = true;
                sum += row[h];
                ++n_valid;
            }
        }
        if (n_valid == 0 || n_valid < config.min_valid_hours) {
            std::fill(row.begin(), row.end(), kNaN);
            continue;
        }
        const double fill = sum / static_cast<double>(n_valid);
        for (std::size_t h = 0; h < kHoursPerDay; ++h) {
            if (!ok[h]) row[h] = fill;
        }
        m.usable[d] = 1;
    }
    if (m.usable_count() == 0) {
        throw DataError(fmt::format("meter '{}' has no usable days in {}", series.meter_id, year));
    }
    return m;
}

SymmetricEigen symmetric_eigen(std::span<const double> matrix, std::size_t n) {
    if (matrix.size() != n * n) throw std::invalid_argument("symmetric_eigen: matrix size mismatch");
    std::vector<double> a(matrix.begin(), matrix.end());
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

    auto off_diagonal = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) s += a[i * n + j] * a[i * n + j];
        return s;
    };
    double scale = 0.0;
    for (double x : a) scale += x * x;

    for (int sweep = 0; sweep < 100; ++sweep) {
        if (off_diagonal() <= 1e-30 * scale) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (apq == 0.0) continue;
                const double app = a[p * n + p];
                const double aqq = a[q * n + q];
                // Rotation angle that annihilates a[p][q] (Golub & Van Loan, sym.schur2).
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p];
                    const double akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k];
                    const double aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v[k * n + p];
                    const double vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return a[x * n + x] > a[y * n + y]; });
    SymmetricEigen out;
    out.n = n;
    out.values.resize(n);
    out.vectors.resize(n * n);
    for (std::size_t k = 0; k < n; ++k) {
        out.values[k] = a[order[k] * n + order[k]];
        for (std::size_t i = 0; i < n; ++i) out.vectors[i * n + k] = v[i * n + order[k]];
    }
    return out;
}

CalendarSignal pca_first_component(const DayMatrix& matrix) {
    constexpr std::size_t H = kHoursPerDay;
    std::vector<std::size_t> days;
    for (std::size_t d = 0; d < matrix.days(); ++d) {
        if (matrix.usable[d]) days.push_back(d);
    }
    if (days.size() < 2) {
        throw ZeroVarianceError(fmt::format("meter '{}': PCA needs at least 2 usable days", matrix.meter_id));
    }
    const double n = static_cast<double>(days.size());

    std::vector<double> mean(H, 0.0);
    for (auto d : days) kernels::axpy(1.0, matrix.row(d), mean);
    for (auto& x : mean) x /= n;

    std::vector<double> centered(days.size() * H);
    std::vector<double> cov(H * H, 0.0);
    for (std::size_t r = 0; r < days.size(); ++r) {
        auto row = matrix.row(days[r]);
        std::span<double> c(centered.data() + r * H, H);
        for (std::size_t h = 0; h < H; ++h) c[h] = row[h] - mean[h];
        // Rank-one update: cov += c c^T.
        for (std::size_t i = 0; i < H; ++i) {
            kernels::axpy(c[i], c, std::span<double>(cov.data() + i * H, H));
        }
    }
    for (auto& x : cov) x /= n;

    double trace = 0.0;
    for (std::size_t i = 0; i < H; ++i) trace += cov[i * H + i];
    const auto first = matrix.row(days.front());
    const bool identical = std::all_of(days.begin(), days.end(), [&](std::size_t d) {
        auto row = matrix.row(d);
        return std::equal(row.begin(), row.end(), first.begin());
    });
    // Centering identical rows can leave rounding residue; treat it as zero.
    if (identical || !(trace > 1e-26 * (1.0 + kernels::dot(mean, mean)))) {
        throw ZeroVarianceError(fmt::format("meter '{}' {}: all usable days identical", matrix.meter_id, matrix.year));
    }

    auto eig = symmetric_eigen(cov, H);
    std::vector<double> v(H);
    for (std::size_t i = 0; i < H; ++i) v[i] = eig.component(i, 0);

    std::vector<double> scores(days.size());
    std::vector<double> daily_mean(days.size());
    for (std::size_t r = 0; r < days.size(); ++r) {
        scores[r] = kernels::dot(std::span<const double>(centered.data() + r * H, H), v);
        daily_mean[r] = kernels::sum(matrix.row(days[r])) / static_cast<double>(H);
    }

    CalendarSignal out;
    out.meter_id = matrix.meter_id;
    out.year = matrix.year;
    out.dates = matrix.dates;
    out.scores.assign(matrix.days(), kNaN);
    out.defined.assign(matrix.days(), 0);
    out.explained_variance_ratio = std::clamp(eig.values[0] / trace, 0.0, 1.0);

    // Sign convention: non-negative covariance with daily mean energy; ties
    // resolved by making the largest-magnitude loading positive.
    const double ms = kernels::sum(scores) / n;
    const double md = kernels::sum(daily_mean) / n;
    const double cov_sd = kernels::centered_moments(scores, daily_mean, ms, md).sxy;
    bool flip = cov_sd < 0.0;
    if (cov_sd == 0.0) {
        auto it = std::max_element(v.begin(), v.end(), [](double x, double y) { return std::abs(x) < std::abs(y); });
        flip = *it < 0.0;
    }
    out.sign_convention_applied = flip;
    for (std::size_t r = 0; r < days.size(); ++r) {
        out.scores[days[r]] = flip ? -scores[r] : scores[r];
        out.defined[days[r]] = 1;
    }
    return out;
}

CalendarSignal daily_totals(const ingest::MeterSeries& series, int year, const CalendarConfig& config) {
    auto m = resample_daily(series, year, config);
    CalendarSignal out;
    out.meter_id = series.meter_id;
    out.year = year;
    out.dates = m.dates;
    out.scores.assign(m.days(), kNaN);
    out.defined.assign(m.days(), 0);
    out.from_fallback = true;
    for (std::size_t d = 0; d < m.days(); ++d) {
        if (!m.usable[d]) continue;
        double total = 0.0;
        for (std::size_t h = 0; h < kHoursPerDay; ++h) {
            auto idx = series.index_of(Hour{m.dates[d]} + std::chrono::hours{h});
            if (idx && series.valid[*idx]) total += series.readings[*idx];
        }
        out.scores[d] = total;
        out.defined[d] = 1;
    }
    return out;
}

CalendarSignal extract_calendar(const ingest::MeterSeries& series, int year, const CalendarConfig& config) {
    auto m = resample_daily(series, year, config);
    try {
        return pca_first_component(m);
    } catch (const ZeroVarianceError&) {
        return daily_totals(series, year, config);
    }
}

void write_calendar_signals(std::span<const CalendarSignal> signals, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
    csv::Writer w(out);
    w.row({"meter_id", "date", "score"});
    for (const auto& s : signals) {
        for (std::size_t d = 0; d < s.dates.size(); ++d) {
            w.row({s.meter_id, format_date(s.dates[d]), s.defined[d] ? csv::format_double(s.scores[d]) : ""});
        }
    }
}

}  // namespace trendproxy::calendar
