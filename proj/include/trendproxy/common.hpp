#pragma once

#include <chrono>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace trendproxy {

inline constexpr std::string_view kVersion = "0.1.0";

// Error categories map onto CLI exit codes (see tools/trendproxy_main.cpp).
enum class ErrorKind {
    Config,
    Data,
    MissingArtifact,
    Network,
    Throttled,
    ZeroVariance,
    ConstantInput,
    InsufficientOverlap,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

#define TRENDPROXY_DEFINE_ERROR(Name, Kind)                                      \
    class Name : public Error {                                                  \
    public:                                                                      \
        explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
    }

TRENDPROXY_DEFINE_ERROR(ConfigError, Config);
TRENDPROXY_DEFINE_ERROR(DataError, Data);
TRENDPROXY_DEFINE_ERROR(MissingArtifactError, MissingArtifact);
TRENDPROXY_DEFINE_ERROR(NetworkError, Network);
TRENDPROXY_DEFINE_ERROR(ThrottledError, Throttled);
TRENDPROXY_DEFINE_ERROR(ZeroVarianceError, ZeroVariance);
TRENDPROXY_DEFINE_ERROR(ConstantInputError, ConstantInput);
TRENDPROXY_DEFINE_ERROR(InsufficientOverlapError, InsufficientOverlap);

#undef TRENDPROXY_DEFINE_ERROR

// Calendar time. All timestamps are site-local naive time; no zone conversion.
using Date = std::chrono::sys_days;
using Hour = std::chrono::sys_time<std::chrono::hours>;

// Half-open [begin, end) range of days.
struct DateRange {
    Date begin;
    Date end;

    bool contains(Date d) const { return d >= begin && d < end; }
    std::int64_t days() const { return (end - begin).count(); }
};

DateRange year_range(int year);
DateRange years_range(int first_year, int last_year);

Date make_date(int year, unsigned month, unsigned day);
int year_of(Date d);
unsigned month_of(Date d);
int days_in_year(int year);
Date date_of(Hour h);
int hour_of_day(Hour h);
// 0 = Monday ... 6 = Sunday.
int day_of_week(Date d);

struct IsoWeek {
    int year;
    int week;
    auto operator<=>(const IsoWeek&) const = default;
};
IsoWeek iso_week(Date d);
std::string format_iso_week(IsoWeek w);

// "YYYY-MM-DD"
Date parse_date(std::string_view text);
// "YYYY-MM-DD HH:MM:SS" (also accepts 'T' separator and omitted seconds).
Hour parse_timestamp(std::string_view text);
std::string format_date(Date d);
std::string format_timestamp(Hour h);

}  // namespace trendproxy
