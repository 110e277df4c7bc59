#include "trendproxy/common.hpp"

#include <charconv>

#include <fmt/format.h>

namespace trendproxy {

namespace chr = std::chrono;

namespace {

int parse_fixed_int(std::string_view text, std::size_t pos, std::size_t len, std::string_view whole) {
    int value = 0;
    if (pos + len > text.size()) {
        throw DataError(fmt::format("malformed date/time '{}'", whole));
    }
    auto first = text.data() + pos;
    auto [ptr, ec] = std::from_chars(first, first + len, value);
    if (ec != std::errc{} || ptr != first + len) {
        throw DataError(fmt::format("malformed date/time '{}'", whole));
    }
    return value;
}

}  // namespace

Date make_date(int year, unsigned month, unsigned day) {
    chr::year_month_day ymd{chr::year{year}, chr::month{month}, chr::day{day}};
    if (!ymd.ok()) {
        throw DataError(fmt::format("invalid calendar date {:04d}-{:02d}-{:02d}", year, month, day));
    }
    return Date{ymd};
}

DateRange year_range(int year) { return {make_date(year, 1, 1), make_date(year + 1, 1, 1)}; }

DateRange years_range(int first_year, int last_year) {
    return {make_date(first_year, 1, 1), make_date(last_year + 1, 1, 1)};
}

int year_of(Date d) { return static_cast<int>(chr::year_month_day{d}.year()); }

unsigned month_of(Date d) { return static_cast<unsigned>(chr::year_month_day{d}.month()); }

int days_in_year(int year) { return chr::year{year}.is_leap() ? 366 : 365; }

Date date_of(Hour h) { return chr::floor<chr::days>(h); }

int hour_of_day(Hour h) { return static_cast<int>((h - chr::floor<chr::days>(h)).count()); }

int day_of_week(Date d) {
    // ISO encoding: Monday = 1 ... Sunday = 7.
    return static_cast<int>(chr::weekday{d}.iso_encoding()) - 1;
}

IsoWeek iso_week(Date d) {
    // The ISO year is the year of the Thursday in the same week.
    Date thursday = d + chr::days{3 - day_of_week(d)};
    int iso_year = year_of(thursday);
    Date jan1 = make_date(iso_year, 1, 1);
    int week = static_cast<int>((thursday - jan1).count() / 7) + 1;
    return {iso_year, week};
}

std::string format_iso_week(IsoWeek w) { return fmt::format("{:04d}-W{:02d}", w.year, w.week); }

Date parse_date(std::string_view text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
        throw DataError(fmt::format("malformed date '{}' (expected YYYY-MM-DD)", text));
    }
    int y = parse_fixed_int(text, 0, 4, text);
    int m = parse_fixed_int(text, 5, 2, text);
    int d = parse_fixed_int(text, 8, 2, text);
    chr::year_month_day ymd{chr::year{y}, chr::month{static_cast<unsigned>(m)}, chr::day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) {
        throw DataError(fmt::format("malformed date '{}'", text));
    }
    return Date{ymd};
}

Hour parse_timestamp(std::string_view text) {
    if (text.size() < 16 || (text[10] != ' ' && text[10] != 'T') || text[13] != ':') {
        throw DataError(fmt::format("malformed timestamp '{}' (expected YYYY-MM-DD HH:MM:SS)", text));
    }
    Date day = parse_date(text.substr(0, 10));
    int hh = parse_fixed_int(text, 11, 2, text);
    int mm = parse_fixed_int(text, 14, 2, text);
    int ss = 0;
    if (text.size() == 19) {
        if (text[16] != ':') {
            throw DataError(fmt::format("malformed timestamp '{}'", text));
        }
        ss = parse_fixed_int(text, 17, 2, text);
    } else if (text.size() != 16) {
        throw DataError(fmt::format("malformed timestamp '{}'", text));
    }
    if (hh > 23 || mm > 59 || ss > 59) {
        throw DataError(fmt::format("malformed timestamp '{}'", text));
    }
    if (mm != 0 || ss != 0) {
        throw DataError(fmt::format("timestamp '{}' is not on the hour", text));
    }
    return Hour{day} + chr::hours{hh};
}

std::string format_date(Date d) {
    chr::year_month_day ymd{d};
    return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()),
                       static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
}

std::string format_timestamp(Hour h) {
    return fmt::format("{} {:02d}:00:00", format_date(date_of(h)), hour_of_day(h));
}

}  // namespace trendproxy
