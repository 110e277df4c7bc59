// Writes the synthetic desk-scale corpus: 10 meters on two campuses (US, GB),
// 2016-2017, whose holiday and break dips follow one planted trend topic
// ("education") hidden among 7 decoys per geo.
//
//   make_synthetic --out data/synthetic [--seed 7]

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "trendproxy/common.hpp"
#include "trendproxy/csv.hpp"

namespace {

namespace fs = std::filesystem;
namespace chr = std::chrono;
using trendproxy::Date;
using trendproxy::Hour;
using trendproxy::make_date;

constexpr int kFirstYear = 2016;
constexpr int kLastYear = 2017;
constexpr double kPi = 3.14159265358979323846;

enum class Kind { Regular, Holiday, Break };

struct Site {
    std::string id;
    std::string geo;
    double temp_mean;
    double temp_amplitude;
    std::map<Date, Kind> calendar;  // non-regular days only
};

struct Building {
    std::string id;
    std::size_t site;
    std::string primary_use;
    double square_feet;
    int year_built;  // 0 = unknown
    double holiday_response;
    double break_response;
    bool chilled_water;
};

Date nth_weekday(int year, unsigned month, chr::weekday wd, unsigned n) {
    return chr::sys_days{chr::year_month_weekday{chr::year{year}, chr::month{month}, wd[n]}};
}

Date last_weekday(int year, unsigned month, chr::weekday wd) {
    return chr::sys_days{chr::year_month_weekday_last{chr::year{year}, chr::month{month}, wd[chr::last]}};
}

bool weekend(Date d) {
    const chr::weekday wd{d};
    return wd == chr::Saturday || wd == chr::Sunday;
}

// Saturday -> Friday, Sunday -> Monday.
Date observed_us(Date d) {
    const chr::weekday wd{d};
    if (wd == chr::Saturday) return d - chr::days{1};
    if (wd == chr::Sunday) return d + chr::days{1};
    return d;
}

// Anonymous Gregorian computus.
Date easter(int y) {
    const int a = y % 19, b = y / 100, c = y % 100, d = b / 4, e = b % 4, f = (b + 8) / 25, g = (b - f + 1) / 3;
    const int h = (19 * a + b - d - g + 15) % 30, i = c / 4, k = c % 4, l = (32 + 2 * e + 2 * i - h - k) % 7;
    const int m = (a + 11 * h + 22 * l) / 451;
    const int month = (h + l - 7 * m + 114) / 31, day = ((h + l - 7 * m + 114) % 31) + 1;
    return make_date(y, static_cast<unsigned>(month), static_cast<unsigned>(day));
}

std::set<Date> us_holidays(int y) {
    return {observed_us(make_date(y, 1, 1)),
            nth_weekday(y, 1, chr::Monday, 3),
            nth_weekday(y, 2, chr::Monday, 3),
            last_weekday(y, 5, chr::Monday),
            observed_us(make_date(y, 7, 4)),
            nth_weekday(y, 9, chr::Monday, 1),
            nth_weekday(y, 11, chr::Thursday, 4),
            observed_us(make_date(y, 12, 25))};
}

std::set<Date> gb_holidays(int y) {
    std::set<Date> out;
    Date ny = make_date(y, 1, 1);
    while (weekend(ny)) ny += chr::days{1};
    out.insert(ny);
    out.insert(easter(y) - chr::days{2});
    out.insert(easter(y) + chr::days{1});
    out.insert(nth_weekday(y, 5, chr::Monday, 1));
    out.insert(last_weekday(y, 5, chr::Monday));
    out.insert(last_weekday(y, 8, chr::Monday));
    // Christmas and Boxing Day with substitute weekdays.
    Date next = make_date(y, 12, 25);
    for (int k = 0; k < 2; ++k) {
        while (weekend(next) || out.count(next)) next += chr::days{1};
        out.insert(next);
        next += chr::days{1};
    }
    return out;
}

void add_break(Site& site, Date first, Date last) {
    for (Date d = first; d <= last; d += chr::days{1}) {
        if (!site.calendar.count(d)) site.calendar[d] = Kind::Break;
    }
}

void build_calendars(std::vector<Site>& sites) {
    for (int y = kFirstYear; y <= kLastYear; ++y) {
        for (auto d : us_holidays(y)) sites[0].calendar[d] = Kind::Holiday;
        for (auto d : gb_holidays(y)) sites[1].calendar[d] = Kind::Holiday;
    }
    for (int y = kFirstYear; y <= kLastYear; ++y) {
        // US campus: spring break, Thanksgiving week, winter break.
        const Date spring = nth_weekday(y, 3, chr::Monday, 2);
        add_break(sites[0], spring - chr::days{2}, spring + chr::days{6});
        const Date thanks = nth_weekday(y, 11, chr::Thursday, 4);
        add_break(sites[0], thanks - chr::days{3}, thanks + chr::days{3});
        add_break(sites[0], make_date(y, 12, 22), make_date(y, 12, 31));
        add_break(sites[0], make_date(y, 1, 1), make_date(y, 1, 6));
        // GB campus: Easter vacation, reading week, Christmas vacation.
        const Date e = easter(y);
        add_break(sites[1], e + chr::days{2}, e + chr::days{8});
        const Date reading = nth_weekday(y, 11, chr::Monday, 1);
        add_break(sites[1], reading - chr::days{2}, reading + chr::days{6});
        add_break(sites[1], make_date(y, 12, 19), make_date(y, 12, 31));
        add_break(sites[1], make_date(y, 1, 1), make_date(y, 1, 6));
    }
}

Kind kind_of(const Site& site, Date d) {
    auto it = site.calendar.find(d);
    return it == site.calendar.end() ? Kind::Regular : it->second;
}

// Relative working-hours occupancy, 0..1 over the day.
double hour_shape(int h) {
    static constexpr std::array<double, 24> shape{0.10, 0.08, 0.07, 0.07, 0.08, 0.12, 0.25, 0.50,
                                                  0.80, 0.95, 1.00, 1.00, 0.95, 1.00, 1.00, 0.95,
                                                  0.85, 0.65, 0.45, 0.35, 0.28, 0.20, 0.15, 0.12};
    return shape[static_cast<std::size_t>(h)];
}

class Generator {
public:
    explicit Generator(std::uint64_t seed) : rng_(seed) {}

    double normal(double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(rng_); }
    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }
    std::mt19937_64& rng() { return rng_; }

private:
    std::mt19937_64 rng_;
};

std::ofstream open(const fs::path& p) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    return out;
}

std::string num(double v, int decimals) { return fmt::format("{:.{}f}", v, decimals); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Generate the synthetic acceptance corpus"};
    std::string out_dir = "data/synthetic";
    std::uint64_t seed = 7;
    app.add_option("--out", out_dir, "Output directory");
    app.add_option("--seed", seed, "Random seed");
    CLI11_PARSE(app, argc, argv);

    const fs::path out(out_dir);
    fs::create_directories(out);
    Generator gen(seed);

    std::vector<Site> sites{{"s0", "US", 15.0, 11.0, {}}, {"s1", "GB", 10.5, 6.5, {}}};
    build_calendars(sites);

    const std::vector<Building> buildings{
        {"b00", 0, "Education", 182000, 1968, 1.0, 1.0, true},
        {"b01", 0, "Education", 64500, 1994, 1.0, 1.0, false},
        {"b02", 0, "Office", 41200, 2003, 1.0, 0.5, false},
        {"b03", 0, "Education", 97800, 0, 1.0, 1.0, false},
        {"b04", 1, "Education", 151000, 1975, 1.0, 1.0, true},
        {"b05", 1, "Education", 58300, 1988, 1.0, 1.0, false},
        {"b06", 1, "Public services", 36900, 2010, 1.0, 0.7, false},
        {"b07", 1, "Education", 120400, 0, 1.0, 1.0, false},
    };

    const Date first = make_date(kFirstYear, 1, 1);
    const Date end = make_date(kLastYear + 1, 1, 1);
    const auto n_days = static_cast<std::size_t>((end - first).count());
    const std::size_t n_hours = n_days * 24;

    // Weather: seasonal + diurnal temperature with AR(1) weather noise.
    std::vector<std::vector<double>> temp(sites.size(), std::vector<double>(n_hours));
    {
        auto w = open(out / "weather.csv");
        trendproxy::csv::Writer csv(w);
        csv.row({"site_id", "timestamp", "air_temperature", "cloud_coverage", "dew_temperature", "precip_depth_1_hr",
                 "sea_level_pressure", "wind_direction", "wind_speed"});
        for (std::size_t s = 0; s < sites.size(); ++s) {
            double anomaly = 0.0;
            std::vector<std::uint8_t> missing(n_hours, 0);
            for (int g = 0; g < 40; ++g) {
                const auto at = static_cast<std::size_t>(gen.uniform() * static_cast<double>(n_hours - 8));
                const auto len = 1 + static_cast<std::size_t>(gen.uniform() * 4);
                for (std::size_t k = 0; k < len; ++k) missing[at + k] = 1;
            }
            if (s == 1) {
                const auto at = static_cast<std::size_t>((make_date(2016, 7, 12) - first).count()) * 24 + 3;
                for (std::size_t k = 0; k < 30; ++k) missing[at + k] = 1;
            }
            for (std::size_t i = 0; i < n_hours; ++i) {
                const Date d = first + chr::days{static_cast<long>(i / 24)};
                const int h = static_cast<int>(i % 24);
                const double doy = static_cast<double>((d - chr::sys_days{chr::year_month_day{chr::year_month_day{d}.year(), chr::January, chr::day{1}}}).count());
                if (i % 24 == 0) anomaly = 0.85 * anomaly + gen.normal(1.2);
                const double seasonal = sites[s].temp_mean - sites[s].temp_amplitude * std::cos(2 * kPi * (doy - 15.0) / 365.25);
                const double diurnal = 4.0 * std::sin(2 * kPi * (h - 9.0) / 24.0);
                const double t = seasonal + diurnal + anomaly + gen.normal(0.4);
                temp[s][i] = t;
                const double dew = t - 4.0 - std::abs(gen.normal(2.0));
                const double cloud = std::clamp(std::round(4.0 + gen.normal(2.5)), 0.0, 9.0);
                const double rain = gen.uniform() < 0.06 ? std::round(std::abs(gen.normal(3.0))) : 0.0;
                const double pressure = 1015.0 + gen.normal(6.0);
                const double wdir = std::round(gen.uniform() * 36.0) * 10.0;
                const double wspeed = std::abs(gen.normal(3.5));
                if (missing[i]) {
                    csv.row({sites[s].id, trendproxy::format_timestamp(Hour{first} + chr::hours{static_cast<long>(i)}), "",
                             "", "", "", "", "", ""});
                    continue;
                }
                const bool cloud_missing = gen.uniform() < 0.25;
                csv.row({sites[s].id, trendproxy::format_timestamp(Hour{first} + chr::hours{static_cast<long>(i)}),
                         num(t, 1), cloud_missing ? "" : num(cloud, 0), num(dew, 1), num(rain, 0), num(pressure, 1),
                         num(wdir, 0), num(wspeed, 1)});
            }
        }
    }

    // Meter readings.
    {
        auto m = open(out / "meters.csv");
        trendproxy::csv::Writer csv(m);
        csv.row({"building_id", "meter", "timestamp", "meter_reading"});
        for (const auto& b : buildings) {
            const auto& site = sites[b.site];
            for (int meter = 0; meter < (b.chilled_water ? 2 : 1); ++meter) {
                const bool cw = meter == 1;
                const double level = std::log(b.square_feet / 1000.0) + (cw ? 0.2 : 0.9);
                const double amplitude = cw ? 0.25 : 0.8 + 0.1 * gen.normal();
                double day_effect = 0.0;
                for (std::size_t i = 0; i < n_hours; ++i) {
                    const Date d = first + chr::days{static_cast<long>(i / 24)};
                    const int h = static_cast<int>(i % 24);
                    if (h == 0) day_effect = gen.normal(0.04);
                    const Kind kind = kind_of(site, d);
                    double occ = 1.0;
                    if (weekend(d)) occ -= 0.55;
                    if (kind == Kind::Holiday) occ -= 0.7 * b.holiday_response;
                    if (kind == Kind::Break) occ -= 0.35 * b.break_response;
                    occ = std::max(occ, 0.05);
                    const double t = temp[b.site][i];
                    const double weather = cw ? 0.09 * std::max(0.0, t - 12.0) : 0.015 * std::max(0.0, t - 18.0);
                    double reading = std::exp(level + amplitude * hour_shape(h) * occ + weather + day_effect +
                                              gen.normal(0.25));
                    const Hour ts = Hour{first} + chr::hours{static_cast<long>(i)};
                    // Planted defects: one spike, one stuck-at-zero run, sparse gaps.
                    if (b.id == "b02" && !cw && d == make_date(2016, 6, 14) && h == 13) reading *= 60.0;
                    if (b.id == "b05" && !cw && d >= make_date(2016, 8, 2) && d < make_date(2016, 8, 5)) reading = 0.0;
                    if (gen.uniform() < 0.002) continue;
                    csv.row({b.id, cw ? "chilledwater" : "electricity", trendproxy::format_timestamp(ts),
                             num(reading, 3)});
                }
            }
        }
    }

    {
        auto f = open(out / "building_metadata.csv");
        trendproxy::csv::Writer csv(f);
        csv.row({"site_id", "building_id", "primary_use", "square_feet", "year_built", "floor_count"});
        for (const auto& b : buildings) {
            csv.row({sites[b.site].id, b.id, b.primary_use, num(b.square_feet, 0),
                     b.year_built ? std::to_string(b.year_built) : "", ""});
        }
    }

    {
        auto f = open(out / "day_types.csv");
        trendproxy::csv::Writer csv(f);
        csv.row({"site_id", "date", "day_type"});
        for (const auto& s : sites) {
            for (Date d = first; d < end; d += chr::days{1}) {
                const Kind k = kind_of(s, d);
                csv.row({s.id, trendproxy::format_date(d),
                         k == Kind::Regular ? "regular" : k == Kind::Holiday ? "public_holiday" : "site_specific"});
            }
        }
    }

    {
        auto f = open(out / "site_geo.csv");
        trendproxy::csv::Writer csv(f);
        csv.row({"site_id", "geo"});
        for (const auto& s : sites) csv.row({s.id, s.geo});
    }

    // Trend topics: the planted one mirrors the campus calendar; decoys carry
    // weekly, seasonal or random structure.
    struct Topic {
        std::string id, name, category;
    };
    const std::vector<Topic> topics{
        {"education", "Education", "building_type"},
        {"microsoft_excel", "Microsoft Excel", "productivity_tool"},
        {"shopping_mall", "Shopping mall", "building_type"},
        {"parking", "Parking", "building_type"},
        {"health_care", "Health Care", "building_type"},
        {"warehouse", "Warehouse", "building_type"},
        {"google", "Google", "productivity_tool"},
        {"place_of_worship", "Place of worship", "building_type"},
    };
    {
        auto f = open(out / "topic_catalog.csv");
        trendproxy::csv::Writer csv(f);
        csv.row({"topic_id", "display_name", "category"});
        for (const auto& t : topics) csv.row({t.id, t.name, t.category});
    }
    {
        auto f = open(out / "trends.csv");
        trendproxy::csv::Writer csv(f);
        csv.row({"topic_id", "geo", "date", "volume"});
        for (const auto& t : topics) {
            for (const auto& s : sites) {
                double walk = 50.0;
                for (Date d = first; d < end; d += chr::days{1}) {
                    const bool we = weekend(d);
                    const chr::weekday wd{d};
                    const Kind k = kind_of(s, d);
                    const double doy = static_cast<double>((d - first).count() % 365);
                    const double season = std::sin(2 * kPi * doy / 365.25);
                    double v = 0.0;
                    if (t.id == "education") {
                        v = 70.0 - 25.0 * we - 35.0 * (k == Kind::Holiday) - 15.0 * (k == Kind::Break) + 3.0 * season +
                            gen.normal(2.0);
                    } else if (t.id == "microsoft_excel") {
                        v = 60.0 - 20.0 * we + gen.normal(9.0);
                    } else if (t.id == "shopping_mall") {
                        v = 40.0 + 15.0 * we + 25.0 * (doy > 325) + gen.normal(6.0);
                    } else if (t.id == "parking") {
                        walk = std::clamp(walk + gen.normal(3.0), 10.0, 90.0);
                        v = walk;
                    } else if (t.id == "health_care") {
                        v = 55.0 + 20.0 * std::cos(2 * kPi * doy / 365.25) + gen.normal(5.0);
                    } else if (t.id == "warehouse") {
                        v = 50.0 + gen.normal(12.0);
                    } else if (t.id == "google") {
                        v = 75.0 + 0.01 * static_cast<double>((d - first).count()) - 4.0 * we + gen.normal(4.0);
                    } else {
                        v = 30.0 + 45.0 * (wd == chr::Sunday) + 20.0 * (k == Kind::Holiday) + gen.normal(5.0);
                    }
                    v = std::clamp(std::round(v), 0.0, 100.0);
                    csv.row({t.id, s.geo, trendproxy::format_date(d), num(v, 0)});
                }
            }
        }
    }
    fmt::print("wrote synthetic corpus to {}\n", out.string());
    return 0;
}
