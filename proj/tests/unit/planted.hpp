#pragma once

// Planted-topic recovery trial: ten seeded random-walk topics, a calendar
// equal to one of them plus Gaussian noise at 0.05 of its std.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "trendproxy/screening.hpp"

namespace testsupport {

struct PlantedOutcome {
    bool recovered = false;
    double r_squared = 0.0;
};

inline PlantedOutcome planted_topic_trial(std::uint64_t seed, double noise_fraction = 0.05) {
    using namespace trendproxy;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> step(0.0, 1.0);
    const int year = 2016;
    const std::size_t days = 366;
    std::vector<trends::TrendSeries> topics;
    for (int t = 0; t < 10; ++t) {
        trends::TrendSeries s;
        s.topic_id = "topic" + std::to_string(t);
        s.geo = "US";
        s.start = make_date(year, 1, 1);
        double level = 50.0;
        for (std::size_t d = 0; d < days; ++d) {
            level += step(rng);
            s.raw.push_back(level);
        }
        s.interpolated.assign(days, 0);
        topics.push_back(trends::standardize_by_year(std::move(s)));
    }
    const std::size_t planted = static_cast<std::size_t>(rng() % topics.size());

    calendar::CalendarSignal cal;
    cal.meter_id = "m";
    cal.year = year;
    // Calendar on the raw scale of the planted topic; noise relative to its std.
    const auto& raw = topics[planted].raw;
    double mean = 0.0, sq = 0.0;
    for (double v : raw) mean += v / static_cast<double>(days);
    for (double v : raw) sq += (v - mean) * (v - mean) / static_cast<double>(days);
    std::normal_distribution<double> noise(0.0, noise_fraction * std::sqrt(sq));
    for (std::size_t d = 0; d < days; ++d) {
        cal.dates.push_back(topics[planted].date(d));
        cal.scores.push_back(raw[d] + noise(rng));
        cal.defined.push_back(1);
    }
    const auto res = screening::screen_meter(cal, topics, year);
    return {res.best_topic_id == topics[planted].topic_id && res.r_squared > 0.8, res.r_squared};
}

}  // namespace testsupport
