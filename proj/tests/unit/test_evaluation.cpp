#include <cmath>
#include <random>
#include <set>

#include <doctest.h>

#include "support.hpp"
#include "trendproxy/evaluation.hpp"

using namespace trendproxy;
using namespace trendproxy::eval;
using screening::CorrelationCategory;

namespace {

// Direct formula in extended precision, independent of the kernel path.
double oracle_rmsle(const std::vector<double>& p, const std::vector<double>& a) {
    long double acc = 0.0L;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const long double d = std::log1pl(static_cast<long double>(p[i])) - std::log1pl(static_cast<long double>(a[i]));
        acc += d * d;
    }
    return static_cast<double>(std::sqrt(acc / static_cast<long double>(p.size())));
}

std::vector<double> random_positive(std::mt19937_64& rng, std::size_t n) {
    std::lognormal_distribution<double> d(2.0, 1.5);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

PredictionRecord record(std::string meter, Hour t, double actual, double predicted, ingest::DayType day,
                        CorrelationCategory cat = CorrelationCategory::High) {
    PredictionRecord r;
    r.meter_id = std::move(meter);
    r.timestamp = t;
    r.actual = actual;
    r.predicted = predicted;
    r.day_type = day;
    r.category = cat;
    r.site_id = "s0";
    r.country = "US";
    r.topic_id = "education";
    return r;
}

struct Paired {
    std::vector<PredictionRecord> baseline, proposed;
};

// Ten meters over January-February 2017. Proposed halves the log error on
// holidays and site-specific days.
Paired ten_meter_fixture() {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> noise(0.0, 0.2);
    Paired out;
    const auto range = DateRange{make_date(2017, 1, 1), make_date(2017, 3, 1)};
    for (int m = 0; m < 10; ++m) {
        const auto cat = m < 4 ? CorrelationCategory::High : (m < 8 ? CorrelationCategory::Fair : CorrelationCategory::Poor);
        const auto type = m % 2 ? ingest::MeterType::ChilledWater : ingest::MeterType::Electricity;
        for (Date d = range.begin; d < range.end; d += std::chrono::days{1}) {
            const auto dn = (d - range.begin).count();
            const auto day = dn % 10 == 0 ? ingest::DayType::PublicHoliday
                             : dn % 7 == 0 ? ingest::DayType::SiteSpecific
                                           : ingest::DayType::Regular;
            for (int h = 0; h < 24; h += 6) {
                const Hour t = Hour{d} + std::chrono::hours{h};
                const double actual = 50.0 + 10 * m + h;
                const double bias = day == ingest::DayType::Regular ? 0.0 : 0.6;
                const double e = noise(rng);
                auto b = record("m" + std::to_string(m), t, actual, actual * std::exp(bias + e), day, cat);
                auto p = b;
                b.meter_type = p.meter_type = type;
                p.predicted = actual * std::exp(bias / 2 + e);
                out.baseline.push_back(b);
                out.proposed.push_back(p);
            }
        }
    }
    return out;
}

}  // namespace

TEST_SUITE("evaluation") {
    TEST_CASE("rmsle analytic cases") {
        const std::vector<double> a{1.0, 5.0, 0.0, 1e4};
        CHECK(rmsle(a, a) == 0.0);
        CHECK(rmsle(std::vector<double>{std::exp(1.0) - 1.0}, std::vector<double>{0.0}) == 1.0);
    }

    TEST_CASE("rmsle matches an extended-precision oracle on seeded vectors") {
        std::mt19937_64 rng(2024);
        for (int trial = 0; trial < 1000; ++trial) {
            const std::size_t n = 1 + rng() % 200;
            auto p = random_positive(rng, n), a = random_positive(rng, n);
            CHECK(std::abs(rmsle(p, a) - oracle_rmsle(p, a)) <= 1e-12);
        }
    }

    TEST_CASE("rmsle properties: symmetry, concatenation decomposition, no scaling invariance") {
        std::mt19937_64 rng(8);
        for (int trial = 0; trial < 50; ++trial) {
            auto p = random_positive(rng, 40), a = random_positive(rng, 40);
            CHECK(rmsle(p, a) == doctest::Approx(rmsle(a, p)).epsilon(1e-14));
            std::vector<double> p1(p.begin(), p.begin() + 15), a1(a.begin(), a.begin() + 15);
            std::vector<double> p2(p.begin() + 15, p.end()), a2(a.begin() + 15, a.end());
            const double r1 = rmsle(p1, a1), r2 = rmsle(p2, a2);
            CHECK(rmsle(p, a) == doctest::Approx(std::sqrt((15 * r1 * r1 + 25 * r2 * r2) / 40)).epsilon(1e-12));
        }
        const std::vector<double> p{1.0, 4.0, 9.0}, a{2.0, 3.0, 12.0};
        std::vector<double> p10, a10;
        for (double x : p) p10.push_back(10 * x);
        for (double x : a) a10.push_back(10 * x);
        CHECK(std::abs(rmsle(p10, a10) - rmsle(p, a)) > 1e-3);
    }

    TEST_CASE("rmsle rejects bad input") {
        CHECK_THROWS_AS(rmsle(std::vector<double>{}, std::vector<double>{}), DataError);
        CHECK_THROWS_AS(rmsle(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}), DataError);
        CHECK_THROWS_AS(rmsle(std::vector<double>{-1.0}, std::vector<double>{1.0}), DataError);
        CHECK_THROWS_AS(rmsle(std::vector<double>{std::nan("")}, std::vector<double>{1.0}), DataError);
    }

    TEST_CASE("segment_by_daytype") {
        ingest::DayTypeCalendar cal;
        const Date d0 = make_date(2017, 1, 2);
        cal.set("s0", d0, ingest::DayType::Regular);
        cal.set("s0", d0 + std::chrono::days{1}, ingest::DayType::PublicHoliday);
        cal.set("s0", d0 + std::chrono::days{2}, ingest::DayType::SiteSpecific);

        std::vector<PredictionRecord> regular_only{record("m", Hour{d0}, 1, 2, ingest::DayType::Regular)};
        auto one = segment_by_daytype(regular_only, cal);
        CHECK(one.size() == 1);
        CHECK(one.count(ingest::DayType::Regular) == 1);

        // Equal log error on every record: each segment reports it.
        const double eps = 0.3;
        std::vector<PredictionRecord> all;
        for (int k = 0; k < 3; ++k) {
            for (int h = 0; h < 5; ++h) {
                const double a = 3.0 + h;
                all.push_back(record("m", Hour{d0 + std::chrono::days{k}} + std::chrono::hours{h}, a,
                                     std::expm1(std::log1p(a) + eps), ingest::DayType::Regular));
            }
        }
        auto seg = segment_by_daytype(all, cal);
        REQUIRE(seg.size() == 3);
        for (const auto& [_, v] : seg) CHECK(v == doctest::Approx(eps).epsilon(1e-12));

        std::vector<PredictionRecord> unlabeled{record("m", Hour{make_date(2018, 1, 1)}, 1, 1, ingest::DayType::Regular)};
        CHECK_THROWS_AS(segment_by_daytype(unlabeled, cal), DataError);
    }

    TEST_CASE("segment_by_daytype matches filtered recomputation on a seeded mix") {
        std::mt19937_64 rng(77);
        ingest::DayTypeCalendar cal;
        const Date d0 = make_date(2017, 1, 1);
        std::vector<PredictionRecord> recs;
        std::map<ingest::DayType, std::pair<std::vector<double>, std::vector<double>>> by;
        for (int d = 0; d < 60; ++d) {
            const auto type = ingest::kDayTypes[rng() % 3];
            cal.set("s0", d0 + std::chrono::days{d}, type);
            for (int h = 0; h < 24; h += 3) {
                auto p = random_positive(rng, 2);
                recs.push_back(record("m", Hour{d0 + std::chrono::days{d}} + std::chrono::hours{h}, p[0], p[1],
                                      ingest::DayType::Regular));
                by[type].first.push_back(p[1]);
                by[type].second.push_back(p[0]);
            }
        }
        auto seg = segment_by_daytype(recs, cal);
        for (const auto& [type, v] : by) CHECK(seg.at(type) == doctest::Approx(oracle_rmsle(v.first, v.second)).epsilon(1e-12));
    }

    TEST_CASE("change rate formatting") {
        CHECK(format_change_rate(change_rate(0.430, 0.422)) == "-1.9%");
        CHECK(format_change_rate(change_rate(1.002, 1.004)) == "+0.2%");
        CHECK(format_change_rate(change_rate(1.182, 1.193)) == "+0.9%");
        CHECK(format_change_rate(change_rate(0.7, 0.7)) == "0.0%");
        CHECK(format_change_rate(change_rate(1.0, 1.5)) == "+50.0%");
        CHECK(format_change_rate(-0.01) == "0.0%");
        CHECK_THROWS_AS(change_rate(0.0, 1.0), DataError);
    }

    TEST_CASE("benchmark tiers for reference scores") {
        const auto t = BenchmarkTable::defaults();
        CHECK(benchmark_tier(0.422, CorrelationCategory::High, t) == Tier::Top5);
        CHECK(benchmark_tier(0.430, CorrelationCategory::High, t) == Tier::Top5);
        CHECK(benchmark_tier(0.435, CorrelationCategory::High, t) == Tier::Gold);
        CHECK(benchmark_tier(0.600, CorrelationCategory::High, t) == Tier::NoMedal);
        CHECK(to_string(Tier::NoMedal) == "no medal");
        CHECK(to_string(Tier::Top5) == "Top 5");
        CHECK(benchmark_tier(1.002, CorrelationCategory::Fair, t) == Tier::Bronze);
        CHECK(benchmark_tier(1.004, CorrelationCategory::Fair, t) == Tier::Bronze);
        CHECK(benchmark_tier(1.182, CorrelationCategory::Poor, t) == Tier::Bronze);
        CHECK(benchmark_tier(1.193, CorrelationCategory::Poor, t) == Tier::Bronze);
    }

    TEST_CASE("benchmark tier is monotone in the score") {
        const auto t = BenchmarkTable::defaults();
        for (auto cat : screening::kCategories) {
            Tier prev = Tier::Top5;
            for (double s = 0.0; s < 1.5; s += 0.0005) {
                const Tier tier = benchmark_tier(s, cat, t);
                CHECK(static_cast<int>(tier) >= static_cast<int>(prev));
                prev = tier;
            }
        }
    }

    TEST_CASE("benchmark table: strictly increasing, load and write") {
        BenchmarkTable t;
        CHECK_THROWS_AS(t.set(CorrelationCategory::High, {0.5, 0.4, 0.6, 0.7}), DataError);
        testsupport::TempDir dir;
        BenchmarkTable::defaults().write(dir / "b.csv");
        auto back = BenchmarkTable::load(dir / "b.csv");
        CHECK(*back.find(CorrelationCategory::Fair) == std::array<double, 4>{0.962, 0.970, 0.976, 1.020});
        auto shipped = BenchmarkTable::load(testsupport::source_dir() / "data" / "benchmark_gepiii.csv");
        CHECK(*shipped.find(CorrelationCategory::High) == *BenchmarkTable::defaults().find(CorrelationCategory::High));
        CHECK_THROWS_AS(benchmark_tier(0.5, CorrelationCategory::High, BenchmarkTable{}), DataError);
    }

    TEST_CASE("evaluate: shape, low support, weekly length") {
        auto f = ten_meter_fixture();
        EvalConfig cfg;
        cfg.range = DateRange{make_date(2017, 1, 1), make_date(2017, 3, 1)};
        auto rep = evaluate(f.baseline, f.proposed, cfg);
        CHECK(rep.n_meters == 10);
        CHECK(rep.change_rate < 0.0);

        std::set<std::pair<std::string, std::string>> groups;
        for (const auto* c : rep.breakdown("meter_type", 2)) {
            if (c->day_type == "all") groups.insert({c->key[0].second, c->key[1].second});
        }
        // electricity/chilledwater x High/Fair/Poor present in the fixture
        CHECK(groups.size() == 6);

        for (const auto* c : rep.breakdown("category", 1)) {
            if (c->key[0].second == "Poor") CHECK(c->low_support);
            if (c->key[0].second == "High") {
                CHECK_FALSE(c->low_support);
                if (c->day_type == "all") CHECK(c->proposed_tier.has_value());
            }
        }

        auto overall = rep.breakdown("scope", 1);
        REQUIRE(overall.size() == 4);
        for (const auto* c : overall) {
            if (c->day_type == "regular") CHECK(std::abs(c->change_rate) < 1e-9);
            if (c->day_type == "public_holiday") CHECK(c->change_rate < -10.0);
        }

        const auto weeks = iso_weeks_in(cfg.range);
        std::size_t all_points = 0;
        for (const auto& p : rep.weekly) all_points += p.group == "all";
        CHECK(all_points == weeks.size());
        CHECK(weeks.size() == 10);  // 2016-W52 .. 2017-W09

        testsupport::TempDir dir;
        emit_report(rep, dir.path());
        for (const char* name : {"report.json", "table_overall.csv", "table_meter_type.csv", "table_category.csv",
                                 "table_topic.csv", "table_country.csv", "table_benchmark.csv", "weekly_errors.csv"}) {
            CHECK(std::filesystem::exists(dir / name));
        }
    }

    TEST_CASE("evaluate: mismatched row sets are rejected") {
        auto f = ten_meter_fixture();
        EvalConfig cfg;
        cfg.range = DateRange{make_date(2017, 1, 1), make_date(2017, 3, 1)};
        auto short_prop = f.proposed;
        short_prop.pop_back();
        CHECK_THROWS_AS(evaluate(f.baseline, short_prop, cfg), DataError);
        auto shifted = f.proposed;
        shifted[3].timestamp += std::chrono::hours{1};
        CHECK_THROWS_AS(evaluate(f.baseline, shifted, cfg), DataError);
    }

    TEST_CASE("predictions CSV round trip and missing file") {
        auto f = ten_meter_fixture();
        testsupport::TempDir dir;
        std::vector<PredictionRecord> some(f.proposed.begin(), f.proposed.begin() + 20);
        write_predictions(some, dir / "p.csv");
        auto back = read_predictions(dir / "p.csv");
        REQUIRE(back.size() == 20);
        CHECK(back[7].predicted == some[7].predicted);
        CHECK(back[7].timestamp == some[7].timestamp);
        CHECK(back[7].category == some[7].category);
        CHECK_THROWS_AS(read_predictions(dir / "none.csv"), MissingArtifactError);
    }
}
