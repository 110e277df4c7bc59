#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include <doctest.h>

#include "support.hpp"
#include "trendproxy/gbdt.hpp"

using namespace trendproxy;
using namespace trendproxy::gbdt;
using features::FeatureKind;
using features::FeatureMatrix;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

FeatureMatrix numeric_matrix(std::vector<std::vector<double>> columns, std::size_t meters = 1) {
    FeatureMatrix m;
    for (std::size_t c = 0; c < columns.size(); ++c) {
        m.schema.features.push_back({"f" + std::to_string(c), FeatureKind::Numeric, features::FeatureSource::Meta});
    }
    const std::size_t n = columns.empty() ? 0 : columns[0].size();
    for (std::size_t k = 0; k < meters; ++k) m.meter_ids.push_back("m" + std::to_string(k));
    for (std::size_t r = 0; r < n; ++r) {
        const auto meter = static_cast<std::uint32_t>(r % meters);
        m.rows.push_back({meter, Hour{make_date(2016, 1, 1)} + std::chrono::hours{static_cast<long>(r / meters)}});
    }
    m.columns = std::move(columns);
    m.labels.assign(m.columns.size(), {});
    return m;
}

std::vector<std::uint32_t> iota_rows(std::size_t n) {
    std::vector<std::uint32_t> v(n);
    for (std::uint32_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

double gain_of(const std::vector<double>& g, const std::vector<std::uint8_t>& left) {
    double sl = 0, sr = 0;
    double nl = 0, nr = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (left[i]) sl += g[i], nl += 1;
        else sr += g[i], nr += 1;
    }
    const double s = sl + sr;
    return sl * sl / nl + sr * sr / nr - s * s / (nl + nr);
}

// Exhaustive unbinned search over "x <= t, missing on side m" partitions.
double brute_force_best_gain(const std::vector<std::vector<double>>& cols, const std::vector<double>& g,
                             int min_leaf) {
    double best = 0.0;
    for (const auto& col : cols) {
        std::set<double> values;
        for (double x : col)
            if (!std::isnan(x)) values.insert(x);
        for (double t : values) {
            for (int missing_left = 0; missing_left < 2; ++missing_left) {
                std::vector<std::uint8_t> left(g.size());
                int nl = 0;
                for (std::size_t i = 0; i < g.size(); ++i) {
                    left[i] = std::isnan(col[i]) ? static_cast<std::uint8_t>(missing_left) : col[i] <= t;
                    nl += left[i];
                }
                const int nr = static_cast<int>(g.size()) - nl;
                if (nl < min_leaf || nr < min_leaf) continue;
                best = std::max(best, gain_of(g, left));
            }
        }
    }
    return best;
}

GbdtParams full_sampling(int trees) {
    GbdtParams p;
    p.n_trees = trees;
    p.feature_fraction = 1.0;
    p.row_fraction = 1.0;
    p.min_samples_leaf = 1;
    p.max_leaves = 2;
    p.learning_rate = 1.0;
    return p;
}

struct Regression {
    FeatureMatrix matrix;
    std::vector<double> target;
};

Regression noisy_regression(std::uint64_t seed, std::size_t n, std::size_t meters) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0, 1);
    std::vector<std::vector<double>> cols(4, std::vector<double>(n));
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& c : cols) c[i] = d(rng);
        if (i % 17 == 0) cols[2][i] = kNaN;
        y[i] = 2.0 + std::sin(cols[0][i]) + 0.5 * cols[1][i] * (cols[3][i] > 0) + 0.1 * d(rng);
    }
    return {numeric_matrix(cols, meters), y};
}

}  // namespace

TEST_SUITE("gbdt") {
    TEST_CASE("split: [0,0,10,10] on [1,2,3,4] cuts between 2 and 3") {
        // Brute force under the gain formula: cuts after 1, 2, 3 give
        // 33.33, 100, 33.33.
        const std::vector<double> g{0, 0, 10, 10};
        CHECK(gain_of(g, {1, 0, 0, 0}) == doctest::Approx(100.0 / 3.0));
        CHECK(gain_of(g, {1, 1, 0, 0}) == doctest::Approx(100.0));
        CHECK(gain_of(g, {1, 1, 1, 0}) == doctest::Approx(100.0 / 3.0));

        auto m = numeric_matrix({{1, 2, 3, 4}});
        auto rows = iota_rows(4);
        auto data = bin_rows(m, rows, 255);
        const int feats[] = {0};
        auto s = find_best_split(data, rows, g, feats, 1);
        REQUIRE(s.valid);
        CHECK(s.gain == doctest::Approx(100.0));
        CHECK(s.left_count == 2);
        CHECK(s.right_count == 2);
        CHECK(data.binnings[0].thresholds[static_cast<std::size_t>(s.threshold_bin)] > 2.0);
        CHECK(data.binnings[0].thresholds[static_cast<std::size_t>(s.threshold_bin)] < 3.0);
    }

    TEST_CASE("split: constant target admits no split") {
        auto m = numeric_matrix({{1, 2, 3, 4, 5, 6}});
        auto rows = iota_rows(6);
        auto data = bin_rows(m, rows, 255);
        const std::vector<double> g(6, 0.0);
        const int feats[] = {0};
        CHECK_FALSE(find_best_split(data, rows, g, feats, 1).valid);
    }

    TEST_CASE("split: equals exhaustive search on small lossless instances") {
        std::mt19937_64 rng(101);
        std::normal_distribution<double> d(0, 1);
        for (int trial = 0; trial < 300; ++trial) {
            const std::size_t n = 4 + rng() % 61;  // 4..64
            const std::size_t F = 1 + rng() % 3;
            std::vector<std::vector<double>> cols(F, std::vector<double>(n));
            for (auto& c : cols) {
                const int levels = 2 + static_cast<int>(rng() % 12);
                for (auto& x : c) {
                    x = (trial % 2) ? static_cast<double>(rng() % static_cast<unsigned>(levels)) : d(rng);
                    if (trial % 3 == 0 && rng() % 5 == 0) x = kNaN;
                }
            }
            std::vector<double> g(n);
            for (auto& x : g) x = d(rng);
            const int min_leaf = 1 + static_cast<int>(rng() % 4);
            auto m = numeric_matrix(cols);
            auto rows = iota_rows(n);
            auto data = bin_rows(m, rows, 255);
            std::vector<int> feats(F);
            for (std::size_t f = 0; f < F; ++f) feats[f] = static_cast<int>(f);
            auto s = find_best_split(data, rows, g, feats, min_leaf);
            const double want = brute_force_best_gain(cols, g, min_leaf);
            if (!s.valid) {
                // The finder ignores gains below 1e-10 of the node's sum of squares.
                double sum_sq = 0;
                for (double v : g) sum_sq += v * v;
                CHECK(want <= 1e-10 * sum_sq + 1e-12);
                continue;
            }
            CHECK(s.gain == doctest::Approx(want).epsilon(1e-9));
            CHECK(s.left_count + s.right_count == n);
            CHECK(static_cast<int>(s.left_count) >= min_leaf);
            CHECK(static_cast<int>(s.right_count) >= min_leaf);
        }
    }

    TEST_CASE("binning: missing values and unknown categories use the missing bin") {
        const std::vector<double> x{1, 2, kNaN, 3};
        auto b = fit_binning(x, FeatureKind::Numeric, 255);
        CHECK(b.value_bins == 3);
        CHECK(b.bin_of(kNaN) == b.missing_bin());
        CHECK(b.bin_of(2.0) == 1);
        CHECK(b.bin_of(100.0) == 2);
        auto c = fit_binning(std::vector<double>{0, 1, 1, 2, -1}, FeatureKind::Categorical, 255);
        CHECK(c.value_bins == 3);
        CHECK(c.bin_of(-1) == c.missing_bin());
        CHECK(c.bin_of(7) == c.missing_bin());
    }

    TEST_CASE("zero trees predict the target mean") {
        std::vector<double> x(30), y(30);
        for (std::size_t i = 0; i < 30; ++i) x[i] = static_cast<double>(i), y[i] = std::log1p(static_cast<double>(i * i));
        auto m = numeric_matrix({x});
        auto bundle = train(m, y, full_sampling(0), {});
        double mean = 0;
        for (double v : y) mean += v / 30.0;
        for (double p : predict_log(bundle, m)) CHECK(p == doctest::Approx(mean).epsilon(1e-12));
    }

    TEST_CASE("1-split fixture: y = 1[x > 0] is fit exactly") {
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> u(1.0, 2.0);
        std::vector<double> x(60), y(60);
        for (std::size_t i = 0; i < 60; ++i) {
            x[i] = (i % 2 ? 1.0 : -1.0) * u(rng);
            y[i] = x[i] > 0 ? 1.0 : 0.0;
        }
        auto m = numeric_matrix({x});
        auto bundle = train(m, y, full_sampling(1), {});
        for (const auto& fold : bundle.folds) {
            REQUIRE(fold.trees.size() == 1);
            const auto& nodes = fold.trees[0].nodes();
            REQUIRE(nodes.size() == 3);
            CHECK(nodes[0].threshold > -1.0);
            CHECK(nodes[0].threshold < 1.0);
        }
        const auto p = predict_log(bundle, m);
        for (std::size_t i = 0; i < 60; ++i) CHECK(std::abs(p[i] - y[i]) <= 1e-12);
    }

    TEST_CASE("training loss is non-increasing with full sampling") {
        auto data = noisy_regression(5, 600, 3);
        GbdtParams p;
        p.n_trees = 60;
        p.feature_fraction = 1.0;
        p.row_fraction = 1.0;
        p.min_samples_leaf = 5;
        TrainTrace trace;
        train(data.matrix, data.target, p, {}, &trace);
        REQUIRE(trace.fold_train_rmse.size() == 3);
        for (const auto& curve : trace.fold_train_rmse) {
            REQUIRE(curve.size() == 61);
            for (std::size_t t = 1; t < curve.size(); ++t) CHECK(curve[t] <= curve[t - 1] + 1e-12);
            CHECK(curve.back() < 0.5 * curve.front());
        }
    }

    TEST_CASE("determinism and bundle round trip") {
        auto data = noisy_regression(9, 400, 2);
        GbdtParams p;
        p.n_trees = 25;
        p.min_samples_leaf = 5;
        auto a = train(data.matrix, data.target, p, {});
        auto b = train(data.matrix, data.target, p, {});
        CHECK(serialize_bundle(a) == serialize_bundle(b));

        std::stringstream ss;
        save_bundle(a, ss);
        auto back = load_bundle(ss);
        CHECK(back == a);
        CHECK(predict_log(back, data.matrix) == predict_log(a, data.matrix));

        p.seed = 43;
        auto c = train(data.matrix, data.target, p, {});
        CHECK(serialize_bundle(c) != serialize_bundle(a));
    }

    TEST_CASE("routing is total: all-missing rows reach a leaf") {
        auto data = noisy_regression(13, 300, 1);
        GbdtParams p;
        p.n_trees = 10;
        p.min_samples_leaf = 3;
        auto bundle = train(data.matrix, data.target, p, {});
        auto probe = numeric_matrix({{kNaN}, {kNaN}, {kNaN}, {kNaN}});
        probe.schema = data.matrix.schema;
        const auto out = predict_log(bundle, probe);
        CHECK(std::isfinite(out[0]));
        for (const auto& fold : bundle.folds) {
            for (const auto& tree : fold.trees) {
                const std::vector<double> row(4, kNaN);
                const int leaf = tree.route(row);
                CHECK(tree.nodes()[static_cast<std::size_t>(leaf)].is_leaf());
            }
        }
    }

    TEST_CASE("prediction maps log space back to kWh and averages folds") {
        ModelBundle b;
        b.schema.features = {{"f0", FeatureKind::Numeric, features::FeatureSource::Meta}};
        b.folds.push_back({std::log(6.0), {}});
        auto m = numeric_matrix({{1.0, 2.0}});
        for (double v : predict(b, m)) CHECK(v == doctest::Approx(5.0).epsilon(1e-12));

        b.folds = {{1.0, {}}, {3.0, {}}};
        for (double v : predict(b, m)) CHECK(v == doctest::Approx(std::expm1(2.0)).epsilon(1e-12));
        CHECK(std::expm1(2.0) == doctest::Approx(6.389).epsilon(1e-4));
    }

    TEST_CASE("folds are contiguous time blocks per meter") {
        auto m = numeric_matrix({std::vector<double>(12, 0.0)}, 2);
        auto folds = assign_folds(m, 3);
        // Meter 0 holds rows 0,2,4,...; its six hours split 2/2/2.
        CHECK(folds[0] == 0);
        CHECK(folds[2] == 0);
        CHECK(folds[4] == 1);
        CHECK(folds[10] == 2);
        CHECK(folds[1] == 0);
        CHECK(folds[11] == 2);
    }

    TEST_CASE("parameter validation and bad inputs") {
        GbdtParams p;
        p.learning_rate = 0.0;
        CHECK_THROWS_AS(p.validate(), ConfigError);
        p = {};
        p.n_folds = 1;
        CHECK_THROWS_AS(p.validate(), ConfigError);
        auto m = numeric_matrix({{1, 2, 3}});
        CHECK_THROWS_AS(train(m, {1.0, 2.0}, GbdtParams{}, {}), DataError);
    }

    TEST_CASE("load_bundle: missing file and corrupt text") {
        testsupport::TempDir dir;
        CHECK_THROWS_AS(load_bundle(dir / "nope.tpgb"), MissingArtifactError);
        std::stringstream bad("not a bundle\n");
        CHECK_THROWS_AS(load_bundle(bad), DataError);
    }
}
