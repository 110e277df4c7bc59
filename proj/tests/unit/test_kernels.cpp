#include <cmath>
#include <cstdlib>
#include <string_view>
#include <random>
#include <vector>

#include <doctest.h>

#include "trendproxy/kernels.hpp"

namespace k = trendproxy::kernels;

namespace {

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double scale) {
    std::normal_distribution<double> d(0.5, scale);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

void check_close(double a, double b, double magnitude) {
    CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, magnitude));
}

void compare_tables(const k::KernelTable& ref, const k::KernelTable& simd) {
    std::mt19937_64 rng(11);
    for (std::size_t n = 0; n < 70; ++n) {
        const auto x = random_vector(rng, n, 3.0);
        const auto y = random_vector(rng, n, 2.0);
        double mag = 0.0;
        for (std::size_t i = 0; i < n; ++i) mag += x[i] * x[i] + y[i] * y[i] + std::abs(x[i]);
        check_close(ref.sum(x.data(), n), simd.sum(x.data(), n), mag);
        check_close(ref.dot(x.data(), y.data(), n), simd.dot(x.data(), y.data(), n), mag);
        check_close(ref.sum_sq_diff(x.data(), y.data(), n), simd.sum_sq_diff(x.data(), y.data(), n), 4 * mag);
        check_close(ref.centered_sum_sq(x.data(), n, 0.3), simd.centered_sum_sq(x.data(), n, 0.3), 4 * mag);
        const auto m1 = ref.centered_moments(x.data(), y.data(), n, 0.1, -0.2);
        const auto m2 = simd.centered_moments(x.data(), y.data(), n, 0.1, -0.2);
        check_close(m1.sxx, m2.sxx, 4 * mag);
        check_close(m1.syy, m2.syy, 4 * mag);
        check_close(m1.sxy, m2.sxy, 4 * mag);
        auto y1 = y, y2 = y;
        ref.axpy(1.7, x.data(), y1.data(), n);
        simd.axpy(1.7, x.data(), y2.data(), n);
        for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(y1[i] - y2[i]) <= 1e-14 * std::max(1.0, std::abs(y1[i])));
    }
}

}  // namespace

TEST_SUITE("kernels") {
    TEST_CASE("scalar reference matches direct loops") {
        const std::vector<double> x{1, 2, 3, 4}, y{1, 3, 2, 4};
        const auto& s = k::scalar_table();
        CHECK(s.sum(x.data(), 4) == 10.0);
        CHECK(s.dot(x.data(), y.data(), 4) == 1 + 6 + 6 + 16);
        CHECK(s.sum_sq_diff(x.data(), y.data(), 4) == 2.0);
        CHECK(s.centered_sum_sq(x.data(), 4, 2.5) == 5.0);
        const auto m = s.centered_moments(x.data(), y.data(), 4, 2.5, 2.5);
        CHECK(m.sxx == 5.0);
        CHECK(m.syy == 5.0);
        CHECK(m.sxy == 4.0);
    }

    TEST_CASE("AVX2 variant agrees with scalar on all tail lengths") {
        const auto* t = k::avx2_table();
        if (!t) {
            MESSAGE("AVX2 not available on this build/CPU");
            return;
        }
        compare_tables(k::scalar_table(), *t);
    }

    TEST_CASE("NEON variant agrees with scalar on all tail lengths") {
        const auto* t = k::neon_table();
        if (!t) {
            MESSAGE("NEON not available on this build/CPU");
            return;
        }
        compare_tables(k::scalar_table(), *t);
    }

    TEST_CASE("dispatch honours TRENDPROXY_SIMD=scalar") {
        const char* forced = std::getenv("TRENDPROXY_SIMD");
        if (forced && std::string_view(forced) == "scalar") CHECK(k::active().isa == k::Isa::Scalar);
        CHECK(!k::isa_name(k::active().isa).empty());
    }

    TEST_CASE("span wrappers reject length mismatch") {
        const std::vector<double> a{1, 2, 3}, b{1, 2};
        CHECK_THROWS(k::dot(a, b));
        CHECK_THROWS(k::sum_sq_diff(a, b));
    }
}
