#include <cstdlib>
#include <cstring>
#include <stdexcept>

#include "trendproxy/kernels.hpp"

namespace trendproxy::kernels {

namespace detail {
#if defined(TRENDPROXY_HAVE_AVX2)
const KernelTable& avx2_kernels();
#endif
#if defined(TRENDPROXY_HAVE_NEON)
const KernelTable& neon_kernels();
#endif
}  // namespace detail

std::string_view isa_name(Isa isa) {
    switch (isa) {
        case Isa::Scalar: return "scalar";
        case Isa::Avx2: return "avx2";
        case Isa::Neon: return "neon";
    }
    return "unknown";
}

const KernelTable* avx2_table() {
#if defined(TRENDPROXY_HAVE_AVX2)
    static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return supported ? &detail::avx2_kernels() : nullptr;
#else
    return nullptr;
#endif
}

const KernelTable* neon_table() {
#if defined(TRENDPROXY_HAVE_NEON)
    return &detail::neon_kernels();
#else
    return nullptr;
#endif
}

const KernelTable& active() {
    static const KernelTable& table = []() -> const KernelTable& {
        const char* forced = std::getenv("TRENDPROXY_SIMD");
        if (forced && std::strcmp(forced, "scalar") == 0) return scalar_table();
        if (auto* t = avx2_table()) return *t;
        if (auto* t = neon_table()) return *t;
        return scalar_table();
    }();
    return table;
}

namespace {
void require_same_size(std::size_t a, std::size_t b) {
    if (a != b) throw std::invalid_argument("kernel operands differ in length");
}
}  // namespace

double dot(std::span<const double> x, std::span<const double> y) {
    require_same_size(x.size(), y.size());
    return active().dot(x.data(), y.data(), x.size());
}

double sum_sq_diff(std::span<const double> x, std::span<const double> y) {
    require_same_size(x.size(), y.size());
    return active().sum_sq_diff(x.data(), y.data(), x.size());
}

Moments centered_moments(std::span<const double> x, std::span<const double> y, double mx, double my) {
    require_same_size(x.size(), y.size());
    return active().centered_moments(x.data(), y.data(), x.size(), mx, my);
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
    require_same_size(x.size(), y.size());
    active().axpy(a, x.data(), y.data(), x.size());
}

}  // namespace trendproxy::kernels
