#pragma once

// Data-parallel reductions shared by the numeric modules. Every kernel has a
// scalar reference implementation; AVX2 (x86-64) and NEON (aarch64) variants
// are selected once at runtime. Vector variants reorder the summation, so they
// agree with the scalar path to rounding, not bit-for-bit.

#include <cstddef>
#include <span>
#include <string_view>

namespace trendproxy::kernels {

enum class Isa { Scalar, Avx2, Neon };

std::string_view isa_name(Isa isa);

struct Moments {
    double sxx = 0.0;
    double syy = 0.0;
    double sxy = 0.0;
};

// Function table for one instruction set.
struct KernelTable {
    Isa isa;
    double (*sum)(const double* x, std::size_t n);
    double (*dot)(const double* x, const double* y, std::size_t n);
    // sum((x - y)^2)
    double (*sum_sq_diff)(const double* x, const double* y, std::size_t n);
    // sum((x - mean)^2)
    double (*centered_sum_sq)(const double* x, std::size_t n, double mean);
    // centered second moments of the pair (x, y)
    Moments (*centered_moments)(const double* x, const double* y, std::size_t n, double mx, double my);
    // y += a * x
    void (*axpy)(double a, const double* x, double* y, std::size_t n);
};

const KernelTable& scalar_table();
// nullptr when the ISA is not compiled in or not supported by this CPU.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// Best table for this CPU. TRENDPROXY_SIMD=scalar in the environment forces
// the scalar reference path.
const KernelTable& active();

inline double sum(std::span<const double> x) { return active().sum(x.data(), x.size()); }
double dot(std::span<const double> x, std::span<const double> y);
double sum_sq_diff(std::span<const double> x, std::span<const double> y);
inline double centered_sum_sq(std::span<const double> x, double mean) {
    return active().centered_sum_sq(x.data(), x.size(), mean);
}
Moments centered_moments(std::span<const double> x, std::span<const double> y, double mx, double my);
void axpy(double a, std::span<const double> x, std::span<double> y);

}  // namespace trendproxy::kernels
