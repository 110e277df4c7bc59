#include <arm_neon.h>

#include "trendproxy/kernels.hpp"

namespace trendproxy::kernels::detail {

namespace {

double sum_neon(const double* x, std::size_t n) {
    float64x2_t a0 = vdupq_n_f64(0.0);
    float64x2_t a1 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        a0 = vaddq_f64(a0, vld1q_f64(x + i));
        a1 = vaddq_f64(a1, vld1q_f64(x + i + 2));
    }
    double s = vaddvq_f64(vaddq_f64(a0, a1));
    for (; i < n; ++i) s += x[i];
    return s;
}

double dot_neon(const double* x, const double* y, std::size_t n) {
    float64x2_t a0 = vdupq_n_f64(0.0);
    float64x2_t a1 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        a0 = vfmaq_f64(a0, vld1q_f64(x + i), vld1q_f64(y + i));
        a1 = vfmaq_f64(a1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
    }
    double s = vaddvq_f64(vaddq_f64(a0, a1));
    for (; i < n; ++i) s += x[i] * y[i];
    return s;
}

double sum_sq_diff_neon(const double* x, const double* y, std::size_t n) {
    float64x2_t a0 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t d = vsubq_f64(vld1q_f64(x + i), vld1q_f64(y + i));
        a0 = vfmaq_f64(a0, d, d);
    }
    double s = vaddvq_f64(a0);
    for (; i < n; ++i) {
        double d = x[i] - y[i];
        s += d * d;
    }
    return s;
}

double centered_sum_sq_neon(const double* x, std::size_t n, double mean) {
    const float64x2_t m = vdupq_n_f64(mean);
    float64x2_t a0 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t d = vsubq_f64(vld1q_f64(x + i), m);
        a0 = vfmaq_f64(a0, d, d);
    }
    double s = vaddvq_f64(a0);
    for (; i < n; ++i) {
        double d = x[i] - mean;
        s += d * d;
    }
    return s;
}

Moments centered_moments_neon(const double* x, const double* y, std::size_t n, double mx, double my) {
    const float64x2_t vmx = vdupq_n_f64(mx);
    const float64x2_t vmy = vdupq_n_f64(my);
    float64x2_t axx = vdupq_n_f64(0.0), ayy = vdupq_n_f64(0.0), axy = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t dx = vsubq_f64(vld1q_f64(x + i), vmx);
        float64x2_t dy = vsubq_f64(vld1q_f64(y + i), vmy);
        axx = vfmaq_f64(axx, dx, dx);
        ayy = vfmaq_f64(ayy, dy, dy);
        axy = vfmaq_f64(axy, dx, dy);
    }
    Moments m{vaddvq_f64(axx), vaddvq_f64(ayy), vaddvq_f64(axy)};
    for (; i < n; ++i) {
        double dx = x[i] - mx;
        double dy = y[i] - my;
        m.sxx += dx * dx;
        m.syy += dy * dy;
        m.sxy += dx * dy;
    }
    return m;
}

void axpy_neon(double a, const double* x, double* y, std::size_t n) {
    const float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
    for (; i < n; ++i) y[i] += a * x[i];
}

}  // namespace

const KernelTable& neon_kernels() {
    static const KernelTable table{Isa::Neon,       sum_neon,
                                   dot_neon,        sum_sq_diff_neon,
                                   centered_sum_sq_neon, centered_moments_neon,
                                   axpy_neon};
    return table;
}

}  // namespace trendproxy::kernels::detail
