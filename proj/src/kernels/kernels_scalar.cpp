#include "trendproxy/kernels.hpp"

namespace trendproxy::kernels {

namespace {

double sum_scalar(const double* x, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
}

double dot_scalar(const double* x, const double* y, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

double sum_sq_diff_scalar(const double* x, const double* y, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double d = x[i] - y[i];
        s += d * d;
    }
    return s;
}

double centered_sum_sq_scalar(const double* x, std::size_t n, double mean) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double d = x[i] - mean;
        s += d * d;
    }
    return s;
}

Moments centered_moments_scalar(const double* x, const double* y, std::size_t n, double mx, double my) {
    Moments m;
    for (std::size_t i = 0; i < n; ++i) {
        double dx = x[i] - mx;
        double dy = y[i] - my;
        m.sxx += dx * dx;
        m.syy += dy * dy;
        m.sxy += dx * dy;
    }
    return m;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

}  // namespace

const KernelTable& scalar_table() {
    static const KernelTable table{Isa::Scalar,         sum_scalar,          dot_scalar,
                                   sum_sq_diff_scalar, centered_sum_sq_scalar, centered_moments_scalar,
                                   axpy_scalar};
    return table;
}

}  // namespace trendproxy::kernels
