#include "flowaudit/kernels.hpp"

namespace flowaudit::kernels::scalar {

double dot(const double* a, const double* b, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double l2sq_diff(const double* a, const double* b, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

void axpy(double alpha, const double* x, double* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double sum(const double* a, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += a[i];
    return acc;
}

const Ops ops = {dot, l2sq_diff, axpy, sum, "scalar"};

}  // namespace flowaudit::kernels::scalar
