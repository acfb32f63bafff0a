// NEON variants for aarch64, where 128-bit double lanes are baseline.

#include "flowaudit/kernels.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

namespace flowaudit::kernels::neon {

extern const Ops ops;

double dot(const double* a, const double* b, size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        acc = vfmaq_f64(acc, vld1q_f64(a + i), vld1q_f64(b + i));
    }
    double out = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
    for (; i < n; ++i) out += a[i] * b[i];
    return out;
}

double l2sq_diff(const double* a, const double* b, size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t d = vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i));
        acc = vfmaq_f64(acc, d, d);
    }
    double out = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
    for (; i < n; ++i) {
        const double d = a[i] - b[i];
        out += d * d;
    }
    return out;
}

void axpy(double alpha, const double* x, double* y, size_t n) {
    const float64x2_t va = vdupq_n_f64(alpha);
    size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t vy = vld1q_f64(y + i);
        vy = vfmaq_f64(vy, va, vld1q_f64(x + i));
        vst1q_f64(y + i, vy);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

double sum(const double* a, size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    size_t i = 0;
    for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(a + i));
    double out = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
    for (; i < n; ++i) out += a[i];
    return out;
}

const Ops ops = {dot, l2sq_diff, axpy, sum, "neon"};

}  // namespace flowaudit::kernels::neon

#endif  // __aarch64__
