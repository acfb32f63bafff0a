#pragma once

#include <cstddef>
#include <string>

// Dense double-precision kernels behind the hot loops (cosines, GRU/MLP
// matvecs, residual norms). A scalar reference implementation always
// exists; an AVX2/FMA (x86-64) or NEON (aarch64) variant is selected once
// at startup when the CPU supports it. Variants are equivalence-tested
// against the scalar reference.

namespace flowaudit::kernels {

struct Ops {
    // sum_i a[i]*b[i]
    double (*dot)(const double* a, const double* b, size_t n);
    // sum_i (a[i]-b[i])^2
    double (*l2sq_diff)(const double* a, const double* b, size_t n);
    // y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, size_t n);
    // sum_i a[i]
    double (*sum)(const double* a, size_t n);
    const char* name;
};

namespace scalar {
double dot(const double* a, const double* b, size_t n);
double l2sq_diff(const double* a, const double* b, size_t n);
void axpy(double alpha, const double* x, double* y, size_t n);
double sum(const double* a, size_t n);
extern const Ops ops;
}  // namespace scalar

// Active implementation, resolved once per process.
const Ops& active();

// Name of the active implementation ("scalar", "avx2", "neon").
std::string active_name();

// Test hook: force the scalar path for the rest of the process.
void force_scalar();

inline double dot(const double* a, const double* b, size_t n) {
    return active().dot(a, b, n);
}
inline double l2sq_diff(const double* a, const double* b, size_t n) {
    return active().l2sq_diff(a, b, n);
}
inline void axpy(double alpha, const double* x, double* y, size_t n) {
    active().axpy(alpha, x, y, n);
}
inline double sum(const double* a, size_t n) {
    return active().sum(a, n);
}

// y (+)= W x for row-major W (rows x cols). Built on dot().
void matvec(const double* W, const double* x, double* y, size_t rows, size_t cols,
            bool accumulate);

// out[j] += sum_i g[i] * W[i][j]  (transpose matvec, backprop input path).
void matvec_t(const double* W, const double* g, double* out, size_t rows, size_t cols);

// W[i][j] += g[i] * x[j]  (rank-1 accumulation, backprop weight path).
void ger(double* W, const double* g, const double* x, size_t rows, size_t cols);

}  // namespace flowaudit::kernels
