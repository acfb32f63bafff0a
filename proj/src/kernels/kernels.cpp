#include "flowaudit/kernels.hpp"

namespace flowaudit::kernels {

#if defined(FLOWAUDIT_HAVE_AVX2_TU)
namespace avx2 {
extern const Ops ops;
}
#endif
#if defined(__aarch64__)
namespace neon {
extern const Ops ops;
}
#endif

namespace {

const Ops* resolve() {
#if defined(FLOWAUDIT_HAVE_AVX2_TU)
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
        return &avx2::ops;
    }
#endif
#if defined(__aarch64__)
    return &neon::ops;
#endif
    return &scalar::ops;
}

const Ops* g_active = nullptr;

const Ops* active_ptr() {
    if (!g_active) g_active = resolve();
    return g_active;
}

}  // namespace

const Ops& active() { return *active_ptr(); }

std::string active_name() { return active().name; }

void force_scalar() { g_active = &scalar::ops; }

void matvec(const double* W, const double* x, double* y, size_t rows, size_t cols,
            bool accumulate) {
    const Ops& k = active();
    for (size_t i = 0; i < rows; ++i) {
        const double v = k.dot(W + i * cols, x, cols);
        y[i] = accumulate ? y[i] + v : v;
    }
}

void matvec_t(const double* W, const double* g, double* out, size_t rows, size_t cols) {
    const Ops& k = active();
    for (size_t i = 0; i < rows; ++i) {
        if (g[i] != 0.0) k.axpy(g[i], W + i * cols, out, cols);
    }
}

void ger(double* W, const double* g, const double* x, size_t rows, size_t cols) {
    const Ops& k = active();
    for (size_t i = 0; i < rows; ++i) {
        if (g[i] != 0.0) k.axpy(g[i], x, W + i * cols, cols);
    }
}

}  // namespace flowaudit::kernels
