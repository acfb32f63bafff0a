#include <doctest.h>

#include <cmath>
#include <vector>

#include "flowaudit/kernels.hpp"
#include "flowaudit/rng.hpp"

using namespace flowaudit;

namespace {

std::vector<double> random_vec(Rng& rng, size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-2.0, 2.0);
    return v;
}

}  // namespace

TEST_CASE("active kernel variants match the scalar reference") {
    Rng rng(20240901);
    const auto& active = kernels::active();
    INFO("active kernels: ", kernels::active_name());

    for (size_t n : {0UL, 1UL, 2UL, 3UL, 4UL, 5UL, 7UL, 8UL, 15UL, 16UL, 17UL, 64UL, 257UL}) {
        const auto a = random_vec(rng, n);
        const auto b = random_vec(rng, n);

        const double d_ref = kernels::scalar::dot(a.data(), b.data(), n);
        const double d_act = active.dot(a.data(), b.data(), n);
        CHECK(std::abs(d_ref - d_act) <= 1e-12 * (1.0 + std::abs(d_ref)));

        const double l_ref = kernels::scalar::l2sq_diff(a.data(), b.data(), n);
        const double l_act = active.l2sq_diff(a.data(), b.data(), n);
        CHECK(std::abs(l_ref - l_act) <= 1e-12 * (1.0 + l_ref));

        const double s_ref = kernels::scalar::sum(a.data(), n);
        const double s_act = active.sum(a.data(), n);
        CHECK(std::abs(s_ref - s_act) <= 1e-12 * (1.0 + std::abs(s_ref)));

        auto y_ref = random_vec(rng, n);
        auto y_act = y_ref;
        kernels::scalar::axpy(0.37, a.data(), y_ref.data(), n);
        active.axpy(0.37, a.data(), y_act.data(), n);
        for (size_t k = 0; k < n; ++k) {
            CHECK(std::abs(y_ref[k] - y_act[k]) <= 1e-12 * (1.0 + std::abs(y_ref[k])));
        }
    }
}

TEST_CASE("matvec and rank-1 update agree with naive loops") {
    Rng rng(7);
    const size_t rows = 9, cols = 13;
    const auto W = random_vec(rng, rows * cols);
    const auto x = random_vec(rng, cols);
    const auto g = random_vec(rng, rows);

    std::vector<double> y(rows, 0.0);
    kernels::matvec(W.data(), x.data(), y.data(), rows, cols, false);
    for (size_t i = 0; i < rows; ++i) {
        double acc = 0.0;
        for (size_t j = 0; j < cols; ++j) acc += W[i * cols + j] * x[j];
        CHECK(y[i] == doctest::Approx(acc).epsilon(1e-12));
    }

    std::vector<double> xt(cols, 0.0);
    kernels::matvec_t(W.data(), g.data(), xt.data(), rows, cols);
    for (size_t j = 0; j < cols; ++j) {
        double acc = 0.0;
        for (size_t i = 0; i < rows; ++i) acc += W[i * cols + j] * g[i];
        CHECK(xt[j] == doctest::Approx(acc).epsilon(1e-12));
    }

    auto W2 = W;
    kernels::ger(W2.data(), g.data(), x.data(), rows, cols);
    for (size_t i = 0; i < rows; ++i) {
        for (size_t j = 0; j < cols; ++j) {
            CHECK(W2[i * cols + j] ==
                  doctest::Approx(W[i * cols + j] + g[i] * x[j]).epsilon(1e-12));
        }
    }
}

TEST_CASE("rng streams are deterministic and named streams decorrelate") {
    Rng a(child_seed(42, "stream"));
    Rng b(child_seed(42, "stream"));
    Rng c(child_seed(42, "other"));
    bool all_equal = true;
    bool any_diff_from_c = false;
    for (int i = 0; i < 100; ++i) {
        const double va = a.uniform(), vb = b.uniform(), vc = c.uniform();
        all_equal = all_equal && (va == vb);
        any_diff_from_c = any_diff_from_c || (va != vc);
    }
    CHECK(all_equal);
    CHECK(any_diff_from_c);
}

TEST_CASE("rng normal moments are sane") {
    Rng rng(99);
    double sum = 0.0, sumsq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double v = rng.normal();
        sum += v;
        sumsq += v * v;
    }
    CHECK(std::abs(sum / n) < 0.02);
    CHECK(std::abs(sumsq / n - 1.0) < 0.02);
}
