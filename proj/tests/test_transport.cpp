#include <doctest.h>

#include <cmath>

#include "flowaudit/errors.hpp"
#include "flowaudit/rng.hpp"
#include "flowaudit/transport.hpp"
#include "oracles/oracles.hpp"

using namespace flowaudit;

TEST_CASE("transportation simplex on hand instances") {
    SUBCASE("1x1") {
        Matrix c(1, 1);
        c(0, 0) = 3.0;
        CHECK(solve_transport({1.0}, {1.0}, c).cost == doctest::Approx(3.0));
    }
    SUBCASE("2x2 with an obvious diagonal optimum") {
        Matrix c(2, 2);
        c(0, 0) = 0.0;
        c(0, 1) = 5.0;
        c(1, 0) = 5.0;
        c(1, 1) = 0.0;
        CHECK(solve_transport({0.5, 0.5}, {0.5, 0.5}, c).cost == doctest::Approx(0.0));
    }
    SUBCASE("unbalanced marginals rejected") {
        Matrix c(1, 1, 1.0);
        CHECK_THROWS_AS(solve_transport({1.0}, {0.5}, c), NumericError);
    }
    SUBCASE("non-finite cost rejected") {
        Matrix c(1, 1, std::numeric_limits<double>::infinity());
        CHECK_THROWS_AS(solve_transport({1.0}, {1.0}, c), NumericError);
    }
}

TEST_CASE("simplex matches brute-force vertex enumeration on random instances") {
    Rng rng(909);
    for (int rep = 0; rep < 400; ++rep) {
        const int m = 1 + static_cast<int>(rng.uniform_index(4));
        const int n = 1 + static_cast<int>(rng.uniform_index(4));
        std::vector<double> supply(m), demand(n);
        double total = 0.0;
        for (auto& s : supply) {
            s = rng.uniform(0.05, 1.0);
            total += s;
        }
        for (auto& s : supply) s /= total;
        total = 0.0;
        for (auto& d : demand) {
            d = rng.uniform(0.05, 1.0);
            total += d;
        }
        for (auto& d : demand) d /= total;
        Matrix cost(m, n);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) {
                // mix of integer and fractional costs, incl. exact ties
                cost(i, j) = rng.bernoulli(0.5) ? static_cast<double>(rng.uniform_index(5))
                                                : rng.uniform(0.0, 4.0);
            }
        }
        const double lp = solve_transport(supply, demand, cost).cost;
        const double bf = oracles::brute_force_w1(supply, demand, cost);
        CHECK(lp == doctest::Approx(bf).epsilon(1e-10));
    }
}

TEST_CASE("degenerate instances with many zero supplies still terminate") {
    Rng rng(1001);
    for (int rep = 0; rep < 100; ++rep) {
        const int m = 3, n = 3;
        std::vector<double> supply = {1.0, 0.0, 0.0};
        std::vector<double> demand = {0.5, 0.5, 0.0};
        Matrix cost(m, n);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) cost(i, j) = static_cast<double>(rng.uniform_index(3));
        }
        const double lp = solve_transport(supply, demand, cost).cost;
        const double bf = oracles::brute_force_w1(supply, demand, cost);
        CHECK(lp == doctest::Approx(bf).epsilon(1e-10));
    }
}
