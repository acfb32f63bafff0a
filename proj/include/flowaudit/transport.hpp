#pragma once

#include <vector>

#include "flowaudit/matrix.hpp"

namespace flowaudit {

// Exact solver for the balanced transportation problem
//
//   min sum_ij cost(i,j) * x(i,j)
//   s.t. sum_j x(i,j) = supply(i), sum_i x(i,j) = demand(j), x >= 0
//
// via the transportation simplex (northwest-corner start, tree potentials,
// Bland's rule on entering and leaving cells so degenerate pivots cannot
// cycle). Problem sizes here are tiny (supports bounded by the agent
// count), so exactness is cheap.
//
// supply and demand must balance; all costs must be finite.
// Throws NumericError on a non-finite cost or unbalanced marginals.

struct TransportResult {
    double cost = 0.0;
    int pivots = 0;
};

TransportResult solve_transport(const std::vector<double>& supply,
                                const std::vector<double>& demand, const Matrix& cost);

}  // namespace flowaudit
