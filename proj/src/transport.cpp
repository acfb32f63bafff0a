#include "flowaudit/transport.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "flowaudit/errors.hpp"

namespace flowaudit {

namespace {

// Basic cells indexed by flat cell id i*n + j. Tree nodes are rows
// [0, m) and columns [m, m+n).
struct Basis {
    int m, n;
    std::vector<int> cells;          // flat ids, kept sorted for Bland's rule
    std::vector<double> flow;        // parallel to cells
    std::vector<char> is_basic;      // per flat id

    int row_of(int cell) const { return cell / n; }
    int col_of(int cell) const { return cell % n; }

    void add(int cell, double f) {
        auto it = std::lower_bound(cells.begin(), cells.end(), cell);
        const size_t pos = it - cells.begin();
        cells.insert(it, cell);
        flow.insert(flow.begin() + pos, f);
        is_basic[cell] = 1;
    }

    void remove(int cell) {
        auto it = std::lower_bound(cells.begin(), cells.end(), cell);
        const size_t pos = it - cells.begin();
        cells.erase(it);
        flow.erase(flow.begin() + pos);
        is_basic[cell] = 0;
    }

    double& flow_at(int cell) {
        auto it = std::lower_bound(cells.begin(), cells.end(), cell);
        return flow[it - cells.begin()];
    }
};

}  // namespace

TransportResult solve_transport(const std::vector<double>& supply,
                                const std::vector<double>& demand, const Matrix& cost) {
    const int m = static_cast<int>(supply.size());
    const int n = static_cast<int>(demand.size());
    if (m == 0 || n == 0) throw NumericError("transport: empty marginals");
    if (cost.rows() != static_cast<size_t>(m) || cost.cols() != static_cast<size_t>(n))
        throw NumericError("transport: cost shape mismatch");

    double total_supply = 0.0, total_demand = 0.0, cost_scale = 1.0;
    for (double s : supply) {
        if (!(s >= 0.0)) throw NumericError("transport: negative supply");
        total_supply += s;
    }
    for (double d : demand) {
        if (!(d >= 0.0)) throw NumericError("transport: negative demand");
        total_demand += d;
    }
    if (std::abs(total_supply - total_demand) > 1e-9 * std::max(1.0, total_supply))
        throw NumericError("transport: unbalanced marginals");
    for (size_t k = 0; k < cost.size(); ++k) {
        if (!std::isfinite(cost.data()[k]))
            throw NumericError("transport: non-finite cost entry");
        cost_scale = std::max(cost_scale, std::abs(cost.data()[k]));
    }

    Basis basis{m, n, {}, {}, std::vector<char>(static_cast<size_t>(m) * n, 0)};

    // Northwest-corner start: a monotone path of m+n-1 basic cells.
    {
        std::vector<double> a = supply, b = demand;
        int i = 0, j = 0;
        while (static_cast<int>(basis.cells.size()) < m + n - 1) {
            const double q = std::max(0.0, std::min(a[i], b[j]));
            basis.add(i * n + j, q);
            a[i] -= q;
            b[j] -= q;
            if (static_cast<int>(basis.cells.size()) == m + n - 1) break;
            if (a[i] <= b[j]) {
                if (i + 1 < m) ++i; else ++j;
            } else {
                if (j + 1 < n) ++j; else ++i;
            }
        }
    }

    const int n_nodes = m + n;
    std::vector<double> u(m), v(n);
    std::vector<char> seen(n_nodes);
    std::vector<std::vector<int>> adj(n_nodes);       // node -> incident basic cells
    std::vector<int> parent_cell(n_nodes), parent_node(n_nodes);

    const double tol = 1e-12 * cost_scale;
    const int max_pivots = 64 * (m + n) * (m + n) + 256;
    int pivots = 0;

    while (true) {
        // Potentials u_i + v_j = c_ij over the basis tree, u_0 = 0.
        for (auto& a : adj) a.clear();
        for (int cell : basis.cells) {
            adj[basis.row_of(cell)].push_back(cell);
            adj[m + basis.col_of(cell)].push_back(cell);
        }
        std::fill(seen.begin(), seen.end(), 0);
        std::deque<int> queue{0};
        u[0] = 0.0;
        seen[0] = 1;
        while (!queue.empty()) {
            const int node = queue.front();
            queue.pop_front();
            for (int cell : adj[node]) {
                const int r = basis.row_of(cell), c = basis.col_of(cell);
                const int other = (node < m) ? m + c : r;
                if (seen[other]) continue;
                if (other >= m)
                    v[c] = cost(r, c) - u[r];
                else
                    u[r] = cost(r, c) - v[c];
                seen[other] = 1;
                queue.push_back(other);
            }
        }

        // Entering cell: lowest flat id with negative reduced cost (Bland).
        int entering = -1;
        for (int i = 0; i < m && entering < 0; ++i) {
            for (int j = 0; j < n; ++j) {
                const int cell = i * n + j;
                if (basis.is_basic[cell]) continue;
                if (cost(i, j) - u[i] - v[j] < -tol) {
                    entering = cell;
                    break;
                }
            }
        }
        if (entering < 0) break;  // optimal

        if (++pivots > max_pivots)
            throw NumericError("transport: pivot limit exceeded");

        // Tree path from the entering cell's column node to its row node.
        const int er = basis.row_of(entering), ec = basis.col_of(entering);
        std::fill(seen.begin(), seen.end(), 0);
        std::deque<int> bfs{m + ec};
        seen[m + ec] = 1;
        parent_node[m + ec] = -1;
        while (!bfs.empty()) {
            const int node = bfs.front();
            bfs.pop_front();
            if (node == er) break;
            for (int cell : adj[node]) {
                const int r = basis.row_of(cell), c = basis.col_of(cell);
                const int other = (node < m) ? m + c : r;
                if (seen[other]) continue;
                seen[other] = 1;
                parent_node[other] = node;
                parent_cell[other] = cell;
                bfs.push_back(other);
            }
        }

        // Walk the path; cells at odd positions (starting at the entering
        // cell = position 0, +theta) lose flow.
        std::vector<int> minus_cells, plus_cells;
        {
            int node = er, pos = 1;
            while (parent_node[node] != -1) {
                const int cell = parent_cell[node];
                ((pos % 2 == 1) ? minus_cells : plus_cells).push_back(cell);
                node = parent_node[node];
                ++pos;
            }
        }

        double theta = std::numeric_limits<double>::infinity();
        int leaving = -1;
        for (int cell : minus_cells) {
            const double f = basis.flow_at(cell);
            if (f < theta - 1e-15 || (std::abs(f - theta) <= 1e-15 && cell < leaving)) {
                theta = f;
                leaving = cell;
            }
        }
        theta = std::max(0.0, theta);

        for (int cell : plus_cells) basis.flow_at(cell) += theta;
        for (int cell : minus_cells) basis.flow_at(cell) -= theta;
        basis.remove(leaving);
        basis.add(entering, theta);
    }

    TransportResult result;
    result.pivots = pivots;
    for (size_t k = 0; k < basis.cells.size(); ++k) {
        const int cell = basis.cells[k];
        result.cost += basis.flow[k] * cost(basis.row_of(cell), basis.col_of(cell));
    }
    return result;
}

}  // namespace flowaudit
