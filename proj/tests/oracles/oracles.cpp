#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace oracles {

using flowaudit::Matrix;

namespace {

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) {
        for (int i = 0; i < n; ++i) parent[i] = i;
    }
    int find(int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        parent[a] = b;
        return true;
    }
};

// Solve flows on a spanning-tree basis by leaf elimination. Returns false
// when some flow would have to be negative.
bool solve_tree(const std::vector<int>& cells, int m, int n, const std::vector<double>& supply,
                const std::vector<double>& demand, const Matrix& cost, double& out_cost) {
    const int nodes = m + n;
    std::vector<std::vector<int>> incident(nodes);
    for (size_t k = 0; k < cells.size(); ++k) {
        incident[cells[k] / n].push_back(static_cast<int>(k));
        incident[m + cells[k] % n].push_back(static_cast<int>(k));
    }
    std::vector<double> balance(nodes);
    for (int i = 0; i < m; ++i) balance[i] = supply[i];
    for (int j = 0; j < n; ++j) balance[m + j] = demand[j];

    std::vector<char> cell_done(cells.size(), 0);
    std::vector<int> degree(nodes);
    for (int v = 0; v < nodes; ++v) degree[v] = static_cast<int>(incident[v].size());

    std::vector<double> flow(cells.size(), 0.0);
    std::vector<int> stack;
    for (int v = 0; v < nodes; ++v) {
        if (degree[v] == 1) stack.push_back(v);
    }
    int resolved = 0;
    while (!stack.empty()) {
        const int v = stack.back();
        stack.pop_back();
        if (degree[v] != 1) continue;
        int edge = -1;
        for (int k : incident[v]) {
            if (!cell_done[k]) {
                edge = k;
                break;
            }
        }
        if (edge < 0) continue;
        const int r = cells[edge] / n, c = m + cells[edge] % n;
        const int other = (v == r) ? c : r;
        flow[edge] = balance[v];
        balance[other] -= balance[v];
        balance[v] = 0.0;
        cell_done[edge] = 1;
        ++resolved;
        --degree[v];
        if (--degree[other] == 1) stack.push_back(other);
    }
    if (resolved != static_cast<int>(cells.size())) return false;

    out_cost = 0.0;
    for (size_t k = 0; k < cells.size(); ++k) {
        if (flow[k] < -1e-12) return false;
        if (flow[k] > 1e-15) out_cost += flow[k] * cost(cells[k] / n, cells[k] % n);
    }
    return true;
}

}  // namespace

double brute_force_w1(const std::vector<double>& supply, const std::vector<double>& demand,
                      const Matrix& cost) {
    const int m = static_cast<int>(supply.size());
    const int n = static_cast<int>(demand.size());
    const int cells_total = m * n;
    const int k = m + n - 1;
    if (cells_total > 24) throw std::runtime_error("brute_force_w1: instance too large");

    double best = std::numeric_limits<double>::infinity();
    std::vector<int> chosen(k);

    // Enumerate all k-subsets of cells; keep the spanning trees.
    std::vector<int> idx(k);
    for (int i = 0; i < k; ++i) idx[i] = i;
    while (true) {
        UnionFind uf(m + n);
        bool acyclic = true;
        for (int i = 0; i < k && acyclic; ++i) {
            const int cell = idx[i];
            acyclic = uf.unite(cell / n, m + cell % n);
        }
        if (acyclic) {  // k acyclic edges on m+n nodes => spanning tree
            for (int i = 0; i < k; ++i) chosen[i] = idx[i];
            double c;
            if (solve_tree(chosen, m, n, supply, demand, cost, c)) best = std::min(best, c);
        }
        // next combination
        int pos = k - 1;
        while (pos >= 0 && idx[pos] == cells_total - k + pos) --pos;
        if (pos < 0) break;
        ++idx[pos];
        for (int i = pos + 1; i < k; ++i) idx[i] = idx[i - 1] + 1;
    }
    if (!std::isfinite(best)) throw std::runtime_error("brute_force_w1: no feasible vertex");
    return best;
}

flowaudit::Matrix brute_force_shortest_paths(int n,
                                             const std::vector<std::vector<double>>& edge_len) {
    const double inf = std::numeric_limits<double>::infinity();
    Matrix dist(n, n, inf);
    for (int i = 0; i < n; ++i) dist(i, i) = 0.0;

    // DFS over simple paths from each source.
    std::vector<char> used(n, 0);
    std::function<void(int, int, double)> dfs = [&](int src, int v, double len) {
        if (len < dist(src, v)) dist(src, v) = len;
        for (int w = 0; w < n; ++w) {
            if (!used[w] && std::isfinite(edge_len[v][w])) {
                used[w] = 1;
                dfs(src, w, len + edge_len[v][w]);
                used[w] = 0;
            }
        }
    };
    for (int s = 0; s < n; ++s) {
        std::fill(used.begin(), used.end(), 0);
        used[s] = 1;
        dfs(s, s, 0.0);
    }
    return dist;
}

std::vector<double> ref_gru_step(const flowaudit::PredictorParams& p,
                                 const std::vector<double>& x, std::vector<double>& h) {
    const int H = p.hyper.hidden;
    const int D = p.hyper.d;
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };

    std::vector<double> z(H), r(H), nn(H), hn(H);
    for (int i = 0; i < H; ++i) {
        double az = p.bz[i], ar = p.br[i];
        for (size_t j = 0; j < x.size(); ++j) {
            az += p.Wz(i, j) * x[j];
            ar += p.Wr(i, j) * x[j];
        }
        for (int j = 0; j < H; ++j) {
            az += p.Uz(i, j) * h[j];
            ar += p.Ur(i, j) * h[j];
        }
        z[i] = sig(az);
        r[i] = sig(ar);
    }
    for (int i = 0; i < H; ++i) {
        double an = p.bn[i];
        for (size_t j = 0; j < x.size(); ++j) an += p.Wn(i, j) * x[j];
        double uh = 0.0;
        for (int j = 0; j < H; ++j) uh += p.Un(i, j) * h[j];
        an += r[i] * uh;
        nn[i] = std::tanh(an);
        hn[i] = (1.0 - z[i]) * nn[i] + z[i] * h[i];
    }
    h = hn;
    std::vector<double> y(D);
    for (int i = 0; i < D; ++i) {
        double v = p.bo[i];
        for (int j = 0; j < H; ++j) v += p.Wo(i, j) * hn[j];
        y[i] = v;
    }
    return y;
}

double ref_mlp(const flowaudit::PredictorParams& p, const double f[4]) {
    const int M = p.hyper.mlp_hidden;
    std::vector<double> a1(M), a2(M);
    for (int i = 0; i < M; ++i) {
        double v = p.c1[i];
        for (int j = 0; j < 4; ++j) v += p.M1(i, j) * f[j];
        a1[i] = v > 0.0 ? v : 0.0;
    }
    for (int i = 0; i < M; ++i) {
        double v = p.c2[i];
        for (int j = 0; j < M; ++j) v += p.M2(i, j) * a1[j];
        a2[i] = v > 0.0 ? v : 0.0;
    }
    double out = p.c3;
    for (int j = 0; j < M; ++j) out += p.m3[j] * a2[j];
    if (out < p.hyper.kappa_clip_min) out = p.hyper.kappa_clip_min;
    if (out > p.hyper.kappa_clip_max) out = p.hyper.kappa_clip_max;
    return out;
}

std::optional<int> ref_alarm_time(const std::vector<double>& scores, double tau, int t_start) {
    for (int t = 0; t < static_cast<int>(scores.size()); ++t) {
        if (t >= t_start && scores[t] >= tau) return t;
    }
    return std::nullopt;
}

double ref_auroc(const std::vector<double>& scores, const std::vector<bool>& labels) {
    double wins = 0.0;
    int64_t pairs = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (!labels[i]) continue;
        for (size_t j = 0; j < scores.size(); ++j) {
            if (labels[j]) continue;
            ++pairs;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    if (pairs == 0) throw std::runtime_error("ref_auroc: single-class input");
    return wins / static_cast<double>(pairs);
}

double isotonic_residual(const std::vector<double>& series) {
    // Pool-adjacent-violators for the best non-decreasing fit.
    struct Block {
        double sum;
        int count;
    };
    std::vector<Block> blocks;
    for (double v : series) {
        blocks.push_back({v, 1});
        while (blocks.size() > 1) {
            auto& b = blocks.back();
            auto& a = blocks[blocks.size() - 2];
            if (a.sum / a.count <= b.sum / b.count) break;
            a.sum += b.sum;
            a.count += b.count;
            blocks.pop_back();
        }
    }
    std::vector<double> fit;
    for (const auto& b : blocks) {
        for (int i = 0; i < b.count; ++i) fit.push_back(b.sum / b.count);
    }
    double ss = 0.0;
    for (size_t i = 0; i < series.size(); ++i) {
        const double d = series[i] - fit[i];
        ss += d * d;
    }
    return ss;
}

}  // namespace oracles
