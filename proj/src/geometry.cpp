#include "flowaudit/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>

#include "flowaudit/errors.hpp"
#include "flowaudit/io_util.hpp"
#include "flowaudit/transport.hpp"

namespace flowaudit {

std::string to_string(LengthMode m) { return m == LengthMode::hop ? "hop" : "inverse_weight"; }

LengthMode length_mode_from_string(const std::string& s) {
    if (s == "hop") return LengthMode::hop;
    if (s == "inverse_weight") return LengthMode::inverse_weight;
    throw ConfigError("unknown length_mode: " + s);
}

DistanceOracle shortest_paths(const FlowGraph& graph, LengthMode mode) {
    const int n = graph.n_nodes;
    DistanceOracle oracle;
    oracle.n_nodes = n;
    oracle.dist = Matrix(n, n, DistanceOracle::inf());
    for (int i = 0; i < n; ++i) oracle.dist(i, i) = 0.0;

    for (const auto& e : graph.edges) {
        const double len = (mode == LengthMode::hop) ? 1.0 : 1.0 / e.weight;
        oracle.dist(e.src, e.dst) = std::min(oracle.dist(e.src, e.dst), len);
    }

    // Floyd-Warshall; N is at most the agent count, so cubic is fine.
    for (int k = 0; k < n; ++k) {
        for (int i = 0; i < n; ++i) {
            const double dik = oracle.dist(i, k);
            if (dik == DistanceOracle::inf()) continue;
            for (int j = 0; j < n; ++j) {
                const double via = dik + oracle.dist(k, j);
                if (via < oracle.dist(i, j)) oracle.dist(i, j) = via;
            }
        }
    }
    return oracle;
}

NodeMeasure neighborhood_measure(const FlowGraph& graph, int node) {
    NodeMeasure m;
    double total = 0.0;
    for (const auto& e : graph.edges) {
        if (e.src != node) continue;
        m.support.push_back(e.dst);
        m.mass.push_back(e.weight);
        total += e.weight;
    }
    if (m.support.empty()) {
        // Sink node: absorbing convention, all mass stays on the node.
        m.support.push_back(node);
        m.mass.push_back(1.0);
        m.self_fallback = true;
        return m;
    }
    for (auto& v : m.mass) v /= total;
    return m;
}

double wasserstein1(const NodeMeasure& mu, const NodeMeasure& nu, const DistanceOracle& d) {
    const size_t m = mu.support.size(), n = nu.support.size();
    Matrix cost(m, n);
    for (size_t i = 0; i < m; ++i) {
        for (size_t j = 0; j < n; ++j) {
            const double dij = d(mu.support[i], nu.support[j]);
            if (!std::isfinite(dij))
                throw NumericError("wasserstein1: infeasible transport (infinite distance)");
            cost(i, j) = dij;
        }
    }
    return solve_transport(mu.mass, nu.mass, cost).cost;
}

double orc_edge(const FlowGraph& graph, int src, int dst, const DistanceOracle& d,
                const GeometryConfig& cfg) {
    if (!graph.find_edge(src, dst)) throw ContractError("orc_edge: edge not present");
    const double dij = d(src, dst);
    if (!std::isfinite(dij) || dij <= 0.0)
        throw ContractError("orc_edge: d(i,j) must be finite and positive");
    const NodeMeasure mi = neighborhood_measure(graph, src);
    const NodeMeasure mj = neighborhood_measure(graph, dst);
    const double w1 = wasserstein1(mi, mj, d);
    return std::clamp(1.0 - w1 / dij, cfg.clip_min, 1.0);
}

const EdgeKappa* CurvatureField::find(int src, int dst) const {
    auto it = std::lower_bound(kappa.begin(), kappa.end(), std::pair<int, int>{src, dst},
                               [](const EdgeKappa& e, const std::pair<int, int>& k) {
                                   return std::pair<int, int>{e.src, e.dst} < k;
                               });
    if (it != kappa.end() && it->src == src && it->dst == dst) return &*it;
    return nullptr;
}

double CurvatureField::round_mean() const {
    if (kappa.empty()) return std::nan("");
    double s = 0.0;
    for (const auto& e : kappa) s += e.kappa;
    return s / static_cast<double>(kappa.size());
}

double CurvatureField::round_min() const {
    if (kappa.empty()) return std::nan("");
    double v = kappa.front().kappa;
    for (const auto& e : kappa) v = std::min(v, e.kappa);
    return v;
}

double CurvatureField::round_max() const {
    if (kappa.empty()) return std::nan("");
    double v = kappa.front().kappa;
    for (const auto& e : kappa) v = std::max(v, e.kappa);
    return v;
}

std::vector<CurvatureField> curvature_field(const std::vector<FlowGraph>& rounds,
                                            const GeometryConfig& cfg) {
    if (cfg.window < 1) throw ConfigError("curvature window must be >= 1");

    std::vector<CurvatureField> out;
    out.reserve(rounds.size());
    double prev_window_mean = 0.0;

    for (const auto& g : rounds) {
        CurvatureField field;
        field.round = g.round;

        const DistanceOracle oracle = shortest_paths(g, cfg.length_mode);
        std::vector<NodeMeasure> measures(g.n_nodes);
        std::vector<char> have(g.n_nodes, 0);
        for (const auto& e : g.edges) {
            for (int node : {e.src, e.dst}) {
                if (!have[node]) {
                    measures[node] = neighborhood_measure(g, node);
                    have[node] = 1;
                }
            }
        }

        for (const auto& e : g.edges) {
            const double dij = oracle(e.src, e.dst);
            if (!std::isfinite(dij) || dij <= 0.0) {
                ++field.skipped_edges;
                continue;
            }
            double w1;
            try {
                w1 = wasserstein1(measures[e.src], measures[e.dst], oracle);
            } catch (const NumericError&) {
                ++field.skipped_edges;  // unreachable support pair
                continue;
            }
            field.kappa.push_back({e.src, e.dst, std::clamp(1.0 - w1 / dij, cfg.clip_min, 1.0)});
        }
        // edges are (src,dst)-sorted in the graph, so kappa inherits the order

        // Trailing-window aggregate over the last `window` rounds.
        double sum = 0.0;
        int64_t count = 0;
        double round_sum = 0.0;
        int round_count = 0;
        const int lo = std::max(0, static_cast<int>(out.size()) + 1 - cfg.window);
        auto accumulate = [&](const CurvatureField& f) {
            if (f.kappa.empty()) return;
            if (cfg.window_mean_mode == WindowMeanMode::edge_instances) {
                for (const auto& e : f.kappa) sum += e.kappa;
                count += static_cast<int64_t>(f.kappa.size());
            } else {
                round_sum += f.round_mean();
                ++round_count;
            }
        };
        for (int t = lo; t < static_cast<int>(out.size()); ++t) accumulate(out[t]);
        accumulate(field);
        if (cfg.window_mean_mode == WindowMeanMode::edge_instances) {
            field.window_mean = (count > 0) ? sum / static_cast<double>(count) : prev_window_mean;
        } else {
            field.window_mean =
                (round_count > 0) ? round_sum / round_count : prev_window_mean;
        }
        prev_window_mean = field.window_mean;
        out.push_back(std::move(field));
    }
    return out;
}

void CurvatureBaselineAccumulator::add(const std::vector<CurvatureField>& fields) {
    for (const auto& f : fields) {
        for (const auto& e : f.kappa) {
            sum_ += e.kappa;
            sumsq_ += e.kappa * e.kappa;
            ++count_;
        }
    }
}

CurvatureBaseline CurvatureBaselineAccumulator::finish() const {
    if (count_ == 0) throw NumericError("curvature baseline: no edges accumulated");
    CurvatureBaseline b;
    b.count = count_;
    b.mean = sum_ / static_cast<double>(count_);
    const double var = std::max(0.0, sumsq_ / static_cast<double>(count_) - b.mean * b.mean);
    b.stddev = std::sqrt(var);
    return b;
}

std::vector<double> curvature_deviation(const std::vector<CurvatureField>& fields,
                                        const CurvatureBaseline& baseline) {
    std::vector<double> dk;
    dk.reserve(fields.size());
    for (const auto& f : fields) {
        if (f.kappa.empty()) {
            dk.push_back(0.0);
            continue;
        }
        double s = 0.0;
        for (const auto& e : f.kappa) s += std::abs(e.kappa - baseline.mean);
        dk.push_back(s / static_cast<double>(f.kappa.size()));
    }
    return dk;
}

void write_curvature_csv(const std::vector<CurvatureField>& fields, const std::string& edge_path,
                         const std::string& summary_path) {
    std::ofstream edges(edge_path, std::ios::binary);
    if (!edges) throw IoError("cannot open for writing: " + edge_path);
    edges << "round,src,dst,kappa\n";
    for (const auto& f : fields) {
        for (const auto& e : f.kappa) {
            edges << f.round << ',' << e.src << ',' << e.dst << ',' << format_double(e.kappa)
                  << '\n';
        }
    }

    std::ofstream summary(summary_path, std::ios::binary);
    if (!summary) throw IoError("cannot open for writing: " + summary_path);
    summary << "round,kappa_mean,kappa_min,kappa_max,window_mean\n";
    for (const auto& f : fields) {
        summary << f.round << ',' << format_double(f.round_mean()) << ','
                << format_double(f.round_min()) << ',' << format_double(f.round_max()) << ','
                << format_double(f.window_mean) << '\n';
    }
}

}  // namespace flowaudit
