#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "flowaudit/graph.hpp"
#include "flowaudit/matrix.hpp"

namespace flowaudit {

enum class LengthMode { hop, inverse_weight };

enum class WindowMeanMode { edge_instances, round_means };

struct GeometryConfig {
    LengthMode length_mode = LengthMode::hop;
    double clip_min = -2.0;   // kappa clip lower bound; upper bound is always 1
    int window = 5;           // sliding window for the aggregate mean
    WindowMeanMode window_mean_mode = WindowMeanMode::edge_instances;
};

// All-pairs shortest paths over the directed round graph. Unreachable
// pairs are +infinity.
struct DistanceOracle {
    int n_nodes = 0;
    Matrix dist;

    double operator()(int i, int j) const { return dist(i, j); }
    static constexpr double inf() { return std::numeric_limits<double>::infinity(); }
};

DistanceOracle shortest_paths(const FlowGraph& graph, LengthMode mode);

// Probability measure over a node's outgoing neighbors, normalized by edge
// weights. A sink node falls back to a point mass on itself.
struct NodeMeasure {
    std::vector<int> support;
    std::vector<double> mass;
    bool self_fallback = false;
};

NodeMeasure neighborhood_measure(const FlowGraph& graph, int node);

// Exact Wasserstein-1 between two node measures under the oracle's ground
// distance. Throws NumericError when a required distance is infinite.
double wasserstein1(const NodeMeasure& mu, const NodeMeasure& nu, const DistanceOracle& d);

// kappa = clamp(1 - W1(m_i, m_j) / d(i,j), clip_min, 1). Throws
// ContractError when the edge is absent or d(i,j) is infinite.
double orc_edge(const FlowGraph& graph, int src, int dst, const DistanceOracle& d,
                const GeometryConfig& cfg);

struct EdgeKappa {
    int src = 0;
    int dst = 0;
    double kappa = 0.0;
};

// Per-round edge curvatures plus the trailing-window aggregate.
struct CurvatureField {
    int round = 0;
    std::vector<EdgeKappa> kappa;   // sorted by (src, dst)
    double window_mean = 0.0;
    int skipped_edges = 0;          // unreachable transport, dropped with a warning count

    const EdgeKappa* find(int src, int dst) const;
    double round_mean() const;      // NaN when empty
    double round_min() const;
    double round_max() const;
};

std::vector<CurvatureField> curvature_field(const std::vector<FlowGraph>& rounds,
                                            const GeometryConfig& cfg);

// Normal-regime curvature statistics, the baseline for deviation signals.
struct CurvatureBaseline {
    double mean = 0.0;
    double stddev = 0.0;
    int64_t count = 0;
};

class CurvatureBaselineAccumulator {
public:
    void add(const std::vector<CurvatureField>& fields);
    CurvatureBaseline finish() const;

private:
    double sum_ = 0.0;
    double sumsq_ = 0.0;
    int64_t count_ = 0;
};

// delta_kappa(t) = mean over edges at t of |kappa_ij(t) - baseline.mean|;
// rounds with no edges score 0.
std::vector<double> curvature_deviation(const std::vector<CurvatureField>& fields,
                                        const CurvatureBaseline& baseline);

// CSV dumps: one edge file `round,src,dst,kappa` and one per-round summary
// `round,kappa_mean,kappa_min,kappa_max,window_mean`.
void write_curvature_csv(const std::vector<CurvatureField>& fields, const std::string& edge_path,
                         const std::string& summary_path);

std::string to_string(LengthMode m);
LengthMode length_mode_from_string(const std::string& s);

}  // namespace flowaudit
