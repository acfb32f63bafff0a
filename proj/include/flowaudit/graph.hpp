#pragma once

#include <cstdint>
#include <vector>

namespace flowaudit {

// One directed semantic-flow edge. `transmissibility` is the raw cosine in
// [-1,1]; `weight` is the clamped product max(0, tau) * chi in [0,1].
struct FlowEdge {
    int src = 0;
    int dst = 0;
    double transmissibility = 0.0;
    double credibility = 0.0;
    double weight = 0.0;
};

// Weighted directed graph over the agent roster for one round. Edges are
// kept sorted by (src, dst); no self-loops, at most one edge per ordered
// pair, weights finite and non-negative.
struct FlowGraph {
    int n_nodes = 0;
    int round = 0;
    std::vector<FlowEdge> edges;

    const FlowEdge* find_edge(int src, int dst) const {
        for (const auto& e : edges) {
            if (e.src == src && e.dst == dst) return &e;
            if (e.src > src) break;
        }
        return nullptr;
    }

    std::vector<std::vector<int>> out_adjacency() const {
        std::vector<std::vector<int>> adj(n_nodes);
        for (const auto& e : edges) adj[e.src].push_back(e.dst);
        return adj;
    }
};

}  // namespace flowaudit
