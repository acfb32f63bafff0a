#include "flowaudit/flow_graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "flowaudit/errors.hpp"
#include "flowaudit/kernels.hpp"

namespace flowaudit {

std::string to_string(CredibilityMode m) {
    return m == CredibilityMode::raw ? "raw" : "scaled";
}

CredibilityMode credibility_mode_from_string(const std::string& s) {
    if (s == "raw") return CredibilityMode::raw;
    if (s == "scaled") return CredibilityMode::scaled;
    throw ConfigError("unknown credibility_mode: " + s);
}

FlowConfig flow_config_defaults() { return FlowConfig{}; }

double transmissibility(const double* y_src, const double* y_dst_prev, size_t d) {
    const double na = kernels::dot(y_src, y_src, d);
    const double nb = kernels::dot(y_dst_prev, y_dst_prev, d);
    if (na == 0.0 || nb == 0.0)
        throw NumericError("transmissibility undefined for a zero vector");
    double c = kernels::dot(y_src, y_dst_prev, d) / std::sqrt(na * nb);
    return std::clamp(c, -1.0, 1.0);
}

double transmissibility(const std::vector<double>& y_src, const std::vector<double>& y_dst_prev) {
    if (y_src.size() != y_dst_prev.size())
        throw NumericError("transmissibility: dimension mismatch");
    return transmissibility(y_src.data(), y_dst_prev.data(), y_src.size());
}

double credibility(double ppl, const FlowConfig& cfg) {
    if (!(ppl >= 0.0) || !std::isfinite(ppl))
        throw NumericError("credibility: perplexity must be finite and >= 0");
    if (cfg.credibility_mode == CredibilityMode::raw) return std::exp(-ppl);
    if (cfg.ppl_ref <= 0.0) throw ConfigError("ppl_ref must be positive in scaled mode");
    return std::exp(-ppl / cfg.ppl_ref);
}

FlowGraph build_flow_graph(const std::vector<Message>& round_messages,
                           const Matrix& prev_semantics, const FlowConfig& cfg, int n_agents,
                           int round) {
    const size_t d = prev_semantics.cols();

    // Round state per sender: the last message wins, both for the embedding
    // the edges use and for the agent-level credibility.
    std::map<int, const Message*> latest;
    for (const auto& m : round_messages) {
        if (m.sender < 0 || m.sender >= n_agents)
            throw SchemaError("build_flow_graph: sender id out of roster");
        latest[m.sender] = &m;
    }

    auto row_is_zero = [&](int j) {
        const double* r = prev_semantics.row(j);
        for (size_t k = 0; k < d; ++k) {
            if (r[k] != 0.0) return false;
        }
        return true;
    };

    std::map<std::pair<int, int>, FlowEdge> edges;
    for (const auto& m : round_messages) {
        const Message* src_msg = latest[m.sender];
        const double chi = credibility(src_msg->perplexity, cfg);
        for (int j : m.recipients) {
            if (j < 0 || j >= n_agents)
                throw SchemaError("build_flow_graph: recipient id out of roster");
            if (j == m.sender) continue;   // no self-loops
            if (row_is_zero(j)) continue;  // recipient never active: cosine undefined
            const double tau =
                transmissibility(src_msg->embedding.data(), prev_semantics.row(j), d);
            const double w = std::max(0.0, tau) * chi;
            if (w <= cfg.prune_threshold) continue;
            edges[{m.sender, j}] = FlowEdge{m.sender, j, tau, chi, w};
        }
    }

    FlowGraph g;
    g.n_nodes = n_agents;
    g.round = round;
    g.edges.reserve(edges.size());
    for (auto& [key, e] : edges) g.edges.push_back(e);  // map order == (src, dst) order
    return g;
}

std::vector<SystemState> build_states(const Trajectory& traj, const FlowConfig& cfg) {
    const CarriedSemantics cs = carried_semantics(traj);
    const int n = traj.n_agents();
    const int T = traj.n_rounds();

    std::vector<SystemState> states;
    states.reserve(T);
    for (int t = 0; t < T; ++t) {
        SystemState st;
        st.round = t;
        st.semantics = cs.per_round[t];
        st.active = cs.active[t];
        if (t == 0) {
            st.graph.n_nodes = n;
            st.graph.round = 0;
        } else {
            st.graph = build_flow_graph(traj.rounds[t], cs.per_round[t - 1], cfg, n, t);
        }
        states.push_back(std::move(st));
    }
    return states;
}

}  // namespace flowaudit
