#pragma once

#include <string>
#include <vector>

#include "flowaudit/graph.hpp"
#include "flowaudit/matrix.hpp"
#include "flowaudit/trajectory.hpp"

namespace flowaudit {

enum class CredibilityMode { raw, scaled };

// Config keys mirror the JSON names: prune_threshold, credibility_mode, ppl_ref.
struct FlowConfig {
    double prune_threshold = 0.05;                      // of the max possible weight (1.0)
    CredibilityMode credibility_mode = CredibilityMode::scaled;
    double ppl_ref = 20.0;
};

// Cosine alignment between a sender's current embedding and the recipient's
// previous-round embedding. Throws NumericError on a zero vector; callers
// exclude never-active agents instead.
double transmissibility(const std::vector<double>& y_src, const std::vector<double>& y_dst_prev);
double transmissibility(const double* y_src, const double* y_dst_prev, size_t d);

// exp(-ppl) in raw mode, exp(-ppl / ppl_ref) in scaled mode. Always in (0, 1].
double credibility(double ppl, const FlowConfig& cfg);

// Induces the round graph from explicit (sender -> recipient) routing.
// One edge per ordered pair; weight = max(0, tau) * chi; edges with
// weight <= prune_threshold are dropped, as are edges whose recipient has
// never been active (zero row in prev_semantics).
FlowGraph build_flow_graph(const std::vector<Message>& round_messages,
                           const Matrix& prev_semantics, const FlowConfig& cfg, int n_agents,
                           int round);

// Materializes the full per-round state sequence of a trajectory:
// carried-forward semantics plus one flow graph per round. Round 0 has no
// previous semantics, so its graph is empty by construction.
std::vector<SystemState> build_states(const Trajectory& traj, const FlowConfig& cfg);

FlowConfig flow_config_defaults();
std::string to_string(CredibilityMode m);
CredibilityMode credibility_mode_from_string(const std::string& s);

}  // namespace flowaudit
