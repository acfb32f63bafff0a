#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flowaudit/graph.hpp"
#include "flowaudit/matrix.hpp"

namespace flowaudit {

// Canonical trajectory data model. Embeddings and perplexities arrive
// precomputed; this module never touches raw text beyond storing it.

struct AgentId {
    int id = 0;
    std::string name;
};

struct Message {
    int sender = 0;
    std::vector<int> recipients;
    int round = 0;
    std::optional<std::string> text;
    std::vector<double> embedding;
    double perplexity = 0.0;
};

enum class Label { normal, risk };

enum class Archetype {
    normal,
    echo_chamber,
    hallucination_cascade,
    role_violation,
    stressor,
};

std::string to_string(Label l);
std::string to_string(Archetype a);
Label label_from_string(const std::string& s);
Archetype archetype_from_string(const std::string& s);

struct RiskAnnotations {
    int t_start = 0;
    int t_sem = 0;
    Archetype archetype = Archetype::normal;
    std::optional<std::string> instigator;  // ground-truth initiating agent, if any
};

// One interaction round: flow graph plus per-agent semantic rows. Rows of
// agents inactive this round carry forward their most recent value; agents
// never active so far hold the zero vector.
struct SystemState {
    int round = 0;
    FlowGraph graph;
    Matrix semantics;              // n_agents x dim
    std::vector<uint8_t> active;   // spoke this round
};

struct Trajectory {
    std::string id;
    std::vector<std::string> agents;           // roster; agent id == index
    int dim = 0;
    Label label = Label::normal;
    std::optional<RiskAnnotations> risk;
    std::vector<std::vector<Message>> rounds;   // rounds[t] = messages at round t

    int n_agents() const { return static_cast<int>(agents.size()); }
    int n_rounds() const { return static_cast<int>(rounds.size()); }

    int agent_index(const std::string& name) const;  // -1 when unknown

    // Throws SchemaError when a type invariant is violated.
    void validate() const;
};

// Line-delimited JSON: one header object, then one object per message.
Trajectory load_trajectory(const std::string& path);
void save_trajectory(const Trajectory& traj, const std::string& path);

// Per-round carried-forward semantics and activity flags. Row i at round t
// is the embedding of agent i's latest message at any round <= t (zero if
// the agent has not spoken yet). Within one round the agent's last message
// wins.
struct CarriedSemantics {
    std::vector<Matrix> per_round;                // one n_agents x dim matrix per round
    std::vector<std::vector<uint8_t>> active;     // per round, per agent
    std::vector<std::vector<double>> perplexity;  // latest-message ppl for active agents
};

CarriedSemantics carried_semantics(const Trajectory& traj);

// Fills inactive agents' semantic rows from the most recent active row.
// Idempotent; agents never active up to a round hold the zero vector.
std::vector<SystemState> carry_forward(std::vector<SystemState> states);

}  // namespace flowaudit
