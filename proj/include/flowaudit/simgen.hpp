#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "flowaudit/trajectory.hpp"

namespace flowaudit {

// Seeded synthetic generator for normal and risk trajectories. Normal
// interaction is hub-and-team routing with a smoothly varying collaboration
// intensity; risk archetypes perturb routing and embeddings after t_start
// and annotate the later semantic onset t_sem. Pre-onset rounds share the
// normal code path and random streams, so a risk scenario whose t_start is
// pushed past the horizon reproduces the normal trajectory bit for bit.

enum class StressorKind { memory_limit, response_delay, paraphrase_noise, role_overload };

std::string to_string(StressorKind k);
StressorKind stressor_kind_from_string(const std::string& s);

struct ScenarioConfig {
    int n_agents = 14;     // roster size, 12..15
    int n_rounds = 40;
    int d = 16;
    Archetype archetype = Archetype::normal;
    std::optional<StressorKind> stressor_kind;
    bool dense_collab = false;  // normal variant with dense benign episodes
    int t_start = 14;           // structural onset (risk archetypes)
    int sem_onset_lag = 6;      // rounds from structural onset to semantic onset
    double noise_scale = 0.05;
    uint64_t seed = 0;          // per-trajectory stream
    uint64_t cohort_seed = 0;   // shared role anchors / held-out directions
    std::string traj_id = "traj";
};

// Default semantic-onset lags per archetype (echo 6, cascade 7, role 4).
int default_sem_onset_lag(Archetype a);

struct GeneratedTrajectory {
    Trajectory traj;
    std::vector<int> focus_agents;                   // clique / chain / violator+peer
    std::vector<std::pair<int, int>> dense_windows;  // [start, end) benign dense episodes
    std::vector<std::pair<int, int>> chain_edges;    // cascade tree, parent -> child
    std::optional<StressorKind> stressor_kind;
};

GeneratedTrajectory generate(const ScenarioConfig& cfg);

GeneratedTrajectory generate_normal(ScenarioConfig cfg);
GeneratedTrajectory generate_echo_chamber(ScenarioConfig cfg);
GeneratedTrajectory generate_hallucination_cascade(ScenarioConfig cfg);
GeneratedTrajectory generate_role_violation(ScenarioConfig cfg);
GeneratedTrajectory generate_stressor(ScenarioConfig cfg);

// Role anchors shared by every trajectory of one cohort.
struct RoleAnchor {
    int agent = 0;
    std::vector<double> anchor;  // unit norm
    double drift_rate = 0.0;
};

struct Cohort {
    std::vector<std::string> names;          // coord, w01, w02, ...
    std::vector<RoleAnchor> anchors;
    std::vector<double> task_dir;            // shared task direction
    std::vector<double> violation_dir;       // held-out, orthogonal to task_dir
    std::vector<double> hallucination_dir;
};

Cohort make_cohort(uint64_t cohort_seed, int d, int max_agents);

// --- corpus ---------------------------------------------------------------------

struct CorpusCounts {
    int normal = 140;
    int dense_normal = 60;
    int echo_chamber = 50;
    int hallucination_cascade = 50;
    int role_violation = 50;
    int stressor = 50;
};

struct CorpusEntry {
    GeneratedTrajectory gen;
    std::string role;  // train | cal | test
};

// Deterministic stratified corpus; per-trajectory seeds derive from
// base_seed, normals split train/cal/test 50/25/25, risks all test.
std::vector<CorpusEntry> generate_corpus(const CorpusCounts& counts, uint64_t base_seed,
                                         const ScenarioConfig& base);

std::string manifest_to_json(const std::vector<CorpusEntry>& corpus,
                             const std::vector<std::string>& file_names, uint64_t base_seed,
                             int dim);

}  // namespace flowaudit
