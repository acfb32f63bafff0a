#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flowaudit/audit.hpp"
#include "flowaudit/dynamics.hpp"
#include "flowaudit/geometry.hpp"
#include "flowaudit/metrics.hpp"
#include "flowaudit/simgen.hpp"
#include "flowaudit/trajectory.hpp"

namespace flowaudit {

// Benchmarks the consistency detector against semantic-only and ORC-only
// baselines, plus the ablated variants, on a generated corpus.

enum class Method {
    consistency,
    semantic_only,
    orc_only,
    no_coupling,
    no_semantic,
    no_curvature,
};

std::string to_string(Method m);

// Normal-regime reference statistics fitted on the training normals:
// per-agent anchor embeddings for the semantic baseline and global
// curvature statistics for the ORC baseline.
struct NormalStats {
    std::map<std::string, std::vector<double>> anchors;
    std::vector<double> global_anchor;
    CurvatureBaseline curvature;
    int dim = 0;
};

// A trajectory with its derived states and curvature fields plus the
// generator metadata the harness needs.
struct PreparedTrajectory {
    Trajectory traj;
    std::vector<SystemState> states;
    std::vector<CurvatureField> fields;
    std::string role;  // train | cal | test
    std::vector<std::pair<int, int>> dense_windows;
    std::optional<StressorKind> stressor_kind;
    std::vector<int> focus_agents;
};

PreparedTrajectory prepare_trajectory(Trajectory traj, const FlowConfig& flow,
                                      const GeometryConfig& geo);

NormalStats fit_normal_stats(const std::vector<const PreparedTrajectory*>& train);

// score(t) = mean over active agents of the distance between the agent's
// round embedding and its anchor (global anchor for unseen agents).
std::vector<double> semantic_only_score(const PreparedTrajectory& pt, const NormalStats& stats);

// score(t) = mean |kappa - baseline mean| over the round's edges.
std::vector<double> orc_only_score(const PreparedTrajectory& pt, const NormalStats& stats);

// Per-round scores of any method (predictor passes share work via traces).
struct MethodScores {
    std::map<Method, std::vector<double>> per_round;
};

MethodScores score_all_methods(const PreparedTrajectory& pt, const PredictorParams& full,
                               const PredictorParams& uncoupled, const NormalStats& stats,
                               double lambda);

// --- event-aligned time-lag analysis -----------------------------------------

struct TimeLagCurve {
    std::vector<int> offsets;         // -T .. +T
    std::vector<double> delta_kappa;  // mean normalized curvature deviation
    std::vector<double> r_sem;        // mean normalized semantic signal
    std::vector<int> counts;          // trajectories contributing per offset
};

struct AlignedSeries {
    std::vector<double> delta_kappa;
    std::vector<double> r_sem;
    int t_sem = 0;
};

// Aligns each trajectory at its semantic onset (offset 0), min-max
// normalizes per trajectory, and aggregates with count weighting. Rejects
// entries without a semantic onset.
TimeLagCurve timelag_analysis(const std::vector<AlignedSeries>& entries, int window);

// First offset whose value exceeds mean + 3*stddev of the first
// `baseline_len` offsets (count-weighted means are already folded in).
std::optional<int> crossing_offset(const std::vector<int>& offsets,
                                   const std::vector<double>& curve, int baseline_len);

// --- benchmark ----------------------------------------------------------------

struct BenchmarkConfig {
    double percentile = 95.0;
    int timelag_window = 12;
    int attribution_halfwidth = 2;
    double audit_lambda = -1.0;  // < 0: reuse the training lambda
};

struct MethodRow {
    Method method = Method::consistency;
    MetricSet attack;    // echo + cascade + role-violation vs test normals
    MetricSet stressor;  // stressor corpus vs test normals
    double dense_fpr = 0.0;
};

struct BenchmarkResults {
    std::vector<MethodRow> table1;           // consistency + baselines
    std::vector<MethodRow> table3;           // consistency + ablations
    std::map<Method, double> thresholds;
    std::map<std::string, TimeLagCurve> timelag;  // per risk archetype
};

BenchmarkResults run_benchmark(const std::vector<PreparedTrajectory>& corpus,
                               const PredictorParams& full, const PredictorParams& uncoupled,
                               const NormalStats& stats, const BenchmarkConfig& cfg);

// --- full pipeline -------------------------------------------------------------

struct PipelineConfig {
    CorpusCounts counts;
    uint64_t seed = 1;
    ScenarioConfig scenario;  // n_rounds, d, noise_scale defaults
    FlowConfig flow;
    GeometryConfig geometry;
    Hyper hyper;
    BenchmarkConfig bench;
};

struct PipelineResult {
    std::vector<PreparedTrajectory> corpus;
    NormalStats stats;
    PredictorParams full_params;
    PredictorParams uncoupled_params;
    BenchmarkResults results;
};

// gen -> curvature -> train -> calibrate -> score -> metrics, all in memory.
PipelineResult run_pipeline(const PipelineConfig& cfg);

// CSV emitters mirroring the result tables.
void write_benchmark_csv(const BenchmarkResults& results, const std::string& table1_path,
                         const std::string& table2_path, const std::string& table3_path);
void write_timelag_csv(const TimeLagCurve& curve, const std::string& path);

// --- corpus and model files -----------------------------------------------------

// One .traj.jsonl per trajectory under <dir>/trajectories plus a
// manifest.json with roles and generator metadata.
void save_corpus(const std::vector<CorpusEntry>& corpus, const std::string& dir,
                 uint64_t base_seed);

struct CorpusFileEntry {
    Trajectory traj;
    std::string role;
    std::vector<std::pair<int, int>> dense_windows;
    std::optional<StressorKind> stressor_kind;
};

std::vector<CorpusFileEntry> load_corpus(const std::string& dir);

std::string stats_to_json(const NormalStats& stats);
NormalStats stats_from_json(const std::string& text);

}  // namespace flowaudit
