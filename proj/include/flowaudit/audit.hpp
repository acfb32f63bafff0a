#pragma once

#include <optional>
#include <string>
#include <vector>

#include "flowaudit/dynamics.hpp"
#include "flowaudit/geometry.hpp"
#include "flowaudit/trajectory.hpp"

namespace flowaudit {

// Per-round anomaly scores for one trajectory. scores[t] =
// semantic_part[t] + lambda * geometric_part[t]; round 0 carries no
// prediction and scores 0.
struct AnomalyTrace {
    std::string traj_id;
    std::vector<double> scores;
    std::vector<double> semantic_part;
    std::vector<double> geometric_part;
    double lambda = 1.0;
    double threshold = 0.0;
    std::optional<int> t_alarm;

    double max_score() const;
};

// Residual detail kept for attribution: per-round per-edge |kappa - khat|
// and per-round per-agent squared semantic error.
struct ScoreDetail {
    std::vector<std::vector<std::pair<std::pair<int, int>, double>>> edge_residuals;
    std::vector<std::vector<double>> agent_residuals;  // [round][agent]
};

AnomalyTrace anomaly_score(const PredictorParams& params, const std::vector<SystemState>& states,
                           const std::vector<CurvatureField>& fields, double lambda,
                           CouplingMode mode, const std::string& traj_id,
                           ScoreDetail* detail = nullptr);

// Nearest-rank percentile of all pooled per-round scores; percentile in
// (0, 100].
double calibrate_threshold(const std::vector<AnomalyTrace>& normal_traces, double percentile);

// First round >= t_start whose score reaches the threshold. Crossings
// before t_start are not alarms.
std::optional<int> detect(const AnomalyTrace& trace, double threshold, int t_start);

// t_sem - t_alarm; negative when the alarm arrives after the semantic
// manifestation.
int detection_lead_time(int t_alarm, int t_sem);

struct EdgeResidual {
    int src = 0;
    int dst = 0;
    double residual = 0.0;
};

struct AgentResidual {
    int agent = 0;
    double residual = 0.0;
};

struct Attribution {
    std::vector<EdgeResidual> edges;    // descending residual, ties by (src, dst)
    std::vector<AgentResidual> agents;  // descending, ties by agent id
};

// Edges ranked by mean |kappa - khat| over rounds [t_alarm - halfwidth,
// t_alarm]; agents by the sum of incident edge residuals plus their own
// mean squared semantic residual over the window.
Attribution attribute(const ScoreDetail& detail, int t_alarm, int halfwidth, int n_agents);

struct AuditReport {
    std::string trajectory_id;
    Label label = Label::normal;
    std::optional<int> t_start;
    std::optional<int> t_sem;
    AnomalyTrace trace;
    std::optional<int> dlt;
    Attribution attribution;
};

// Full audit of one trajectory against a trained predictor and a
// calibrated threshold. For normal trajectories detection starts at round 0.
AuditReport audit_trajectory(const PredictorParams& params, const Trajectory& traj,
                             const std::vector<SystemState>& states,
                             const std::vector<CurvatureField>& fields, double lambda,
                             double threshold, CouplingMode mode, int attribution_halfwidth);

std::string report_to_json(const AuditReport& report, const std::vector<std::string>& agents);

// Summary CSV: traj_id,label,t_start,t_sem,t_alarm,dlt,max_score
void write_summary_csv(const std::vector<AuditReport>& reports, const std::string& path);

}  // namespace flowaudit
