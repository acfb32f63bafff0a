#include "flowaudit/audit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "flowaudit/errors.hpp"
#include "flowaudit/io_util.hpp"
#include "flowaudit/kernels.hpp"

namespace flowaudit {

double AnomalyTrace::max_score() const {
    double m = 0.0;
    for (double s : scores) m = std::max(m, s);
    return m;
}

AnomalyTrace anomaly_score(const PredictorParams& params, const std::vector<SystemState>& states,
                           const std::vector<CurvatureField>& fields, double lambda,
                           CouplingMode mode, const std::string& traj_id, ScoreDetail* detail) {
    if (states.size() != fields.size())
        throw ContractError("anomaly_score: states/curvature misalignment");
    const int T = static_cast<int>(states.size());
    const int N = T > 0 ? static_cast<int>(states.front().active.size()) : 0;

    AnomalyTrace trace;
    trace.traj_id = traj_id;
    trace.lambda = lambda;
    trace.scores.assign(T, 0.0);
    trace.semantic_part.assign(T, 0.0);
    trace.geometric_part.assign(T, 0.0);
    if (detail) {
        detail->edge_residuals.assign(T, {});
        detail->agent_residuals.assign(T, std::vector<double>(N, 0.0));
    }
    if (T == 0) return trace;

    const SequenceData seq = build_sequence(states, fields, mode);
    GruState gru = make_gru_state(params, N);
    const int d = params.hyper.d;

    for (int t = 0; t + 1 < T; ++t) {
        const StepInput& step = seq.steps[t];
        const Matrix yhat = semantic_step(params, step, gru);

        double sem = 0.0;
        for (int i = 0; i < N; ++i) {
            const double err = kernels::l2sq_diff(yhat.row(i), step.target_y.row(i), d);
            sem += err;
            if (detail) detail->agent_residuals[t + 1][i] = err;
        }

        double geo = 0.0;
        int scored = 0;
        for (const auto& edge : step.edges) {
            if (!edge.scored) continue;
            const double khat = mlp_forward(params, edge.features);
            const double r = std::abs(edge.kappa_next - khat);
            geo += r;
            ++scored;
            if (detail) detail->edge_residuals[t + 1].push_back({{edge.src, edge.dst}, r});
        }

        // Per-agent / per-edge means keep the score comparable across rounds
        // with different activity and edge counts.
        trace.semantic_part[t + 1] = sem / static_cast<double>(std::max(1, N));
        trace.geometric_part[t + 1] = scored > 0 ? geo / scored : 0.0;
        trace.scores[t + 1] =
            trace.semantic_part[t + 1] + lambda * trace.geometric_part[t + 1];
        if (!std::isfinite(trace.scores[t + 1]))
            throw NumericError("anomaly_score: non-finite score at round " + std::to_string(t + 1));
    }
    return trace;
}

double calibrate_threshold(const std::vector<AnomalyTrace>& normal_traces, double percentile) {
    if (!(percentile > 0.0) || percentile > 100.0)
        throw ConfigError("calibration percentile must be in (0, 100]");
    std::vector<double> pool;
    for (const auto& trace : normal_traces) {
        pool.insert(pool.end(), trace.scores.begin(), trace.scores.end());
    }
    if (pool.empty()) throw NumericError("calibrate_threshold: empty score pool");
    std::sort(pool.begin(), pool.end());
    // Nearest-rank: the ceil(p/100 * N)-th smallest value.
    const size_t rank = static_cast<size_t>(
        std::ceil(percentile / 100.0 * static_cast<double>(pool.size())));
    return pool[std::max<size_t>(1, rank) - 1];
}

std::optional<int> detect(const AnomalyTrace& trace, double threshold, int t_start) {
    for (int t = std::max(0, t_start); t < static_cast<int>(trace.scores.size()); ++t) {
        if (trace.scores[t] >= threshold) return t;
    }
    return std::nullopt;
}

int detection_lead_time(int t_alarm, int t_sem) { return t_sem - t_alarm; }

Attribution attribute(const ScoreDetail& detail, int t_alarm, int halfwidth, int n_agents) {
    const int T = static_cast<int>(detail.edge_residuals.size());
    const int lo = std::max(1, t_alarm - halfwidth);  // round 0 is never scored
    const int hi = std::min(T - 1, t_alarm);

    std::map<std::pair<int, int>, std::pair<double, int>> edge_acc;  // sum, count
    std::vector<double> agent_sem(n_agents, 0.0);
    int rounds = 0;
    for (int t = lo; t <= hi; ++t) {
        for (const auto& [key, r] : detail.edge_residuals[t]) {
            auto& acc = edge_acc[key];
            acc.first += r;
            acc.second += 1;
        }
        for (int i = 0; i < n_agents; ++i) agent_sem[i] += detail.agent_residuals[t][i];
        ++rounds;
    }

    Attribution result;
    std::vector<double> agent_score(n_agents, 0.0);
    for (const auto& [key, acc] : edge_acc) {
        const double mean_r = acc.first / static_cast<double>(acc.second);
        result.edges.push_back({key.first, key.second, mean_r});
        agent_score[key.first] += mean_r;
        agent_score[key.second] += mean_r;
    }
    for (int i = 0; i < n_agents; ++i) {
        agent_score[i] += rounds > 0 ? agent_sem[i] / static_cast<double>(rounds) : 0.0;
        result.agents.push_back({i, agent_score[i]});
    }

    std::stable_sort(result.edges.begin(), result.edges.end(),
                     [](const EdgeResidual& a, const EdgeResidual& b) {
                         if (a.residual != b.residual) return a.residual > b.residual;
                         return std::pair{a.src, a.dst} < std::pair{b.src, b.dst};
                     });
    std::stable_sort(result.agents.begin(), result.agents.end(),
                     [](const AgentResidual& a, const AgentResidual& b) {
                         if (a.residual != b.residual) return a.residual > b.residual;
                         return a.agent < b.agent;
                     });
    return result;
}

AuditReport audit_trajectory(const PredictorParams& params, const Trajectory& traj,
                             const std::vector<SystemState>& states,
                             const std::vector<CurvatureField>& fields, double lambda,
                             double threshold, CouplingMode mode, int attribution_halfwidth) {
    AuditReport report;
    report.trajectory_id = traj.id;
    report.label = traj.label;
    if (traj.risk) {
        report.t_start = traj.risk->t_start;
        report.t_sem = traj.risk->t_sem;
    }

    ScoreDetail detail;
    report.trace = anomaly_score(params, states, fields, lambda, mode, traj.id, &detail);
    report.trace.threshold = threshold;
    report.trace.t_alarm = detect(report.trace, threshold, report.t_start.value_or(0));

    if (report.trace.t_alarm && report.t_sem) {
        report.dlt = detection_lead_time(*report.trace.t_alarm, *report.t_sem);
    }
    if (report.trace.t_alarm) {
        report.attribution =
            attribute(detail, *report.trace.t_alarm, attribution_halfwidth, traj.n_agents());
    }
    return report;
}

std::string report_to_json(const AuditReport& report, const std::vector<std::string>& agents) {
    nlohmann::ordered_json j;
    j["traj_id"] = report.trajectory_id;
    j["label"] = to_string(report.label);
    if (report.t_start) j["t_start"] = *report.t_start;
    if (report.t_sem) j["t_sem"] = *report.t_sem;
    j["lambda"] = report.trace.lambda;
    j["threshold"] = report.trace.threshold;
    j["scores"] = report.trace.scores;
    j["semantic_part"] = report.trace.semantic_part;
    j["geometric_part"] = report.trace.geometric_part;
    j["max_score"] = report.trace.max_score();
    if (report.trace.t_alarm) j["t_alarm"] = *report.trace.t_alarm;
    if (report.dlt) j["dlt"] = *report.dlt;

    nlohmann::ordered_json edges = nlohmann::ordered_json::array();
    for (const auto& e : report.attribution.edges) {
        edges.push_back({{"src", agents[e.src]}, {"dst", agents[e.dst]}, {"residual", e.residual}});
    }
    j["attributed_edges"] = edges;
    nlohmann::ordered_json ag = nlohmann::ordered_json::array();
    for (const auto& a : report.attribution.agents) {
        ag.push_back({{"agent", agents[a.agent]}, {"residual", a.residual}});
    }
    j["attributed_agents"] = ag;
    return j.dump();
}

void write_summary_csv(const std::vector<AuditReport>& reports, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "traj_id,label,t_start,t_sem,t_alarm,dlt,max_score\n";
    auto opt = [](const std::optional<int>& v) {
        return v ? std::to_string(*v) : std::string();
    };
    for (const auto& r : reports) {
        out << r.trajectory_id << ',' << to_string(r.label) << ',' << opt(r.t_start) << ','
            << opt(r.t_sem) << ',' << opt(r.trace.t_alarm) << ',' << opt(r.dlt) << ','
            << format_double(r.trace.max_score()) << '\n';
    }
}

}  // namespace flowaudit
