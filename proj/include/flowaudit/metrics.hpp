#pragma once

#include <optional>
#include <string>
#include <vector>

namespace flowaudit {

// Per-trajectory output of one detector.
struct TrajectoryScore {
    std::string traj_id;
    bool positive = false;  // ground-truth risk label
    double max_score = 0.0;
    std::optional<int> t_alarm;
    std::optional<int> dlt;
};

struct MetricSet {
    double auroc = 0.0;
    double auprc = 0.0;
    double f1 = 0.0;
    double fpr = 0.0;        // trajectory-level false alarms at the threshold
    double mean_dlt = 0.0;   // over detected risk trajectories
    double miss_rate = 0.0;  // risk trajectories with no alarm
    int n_pos = 0;
    int n_neg = 0;
};

// Rank-statistic AUROC with tie correction. Requires at least one
// positive and one negative; throws NumericError otherwise.
double auroc(const std::vector<double>& scores, const std::vector<bool>& labels);

// Average precision with step interpolation over descending score cuts.
double auprc(const std::vector<double>& scores, const std::vector<bool>& labels);

MetricSet compute_metrics(const std::vector<TrajectoryScore>& outputs, double threshold);

// Round-level false-positive rate inside designated benign windows.
double window_fpr(const std::vector<std::vector<double>>& per_round_scores,
                  const std::vector<std::vector<std::pair<int, int>>>& windows, double threshold);

}  // namespace flowaudit
