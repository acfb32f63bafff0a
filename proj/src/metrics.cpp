#include "flowaudit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowaudit/errors.hpp"

namespace flowaudit {

double auroc(const std::vector<double>& scores, const std::vector<bool>& labels) {
    if (scores.size() != labels.size()) throw ContractError("auroc: size mismatch");
    const size_t n = scores.size();
    size_t n_pos = 0;
    for (bool b : labels) n_pos += b;
    const size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw NumericError("auroc undefined: single-class input");

    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // Midranks for ties, then the Mann-Whitney statistic.
    std::vector<double> rank(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
        const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
        for (size_t k = i; k <= j; ++k) rank[idx[k]] = mid;
        i = j + 1;
    }
    double rank_sum_pos = 0.0;
    for (size_t k = 0; k < n; ++k) {
        if (labels[k]) rank_sum_pos += rank[k];
    }
    const double u = rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auprc(const std::vector<double>& scores, const std::vector<bool>& labels) {
    if (scores.size() != labels.size()) throw ContractError("auprc: size mismatch");
    const size_t n = scores.size();
    size_t n_pos = 0;
    for (bool b : labels) n_pos += b;
    if (n_pos == 0 || n_pos == n)
        throw NumericError("auprc undefined: single-class input");

    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](size_t a, size_t b) { return scores[a] > scores[b]; });

    // Step interpolation: AP = sum (R_k - R_{k-1}) * P_k at distinct cuts.
    double ap = 0.0;
    double prev_recall = 0.0;
    size_t tp = 0, fp = 0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
        for (size_t k = i; k <= j; ++k) {
            if (labels[idx[k]]) ++tp; else ++fp;
        }
        const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    return ap;
}

MetricSet compute_metrics(const std::vector<TrajectoryScore>& outputs, double threshold) {
    MetricSet m;
    std::vector<double> scores;
    std::vector<bool> labels;
    for (const auto& o : outputs) {
        scores.push_back(o.max_score);
        labels.push_back(o.positive);
        if (o.positive) ++m.n_pos; else ++m.n_neg;
    }
    m.auroc = auroc(scores, labels);
    m.auprc = auprc(scores, labels);

    size_t tp = 0, fp = 0, fn = 0;
    for (const auto& o : outputs) {
        const bool pred = o.max_score >= threshold;
        if (pred && o.positive) ++tp;
        if (pred && !o.positive) ++fp;
        if (!pred && o.positive) ++fn;
    }
    const double denom = 2.0 * tp + fp + fn;
    m.f1 = denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
    m.fpr = m.n_neg > 0 ? static_cast<double>(fp) / m.n_neg : 0.0;

    double dlt_sum = 0.0;
    int dlt_count = 0, missed = 0;
    for (const auto& o : outputs) {
        if (!o.positive) continue;
        if (!o.t_alarm) {
            ++missed;
            continue;
        }
        if (o.dlt) {
            dlt_sum += *o.dlt;
            ++dlt_count;
        }
    }
    m.mean_dlt = dlt_count > 0 ? dlt_sum / dlt_count : 0.0;
    m.miss_rate = m.n_pos > 0 ? static_cast<double>(missed) / m.n_pos : 0.0;
    return m;
}

double window_fpr(const std::vector<std::vector<double>>& per_round_scores,
                  const std::vector<std::vector<std::pair<int, int>>>& windows, double threshold) {
    if (per_round_scores.size() != windows.size())
        throw ContractError("window_fpr: size mismatch");
    int64_t alarms = 0, total = 0;
    for (size_t i = 0; i < windows.size(); ++i) {
        const auto& scores = per_round_scores[i];
        for (const auto& [a, b] : windows[i]) {
            for (int t = std::max(0, a); t < std::min<int>(b, scores.size()); ++t) {
                ++total;
                if (scores[t] >= threshold) ++alarms;
            }
        }
    }
    if (total == 0) throw NumericError("window_fpr: no window rounds");
    return static_cast<double>(alarms) / static_cast<double>(total);
}

}  // namespace flowaudit
