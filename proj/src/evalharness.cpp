#include "flowaudit/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "flowaudit/errors.hpp"
#include "flowaudit/io_util.hpp"
#include "flowaudit/kernels.hpp"
#include "flowaudit/rng.hpp"

namespace flowaudit {

std::string to_string(Method m) {
    switch (m) {
        case Method::consistency: return "consistency";
        case Method::semantic_only: return "semantic_only";
        case Method::orc_only: return "orc_only";
        case Method::no_coupling: return "no_coupling";
        case Method::no_semantic: return "no_semantic";
        case Method::no_curvature: return "no_curvature";
    }
    return "consistency";
}

PreparedTrajectory prepare_trajectory(Trajectory traj, const FlowConfig& flow,
                                      const GeometryConfig& geo) {
    PreparedTrajectory pt;
    pt.states = build_states(traj, flow);
    std::vector<FlowGraph> graphs;
    graphs.reserve(pt.states.size());
    for (const auto& st : pt.states) graphs.push_back(st.graph);
    pt.fields = curvature_field(graphs, geo);
    pt.traj = std::move(traj);
    return pt;
}

NormalStats fit_normal_stats(const std::vector<const PreparedTrajectory*>& train) {
    if (train.empty()) throw ContractError("fit_normal_stats: empty training set");
    NormalStats stats;
    stats.dim = train.front()->traj.dim;

    std::map<std::string, std::pair<std::vector<double>, int64_t>> acc;
    std::vector<double> global(stats.dim, 0.0);
    int64_t global_count = 0;
    CurvatureBaselineAccumulator curvature;

    for (const PreparedTrajectory* pt : train) {
        curvature.add(pt->fields);
        for (const auto& st : pt->states) {
            for (int i = 0; i < static_cast<int>(st.active.size()); ++i) {
                if (!st.active[i]) continue;
                auto& [sum, count] = acc[pt->traj.agents[i]];
                if (sum.empty()) sum.assign(stats.dim, 0.0);
                for (int k = 0; k < stats.dim; ++k) sum[k] += st.semantics(i, k);
                ++count;
                for (int k = 0; k < stats.dim; ++k) global[k] += st.semantics(i, k);
                ++global_count;
            }
        }
    }
    for (auto& [name, sc] : acc) {
        auto& [sum, count] = sc;
        for (double& v : sum) v /= static_cast<double>(count);
        stats.anchors[name] = sum;
    }
    for (double& v : global) v /= static_cast<double>(std::max<int64_t>(1, global_count));
    stats.global_anchor = global;
    stats.curvature = curvature.finish();
    return stats;
}

std::vector<double> semantic_only_score(const PreparedTrajectory& pt, const NormalStats& stats) {
    std::vector<double> scores;
    scores.reserve(pt.states.size());
    for (const auto& st : pt.states) {
        double sum = 0.0;
        int active = 0;
        for (int i = 0; i < static_cast<int>(st.active.size()); ++i) {
            if (!st.active[i]) continue;
            auto it = stats.anchors.find(pt.traj.agents[i]);
            const std::vector<double>& anchor =
                it != stats.anchors.end() ? it->second : stats.global_anchor;
            sum += std::sqrt(kernels::l2sq_diff(st.semantics.row(i), anchor.data(), stats.dim));
            ++active;
        }
        scores.push_back(active > 0 ? sum / active : 0.0);
    }
    return scores;
}

std::vector<double> orc_only_score(const PreparedTrajectory& pt, const NormalStats& stats) {
    return curvature_deviation(pt.fields, stats.curvature);
}

MethodScores score_all_methods(const PreparedTrajectory& pt, const PredictorParams& full,
                               const PredictorParams& uncoupled, const NormalStats& stats,
                               double lambda) {
    MethodScores out;
    const AnomalyTrace full_trace = anomaly_score(full, pt.states, pt.fields, lambda,
                                                  CouplingMode::full, pt.traj.id);
    const AnomalyTrace unc_trace = anomaly_score(uncoupled, pt.states, pt.fields, lambda,
                                                 CouplingMode::uncoupled, pt.traj.id);
    out.per_round[Method::consistency] = full_trace.scores;
    out.per_round[Method::no_semantic] = full_trace.geometric_part;
    out.per_round[Method::no_curvature] = full_trace.semantic_part;
    out.per_round[Method::no_coupling] = unc_trace.scores;
    out.per_round[Method::semantic_only] = semantic_only_score(pt, stats);
    out.per_round[Method::orc_only] = orc_only_score(pt, stats);
    return out;
}

// --- time lag -------------------------------------------------------------------

namespace {

std::vector<double> minmax_normalize(std::vector<double> v) {
    if (v.empty()) return v;
    const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
    const double lo = *lo_it, hi = *hi_it;
    if (hi - lo <= 0.0) {
        std::fill(v.begin(), v.end(), 0.0);
        return v;
    }
    for (double& x : v) x = (x - lo) / (hi - lo);
    return v;
}

}  // namespace

TimeLagCurve timelag_analysis(const std::vector<AlignedSeries>& entries, int window) {
    if (entries.empty()) throw ContractError("timelag_analysis: no aligned trajectories");
    TimeLagCurve curve;
    const int span = 2 * window + 1;
    curve.offsets.resize(span);
    std::iota(curve.offsets.begin(), curve.offsets.end(), -window);
    curve.delta_kappa.assign(span, 0.0);
    curve.r_sem.assign(span, 0.0);
    curve.counts.assign(span, 0);

    for (const auto& entry : entries) {
        const std::vector<double> dk = minmax_normalize(entry.delta_kappa);
        const std::vector<double> rs = minmax_normalize(entry.r_sem);
        for (int o = -window; o <= window; ++o) {
            const int t = entry.t_sem + o;
            if (t < 0 || t >= static_cast<int>(dk.size())) continue;
            const int slot = o + window;
            curve.delta_kappa[slot] += dk[t];
            curve.r_sem[slot] += rs[t];
            curve.counts[slot] += 1;
        }
    }
    for (int s = 0; s < span; ++s) {
        if (curve.counts[s] > 0) {
            curve.delta_kappa[s] /= curve.counts[s];
            curve.r_sem[s] /= curve.counts[s];
        }
    }
    return curve;
}

std::optional<int> crossing_offset(const std::vector<int>& offsets,
                                   const std::vector<double>& curve, int baseline_len) {
    if (static_cast<int>(curve.size()) <= baseline_len || baseline_len < 2)
        throw ContractError("crossing_offset: baseline window too large or too small");
    double mean = 0.0, meansq = 0.0;
    for (int k = 0; k < baseline_len; ++k) {
        mean += curve[k];
        meansq += curve[k] * curve[k];
    }
    mean /= baseline_len;
    meansq /= baseline_len;
    const double sd = std::sqrt(std::max(0.0, meansq - mean * mean));
    const double gate = mean + 3.0 * sd;
    for (size_t k = baseline_len; k < curve.size(); ++k) {
        if (curve[k] > gate) return offsets[k];
    }
    return std::nullopt;
}

// --- benchmark --------------------------------------------------------------------

namespace {

bool is_attack(const PreparedTrajectory& pt) {
    return pt.traj.risk && (pt.traj.risk->archetype == Archetype::echo_chamber ||
                            pt.traj.risk->archetype == Archetype::hallucination_cascade ||
                            pt.traj.risk->archetype == Archetype::role_violation);
}

bool is_stressor(const PreparedTrajectory& pt) {
    return pt.traj.risk && pt.traj.risk->archetype == Archetype::stressor;
}

TrajectoryScore make_score(const PreparedTrajectory& pt, const std::vector<double>& scores,
                           double threshold) {
    TrajectoryScore out;
    out.traj_id = pt.traj.id;
    out.positive = pt.traj.label == Label::risk;
    out.max_score = scores.empty() ? 0.0 : *std::max_element(scores.begin(), scores.end());
    const int t_start = pt.traj.risk ? pt.traj.risk->t_start : 0;
    for (int t = std::max(0, t_start); t < static_cast<int>(scores.size()); ++t) {
        if (scores[t] >= threshold) {
            out.t_alarm = t;
            break;
        }
    }
    if (out.t_alarm && pt.traj.risk) {
        out.dlt = detection_lead_time(*out.t_alarm, pt.traj.risk->t_sem);
    }
    return out;
}

}  // namespace

BenchmarkResults run_benchmark(const std::vector<PreparedTrajectory>& corpus,
                               const PredictorParams& full, const PredictorParams& uncoupled,
                               const NormalStats& stats, const BenchmarkConfig& cfg) {
    const double lambda =
        cfg.audit_lambda >= 0.0 ? cfg.audit_lambda : full.hyper.lambda;

    // Per-trajectory per-method scores, computed once.
    std::vector<MethodScores> all_scores(corpus.size());
    for (size_t i = 0; i < corpus.size(); ++i) {
        all_scores[i] = score_all_methods(corpus[i], full, uncoupled, stats, lambda);
    }

    const Method methods[] = {Method::consistency,  Method::semantic_only, Method::orc_only,
                              Method::no_coupling,  Method::no_semantic,   Method::no_curvature};

    BenchmarkResults results;

    // Thresholds from the calibration normals.
    for (Method m : methods) {
        std::vector<double> pool;
        for (size_t i = 0; i < corpus.size(); ++i) {
            if (corpus[i].role != "cal" || corpus[i].traj.label != Label::normal) continue;
            const auto& s = all_scores[i].per_round.at(m);
            pool.insert(pool.end(), s.begin(), s.end());
        }
        if (pool.empty()) throw ContractError("run_benchmark: no calibration normals");
        std::sort(pool.begin(), pool.end());
        const size_t rank = static_cast<size_t>(
            std::ceil(cfg.percentile / 100.0 * static_cast<double>(pool.size())));
        results.thresholds[m] = pool[std::max<size_t>(1, rank) - 1];
    }

    // Metric tables.
    for (Method m : methods) {
        MethodRow row;
        row.method = m;
        const double thr = results.thresholds.at(m);

        std::vector<TrajectoryScore> attack_scores, stressor_scores;
        std::vector<std::vector<double>> dense_scores;
        std::vector<std::vector<std::pair<int, int>>> dense_windows;
        for (size_t i = 0; i < corpus.size(); ++i) {
            const auto& pt = corpus[i];
            if (pt.role != "test") continue;
            const auto& s = all_scores[i].per_round.at(m);
            if (pt.traj.label == Label::normal) {
                attack_scores.push_back(make_score(pt, s, thr));
                stressor_scores.push_back(make_score(pt, s, thr));
                if (!pt.dense_windows.empty()) {
                    dense_scores.push_back(s);
                    dense_windows.push_back(pt.dense_windows);
                }
            } else if (is_attack(pt)) {
                attack_scores.push_back(make_score(pt, s, thr));
            } else if (is_stressor(pt)) {
                stressor_scores.push_back(make_score(pt, s, thr));
            }
        }
        row.attack = compute_metrics(attack_scores, thr);
        row.stressor = compute_metrics(stressor_scores, thr);
        if (!dense_scores.empty()) {
            row.dense_fpr = window_fpr(dense_scores, dense_windows, thr);
        }

        if (m == Method::consistency || m == Method::semantic_only || m == Method::orc_only) {
            results.table1.push_back(row);
        }
        if (m == Method::consistency || m == Method::no_coupling || m == Method::no_semantic ||
            m == Method::no_curvature) {
            results.table3.push_back(row);
        }
    }

    // Event-aligned time lag per archetype over the attack corpus.
    const Archetype archetypes[] = {Archetype::echo_chamber, Archetype::hallucination_cascade,
                                    Archetype::role_violation};
    for (Archetype a : archetypes) {
        std::vector<AlignedSeries> entries;
        for (size_t i = 0; i < corpus.size(); ++i) {
            const auto& pt = corpus[i];
            if (pt.role != "test" || !pt.traj.risk || pt.traj.risk->archetype != a) continue;
            AlignedSeries series;
            series.delta_kappa = all_scores[i].per_round.at(Method::orc_only);
            series.r_sem = all_scores[i].per_round.at(Method::semantic_only);
            series.t_sem = pt.traj.risk->t_sem;
            entries.push_back(std::move(series));
        }
        if (!entries.empty()) {
            results.timelag[to_string(a)] = timelag_analysis(entries, cfg.timelag_window);
        }
    }
    return results;
}

PipelineResult run_pipeline(const PipelineConfig& cfg) {
    PipelineResult result;

    const auto corpus_entries = generate_corpus(cfg.counts, cfg.seed, cfg.scenario);
    result.corpus.reserve(corpus_entries.size());
    for (const auto& entry : corpus_entries) {
        PreparedTrajectory pt = prepare_trajectory(entry.gen.traj, cfg.flow, cfg.geometry);
        pt.role = entry.role;
        pt.dense_windows = entry.gen.dense_windows;
        pt.stressor_kind = entry.gen.stressor_kind;
        pt.focus_agents = entry.gen.focus_agents;
        result.corpus.push_back(std::move(pt));
    }

    std::vector<const PreparedTrajectory*> train_set;
    for (const auto& pt : result.corpus) {
        if (pt.role == "train" && pt.traj.label == Label::normal) train_set.push_back(&pt);
    }
    if (train_set.empty()) throw ContractError("run_pipeline: no training normals");
    result.stats = fit_normal_stats(train_set);

    Hyper hyper = cfg.hyper;
    hyper.d = cfg.scenario.d;
    hyper.kappa_clip_min = cfg.geometry.clip_min;
    hyper.kappa_clip_max = 1.0;
    hyper.seed = cfg.seed;

    std::vector<SequenceData> full_seqs, unc_seqs;
    for (const PreparedTrajectory* pt : train_set) {
        auto f = build_sequence(pt->states, pt->fields, CouplingMode::full);
        f.traj_id = pt->traj.id;
        full_seqs.push_back(std::move(f));
        auto u = build_sequence(pt->states, pt->fields, CouplingMode::uncoupled);
        u.traj_id = pt->traj.id;
        unc_seqs.push_back(std::move(u));
    }
    result.full_params = train(full_seqs, hyper).params;
    Hyper unc_hyper = hyper;
    unc_hyper.seed = child_seed(cfg.seed, "uncoupled-train");
    result.uncoupled_params = train(unc_seqs, unc_hyper).params;

    result.results = run_benchmark(result.corpus, result.full_params, result.uncoupled_params,
                                   result.stats, cfg.bench);
    return result;
}

// --- CSV -----------------------------------------------------------------------

void write_benchmark_csv(const BenchmarkResults& results, const std::string& table1_path,
                         const std::string& table2_path, const std::string& table3_path) {
    {
        std::ofstream out(table1_path, std::ios::binary);
        if (!out) throw IoError("cannot open for writing: " + table1_path);
        out << "method,auroc_attack,auprc_attack,f1_attack,mean_dlt_attack,miss_rate_attack,"
               "auroc_stressor,mean_dlt_stressor,threshold\n";
        for (const auto& row : results.table1) {
            out << to_string(row.method) << ',' << format_double(row.attack.auroc) << ','
                << format_double(row.attack.auprc) << ',' << format_double(row.attack.f1) << ','
                << format_double(row.attack.mean_dlt) << ','
                << format_double(row.attack.miss_rate) << ','
                << format_double(row.stressor.auroc) << ','
                << format_double(row.stressor.mean_dlt) << ','
                << format_double(results.thresholds.at(row.method)) << '\n';
        }
    }
    {
        std::ofstream out(table2_path, std::ios::binary);
        if (!out) throw IoError("cannot open for writing: " + table2_path);
        out << "method,fpr_dense_windows\n";
        for (const auto& row : results.table1) {
            out << to_string(row.method) << ',' << format_double(row.dense_fpr) << '\n';
        }
    }
    {
        std::ofstream out(table3_path, std::ios::binary);
        if (!out) throw IoError("cannot open for writing: " + table3_path);
        out << "variant,auroc_attack,mean_dlt_attack,miss_rate_attack\n";
        for (const auto& row : results.table3) {
            out << to_string(row.method) << ',' << format_double(row.attack.auroc) << ','
                << format_double(row.attack.mean_dlt) << ','
                << format_double(row.attack.miss_rate) << '\n';
        }
    }
}

void write_timelag_csv(const TimeLagCurve& curve, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "offset,delta_kappa,r_sem,count\n";
    for (size_t k = 0; k < curve.offsets.size(); ++k) {
        out << curve.offsets[k] << ',' << format_double(curve.delta_kappa[k]) << ','
            << format_double(curve.r_sem[k]) << ',' << curve.counts[k] << '\n';
    }
}

// --- corpus and model files --------------------------------------------------------

void save_corpus(const std::vector<CorpusEntry>& corpus, const std::string& dir,
                 uint64_t base_seed) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "trajectories");
    std::vector<std::string> files;
    files.reserve(corpus.size());
    for (const auto& entry : corpus) {
        const std::string rel = "trajectories/" + entry.gen.traj.id + ".traj.jsonl";
        save_trajectory(entry.gen.traj, (fs::path(dir) / rel).string());
        files.push_back(rel);
    }
    const int dim = corpus.empty() ? 0 : corpus.front().gen.traj.dim;
    std::ofstream out(fs::path(dir) / "manifest.json", std::ios::binary);
    if (!out) throw IoError("cannot write corpus manifest in " + dir);
    out << manifest_to_json(corpus, files, base_seed, dim) << '\n';
}

std::vector<CorpusFileEntry> load_corpus(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) throw IoError("missing manifest.json in " + dir);
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("manifest parse error: ") + e.what());
    }

    std::vector<CorpusFileEntry> entries;
    for (const auto& item : manifest.at("trajectories")) {
        CorpusFileEntry entry;
        entry.traj = load_trajectory((fs::path(dir) / item.at("file").get<std::string>()).string());
        entry.role = item.at("role").get<std::string>();
        if (item.contains("dense_windows")) {
            for (const auto& w : item["dense_windows"]) {
                entry.dense_windows.push_back({w[0].get<int>(), w[1].get<int>()});
            }
        }
        if (item.contains("stressor_kind")) {
            entry.stressor_kind = stressor_kind_from_string(item["stressor_kind"].get<std::string>());
        }
        entries.push_back(std::move(entry));
    }
    return entries;
}

std::string stats_to_json(const NormalStats& stats) {
    nlohmann::ordered_json j;
    j["format"] = 1;
    j["dim"] = stats.dim;
    nlohmann::ordered_json anchors;
    for (const auto& [name, v] : stats.anchors) anchors[name] = v;
    j["anchors"] = anchors;
    j["global_anchor"] = stats.global_anchor;
    j["curvature"] = {{"mean", stats.curvature.mean},
                      {"stddev", stats.curvature.stddev},
                      {"count", stats.curvature.count}};
    return j.dump();
}

NormalStats stats_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("stats parse error: ") + e.what());
    }
    NormalStats stats;
    stats.dim = j.at("dim").get<int>();
    for (const auto& [name, v] : j.at("anchors").items()) {
        stats.anchors[name] = v.get<std::vector<double>>();
    }
    stats.global_anchor = j.at("global_anchor").get<std::vector<double>>();
    stats.curvature.mean = j.at("curvature").at("mean").get<double>();
    stats.curvature.stddev = j.at("curvature").at("stddev").get<double>();
    stats.curvature.count = j.at("curvature").at("count").get<int64_t>();
    return stats;
}

}  // namespace flowaudit
