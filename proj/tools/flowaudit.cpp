// flowaudit: generate synthetic multi-agent trajectories, compute flow-graph
// curvature, train the coupled predictor, audit trajectories for cascading
// risk, and benchmark detectors. Every command is a pure function of its
// inputs and the resolved config; re-runs produce byte-identical outputs.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "flowaudit/audit.hpp"
#include "flowaudit/dynamics.hpp"
#include "flowaudit/errors.hpp"
#include "flowaudit/evalharness.hpp"
#include "flowaudit/geometry.hpp"
#include "flowaudit/io_util.hpp"
#include "flowaudit/rng.hpp"
#include "flowaudit/simgen.hpp"
#include "flowaudit/trajectory.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

using namespace flowaudit;

struct RunConfig {
    uint64_t seed = 1;
    int jobs = 1;
    bool quiet = false;
    FlowConfig flow;
    GeometryConfig geometry;
    Hyper hyper;
    double audit_percentile = 95.0;
    double audit_lambda = -1.0;
    int attribution_halfwidth = 2;
    ScenarioConfig scenario;
    CorpusCounts counts;
    int timelag_window = 12;
};

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

RunConfig load_config(const std::string& path) {
    RunConfig cfg;
    if (path.empty()) return cfg;
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("config parse error: ") + e.what());
    }
    maybe(j, "seed", cfg.seed);
    maybe(j, "jobs", cfg.jobs);
    if (j.contains("flow")) {
        const auto& f = j["flow"];
        maybe(f, "prune_threshold", cfg.flow.prune_threshold);
        if (f.contains("credibility_mode"))
            cfg.flow.credibility_mode =
                credibility_mode_from_string(f["credibility_mode"].get<std::string>());
        maybe(f, "ppl_ref", cfg.flow.ppl_ref);
    }
    if (j.contains("geometry")) {
        const auto& g = j["geometry"];
        if (g.contains("length_mode"))
            cfg.geometry.length_mode = length_mode_from_string(g["length_mode"].get<std::string>());
        maybe(g, "clip_min", cfg.geometry.clip_min);
        maybe(g, "window", cfg.geometry.window);
        if (g.contains("window_mean_mode")) {
            const auto mode = g["window_mean_mode"].get<std::string>();
            if (mode == "edge_instances")
                cfg.geometry.window_mean_mode = WindowMeanMode::edge_instances;
            else if (mode == "round_means")
                cfg.geometry.window_mean_mode = WindowMeanMode::round_means;
            else
                throw ConfigError("unknown window_mean_mode: " + mode);
        }
    }
    if (j.contains("dynamics")) {
        const auto& d = j["dynamics"];
        maybe(d, "hidden", cfg.hyper.hidden);
        maybe(d, "mlp_hidden", cfg.hyper.mlp_hidden);
        maybe(d, "lambda", cfg.hyper.lambda);
        maybe(d, "learning_rate", cfg.hyper.learning_rate);
        maybe(d, "epochs", cfg.hyper.epochs);
        maybe(d, "batch_size", cfg.hyper.batch_size);
        maybe(d, "init_scale", cfg.hyper.init_scale);
    }
    if (j.contains("audit")) {
        const auto& a = j["audit"];
        maybe(a, "percentile", cfg.audit_percentile);
        maybe(a, "lambda", cfg.audit_lambda);
        maybe(a, "attribution_halfwidth", cfg.attribution_halfwidth);
    }
    if (j.contains("simgen")) {
        const auto& s = j["simgen"];
        maybe(s, "n_rounds", cfg.scenario.n_rounds);
        maybe(s, "dim", cfg.scenario.d);
        maybe(s, "noise_scale", cfg.scenario.noise_scale);
        if (s.contains("counts")) {
            const auto& c = s["counts"];
            maybe(c, "normal", cfg.counts.normal);
            maybe(c, "dense_normal", cfg.counts.dense_normal);
            maybe(c, "echo_chamber", cfg.counts.echo_chamber);
            maybe(c, "hallucination_cascade", cfg.counts.hallucination_cascade);
            maybe(c, "role_violation", cfg.counts.role_violation);
            maybe(c, "stressor", cfg.counts.stressor);
        }
    }
    if (j.contains("eval")) {
        maybe(j["eval"], "timelag_window", cfg.timelag_window);
    }
    return cfg;
}

// The snapshot deliberately excludes filesystem paths so identical runs into
// different output roots stay byte-identical.
void write_resolved_config(const RunConfig& cfg, const std::string& out_dir,
                           const std::string& command) {
    ordered_json j;
    j["command"] = command;
    j["seed"] = cfg.seed;
    j["jobs"] = cfg.jobs;
    j["flow"] = {{"prune_threshold", cfg.flow.prune_threshold},
                 {"credibility_mode", to_string(cfg.flow.credibility_mode)},
                 {"ppl_ref", cfg.flow.ppl_ref}};
    j["geometry"] = {{"length_mode", to_string(cfg.geometry.length_mode)},
                     {"clip_min", cfg.geometry.clip_min},
                     {"window", cfg.geometry.window}};
    j["dynamics"] = {{"hidden", cfg.hyper.hidden},
                     {"mlp_hidden", cfg.hyper.mlp_hidden},
                     {"lambda", cfg.hyper.lambda},
                     {"learning_rate", cfg.hyper.learning_rate},
                     {"epochs", cfg.hyper.epochs},
                     {"batch_size", cfg.hyper.batch_size},
                     {"init_scale", cfg.hyper.init_scale}};
    j["audit"] = {{"percentile", cfg.audit_percentile},
                  {"lambda", cfg.audit_lambda},
                  {"attribution_halfwidth", cfg.attribution_halfwidth}};
    j["simgen"] = {{"n_rounds", cfg.scenario.n_rounds},
                   {"dim", cfg.scenario.d},
                   {"noise_scale", cfg.scenario.noise_scale},
                   {"counts",
                    {{"normal", cfg.counts.normal},
                     {"dense_normal", cfg.counts.dense_normal},
                     {"echo_chamber", cfg.counts.echo_chamber},
                     {"hallucination_cascade", cfg.counts.hallucination_cascade},
                     {"role_violation", cfg.counts.role_violation},
                     {"stressor", cfg.counts.stressor}}}};
    j["eval"] = {{"timelag_window", cfg.timelag_window}};

    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / "resolved_config.json", std::ios::binary);
    if (!out) throw IoError("cannot write resolved config in " + out_dir);
    out << j.dump(2) << '\n';
}

// Deterministic sharded parallel map: slot i always receives fn(i).
void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
    jobs = std::max(1, jobs);
    if (jobs == 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> threads;
    for (int w = 0; w < jobs; ++w) {
        threads.emplace_back([&, w]() {
            for (int i = w; i < n; i += jobs) fn(i);
        });
    }
    for (auto& t : threads) t.join();
}

struct LoadedCorpus {
    std::vector<PreparedTrajectory> prepared;
};

LoadedCorpus prepare_corpus(const RunConfig& cfg, const std::string& dir) {
    auto entries = load_corpus(dir);
    LoadedCorpus out;
    out.prepared.resize(entries.size());
    parallel_for(static_cast<int>(entries.size()), cfg.jobs, [&](int i) {
        PreparedTrajectory pt = prepare_trajectory(std::move(entries[i].traj), cfg.flow,
                                                   cfg.geometry);
        pt.role = entries[i].role;
        pt.dense_windows = entries[i].dense_windows;
        pt.stressor_kind = entries[i].stressor_kind;
        out.prepared[i] = std::move(pt);
    });
    return out;
}

Hyper resolved_hyper(const RunConfig& cfg, int dim) {
    Hyper h = cfg.hyper;
    h.d = dim;
    h.seed = cfg.seed;
    h.kappa_clip_min = cfg.geometry.clip_min;
    h.kappa_clip_max = 1.0;
    return h;
}

int cmd_gen(const RunConfig& cfg, const std::string& out_dir, const std::string& archetype,
            int count, bool dense) {
    std::vector<CorpusEntry> corpus;
    if (archetype.empty()) {
        corpus = generate_corpus(cfg.counts, cfg.seed, cfg.scenario);
    } else {
        const Archetype a = archetype_from_string(archetype);
        const StressorKind kinds[4] = {StressorKind::memory_limit, StressorKind::response_delay,
                                       StressorKind::paraphrase_noise,
                                       StressorKind::role_overload};
        for (int i = 0; i < count; ++i) {
            ScenarioConfig sc = cfg.scenario;
            sc.archetype = a;
            sc.dense_collab = dense;
            sc.seed = child_seed(cfg.seed, "trajectory", i);
            sc.cohort_seed = cfg.seed;
            sc.n_agents = 12 + (i % 4);
            Rng sched(child_seed(cfg.seed, "onset", i));
            sc.t_start = 12 + static_cast<int>(sched.uniform_index(9));
            if (a != Archetype::normal) sc.sem_onset_lag = default_sem_onset_lag(a);
            if (a == Archetype::stressor) sc.stressor_kind = kinds[i % 4];
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%05d", i);
            sc.traj_id = std::string(dense ? "dense" : to_string(a)) + "-" + buf;
            corpus.push_back({generate(sc), "test"});
        }
    }
    save_corpus(corpus, out_dir, cfg.seed);
    write_resolved_config(cfg, out_dir, "gen");
    if (!cfg.quiet)
        std::cerr << "wrote " << corpus.size() << " trajectories to " << out_dir << "\n";
    return 0;
}

int cmd_curvature(const RunConfig& cfg, const std::string& input, const std::string& out_dir) {
    std::vector<std::string> files;
    if (fs::is_directory(input)) {
        for (const auto& e : load_corpus(input)) (void)e;  // validates manifest early
        nlohmann::json manifest;
        std::ifstream in(fs::path(input) / "manifest.json");
        in >> manifest;
        for (const auto& item : manifest.at("trajectories"))
            files.push_back((fs::path(input) / item.at("file").get<std::string>()).string());
    } else {
        files.push_back(input);
    }

    fs::create_directories(out_dir);
    std::vector<int> done(files.size(), 0);
    parallel_for(static_cast<int>(files.size()), cfg.jobs, [&](int i) {
        const Trajectory traj = load_trajectory(files[i]);
        const auto states = build_states(traj, cfg.flow);
        std::vector<FlowGraph> graphs;
        for (const auto& st : states) graphs.push_back(st.graph);
        const auto fields = curvature_field(graphs, cfg.geometry);
        const std::string stem = (fs::path(out_dir) / traj.id).string();
        write_curvature_csv(fields, stem + ".edges.csv", stem + ".summary.csv");
        done[i] = 1;
    });
    write_resolved_config(cfg, out_dir, "curvature");
    if (!cfg.quiet) std::cerr << "curvature dumps for " << files.size() << " trajectories\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& corpus_dir, const std::string& out_dir) {
    LoadedCorpus corpus = prepare_corpus(cfg, corpus_dir);

    std::vector<const PreparedTrajectory*> train_set;
    for (const auto& pt : corpus.prepared) {
        if (pt.role == "train" && pt.traj.label == Label::normal) train_set.push_back(&pt);
    }
    if (train_set.empty()) throw ConfigError("no training normals in corpus");

    const Hyper hyper = resolved_hyper(cfg, train_set.front()->traj.dim);
    std::vector<SequenceData> full_seqs, unc_seqs;
    for (const PreparedTrajectory* pt : train_set) {
        full_seqs.push_back(build_sequence(pt->states, pt->fields, CouplingMode::full));
        unc_seqs.push_back(build_sequence(pt->states, pt->fields, CouplingMode::uncoupled));
    }

    const TrainResult full = train(full_seqs, hyper);
    Hyper unc_hyper = hyper;
    unc_hyper.seed = child_seed(cfg.seed, "uncoupled-train");
    const TrainResult unc = train(unc_seqs, unc_hyper);

    fs::create_directories(out_dir);
    {
        std::ofstream out(fs::path(out_dir) / "checkpoint.json", std::ios::binary);
        out << params_to_json(full.params) << '\n';
    }
    {
        std::ofstream out(fs::path(out_dir) / "checkpoint_uncoupled.json", std::ios::binary);
        out << params_to_json(unc.params) << '\n';
    }
    {
        std::ofstream out(fs::path(out_dir) / "training_curve.csv", std::ios::binary);
        out << "epoch,loss\n";
        for (size_t e = 0; e < full.epoch_loss.size(); ++e)
            out << e << ',' << format_double(full.epoch_loss[e]) << '\n';
    }
    {
        const NormalStats stats = fit_normal_stats(train_set);
        std::ofstream out(fs::path(out_dir) / "normal_stats.json", std::ios::binary);
        out << stats_to_json(stats) << '\n';
    }
    write_resolved_config(cfg, out_dir, "train");
    if (!cfg.quiet) {
        std::cerr << "trained on " << train_set.size() << " normals; initial loss "
                  << full.initial_loss << ", final "
                  << (full.epoch_loss.empty() ? full.initial_loss : full.epoch_loss.back())
                  << "\n";
    }
    return 0;
}

PredictorParams load_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return params_from_json(text);
}

int cmd_audit(const RunConfig& cfg, const std::string& corpus_dir, const std::string& model_path,
              const std::string& out_dir) {
    LoadedCorpus corpus = prepare_corpus(cfg, corpus_dir);
    const PredictorParams params = load_params(model_path);
    const double lambda = cfg.audit_lambda >= 0.0 ? cfg.audit_lambda : params.hyper.lambda;

    // Threshold from the calibration normals.
    std::vector<AnomalyTrace> cal_traces;
    for (const auto& pt : corpus.prepared) {
        if (pt.role != "cal" || pt.traj.label != Label::normal) continue;
        cal_traces.push_back(anomaly_score(params, pt.states, pt.fields, lambda,
                                           CouplingMode::full, pt.traj.id));
    }
    if (cal_traces.empty()) throw ConfigError("no calibration normals in corpus");
    const double threshold = calibrate_threshold(cal_traces, cfg.audit_percentile);

    fs::create_directories(fs::path(out_dir) / "reports");
    std::vector<AuditReport> reports(corpus.prepared.size());
    parallel_for(static_cast<int>(corpus.prepared.size()), cfg.jobs, [&](int i) {
        const auto& pt = corpus.prepared[i];
        reports[i] = audit_trajectory(params, pt.traj, pt.states, pt.fields, lambda, threshold,
                                      CouplingMode::full, cfg.attribution_halfwidth);
    });
    for (size_t i = 0; i < reports.size(); ++i) {
        std::ofstream out(
            fs::path(out_dir) / "reports" / (reports[i].trajectory_id + ".audit.json"),
            std::ios::binary);
        out << report_to_json(reports[i], corpus.prepared[i].traj.agents) << '\n';
    }
    write_summary_csv(reports, (fs::path(out_dir) / "summary.csv").string());
    write_resolved_config(cfg, out_dir, "audit");
    if (!cfg.quiet)
        std::cerr << "audited " << reports.size() << " trajectories, threshold " << threshold
                  << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& corpus_dir, const std::string& model_path,
             const std::string& model_unc_path, const std::string& stats_path,
             const std::string& out_dir) {
    LoadedCorpus corpus = prepare_corpus(cfg, corpus_dir);
    const PredictorParams full = load_params(model_path);
    const PredictorParams unc = load_params(model_unc_path);
    NormalStats stats;
    {
        std::ifstream in(stats_path);
        if (!in) throw IoError("cannot open stats: " + stats_path);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        stats = stats_from_json(text);
    }

    BenchmarkConfig bench;
    bench.percentile = cfg.audit_percentile;
    bench.timelag_window = cfg.timelag_window;
    bench.attribution_halfwidth = cfg.attribution_halfwidth;
    bench.audit_lambda = cfg.audit_lambda;

    const BenchmarkResults results = run_benchmark(corpus.prepared, full, unc, stats, bench);

    fs::create_directories(out_dir);
    write_benchmark_csv(results, (fs::path(out_dir) / "table1.csv").string(),
                        (fs::path(out_dir) / "table2.csv").string(),
                        (fs::path(out_dir) / "table3.csv").string());
    for (const auto& [name, curve] : results.timelag) {
        write_timelag_csv(curve, (fs::path(out_dir) / ("timelag_" + name + ".csv")).string());
    }
    write_resolved_config(cfg, out_dir, "eval");
    if (!cfg.quiet) std::cerr << "benchmark tables written to " << out_dir << "\n";
    return 0;
}

int cmd_attribute(const RunConfig& cfg, const std::string& traj_path,
                  const std::string& model_path, double threshold, const std::string& out_dir) {
    const Trajectory traj = load_trajectory(traj_path);
    const PredictorParams params = load_params(model_path);
    const double lambda = cfg.audit_lambda >= 0.0 ? cfg.audit_lambda : params.hyper.lambda;
    const PreparedTrajectory pt = prepare_trajectory(traj, cfg.flow, cfg.geometry);

    const AuditReport report =
        audit_trajectory(params, pt.traj, pt.states, pt.fields, lambda, threshold,
                         CouplingMode::full, cfg.attribution_halfwidth);
    const std::string text = report_to_json(report, pt.traj.agents);
    if (out_dir.empty()) {
        std::cout << text << "\n";
    } else {
        fs::create_directories(out_dir);
        std::ofstream out(fs::path(out_dir) / (report.trajectory_id + ".audit.json"),
                          std::ios::binary);
        out << text << '\n';
        write_resolved_config(cfg, out_dir, "attribute");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semantic-flow curvature auditing for multi-agent trajectories"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::optional<uint64_t> seed_flag;
    std::optional<int> jobs_flag;
    bool quiet = false;
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--seed", seed_flag, "root seed (overrides config)");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--jobs", jobs_flag, "worker threads (outputs are jobs-invariant)");
    app.add_flag("--quiet", quiet, "suppress progress output");

    auto* gen = app.add_subcommand("gen", "generate a synthetic corpus");
    std::string gen_archetype;
    int gen_count = 10;
    bool gen_dense = false;
    gen->add_option("--archetype", gen_archetype,
                    "single archetype instead of the full corpus mix");
    gen->add_option("--count", gen_count, "trajectories when --archetype is given");
    gen->add_flag("--dense", gen_dense, "dense-collaboration normal variant");

    auto* curv = app.add_subcommand("curvature", "per-round edge curvature dumps");
    std::string curv_input;
    curv->add_option("--in", curv_input, "trajectory file or corpus directory")->required();

    auto* train_cmd = app.add_subcommand("train", "train the coupled predictor");
    std::string train_corpus;
    train_cmd->add_option("--corpus", train_corpus, "corpus directory")->required();

    auto* audit_cmd = app.add_subcommand("audit", "score and attribute a corpus");
    std::string audit_corpus, audit_model;
    audit_cmd->add_option("--corpus", audit_corpus, "corpus directory")->required();
    audit_cmd->add_option("--model", audit_model, "checkpoint.json")->required();

    auto* eval_cmd = app.add_subcommand("eval", "benchmark tables and time-lag curves");
    std::string eval_corpus, eval_model, eval_model_unc, eval_stats;
    eval_cmd->add_option("--corpus", eval_corpus, "corpus directory")->required();
    eval_cmd->add_option("--model", eval_model, "checkpoint.json")->required();
    eval_cmd->add_option("--model-uncoupled", eval_model_unc, "uncoupled checkpoint")->required();
    eval_cmd->add_option("--stats", eval_stats, "normal_stats.json")->required();

    auto* attr_cmd = app.add_subcommand("attribute", "audit one trajectory file");
    std::string attr_traj, attr_model;
    double attr_threshold = 0.0;
    attr_cmd->add_option("--traj", attr_traj, "trajectory file")->required();
    attr_cmd->add_option("--model", attr_model, "checkpoint.json")->required();
    attr_cmd->add_option("--threshold", attr_threshold, "alarm threshold")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        RunConfig cfg = load_config(config_path);
        if (seed_flag) cfg.seed = *seed_flag;
        if (jobs_flag) cfg.jobs = *jobs_flag;
        cfg.quiet = cfg.quiet || quiet;

        const bool needs_out = gen->parsed() || curv->parsed() || train_cmd->parsed() ||
                               audit_cmd->parsed() || eval_cmd->parsed();
        if (needs_out && out_dir.empty()) throw ConfigError("--out is required");

        if (gen->parsed()) return cmd_gen(cfg, out_dir, gen_archetype, gen_count, gen_dense);
        if (curv->parsed()) return cmd_curvature(cfg, curv_input, out_dir);
        if (train_cmd->parsed()) return cmd_train(cfg, train_corpus, out_dir);
        if (audit_cmd->parsed()) return cmd_audit(cfg, audit_corpus, audit_model, out_dir);
        if (eval_cmd->parsed())
            return cmd_eval(cfg, eval_corpus, eval_model, eval_model_unc, eval_stats, out_dir);
        if (attr_cmd->parsed())
            return cmd_attribute(cfg, attr_traj, attr_model, attr_threshold, out_dir);
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return is_input_error(e) ? 2 : 3;
    }
}
