#include "flowaudit/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <json.hpp>

#include "flowaudit/errors.hpp"
#include "flowaudit/rng.hpp"

namespace flowaudit {

namespace {

// Normal-regime generation constants. The workflow is hub-and-team: the
// coordinator broadcasts a round summary to everyone, each worker posts one
// status message (to the hub or up its team chain) plus optional extra team
// chatter. Routing density and semantic spread co-vary through a smoothly
// drifting collaboration intensity, so graph geometry and message content
// stay coupled in the normal regime.
constexpr double kIntensityMean = 0.55;
constexpr double kIntensityPhi = 0.85;
constexpr double kIntensityNoise = 0.07;
constexpr double kDriftPhi = 0.95;
constexpr double kDriftStep = 0.012;
constexpr double kPullCoef = 0.30;     // intensity-linked pull toward the task mean
constexpr double kAnchorSpread = 0.5;  // role offset against the shared task direction
constexpr int kTeamSize = 4;

constexpr double kAckHubBase = 0.80;   // chance the status message goes to the hub
constexpr double kAckHubSlope = 0.15;
constexpr double kExtraTeamBase = 0.45;
constexpr double kDenseExtraTeam = 0.85;
constexpr double kDenseCross = 0.60;   // cross-team chatter inside dense episodes

// Echo chamber.
constexpr int kEchoRamp = 4;
constexpr double kEchoPreBlend = 0.30;
constexpr double kEchoJump = 0.45;
constexpr double kEchoReciprocate = 0.95;
constexpr double kEchoMemberPair = 0.85;
constexpr double kEchoSuppress = 0.95;

// Hallucination cascade.
constexpr int kCascadeRamp = 6;
constexpr double kCascadeParentSend = 0.95;
constexpr double kCascadeAck = 0.70;
constexpr double kCascadeSuppress = 0.97;
constexpr double kCascadePreShift = 0.15;
constexpr double kCascadeJump = 0.50;
constexpr double kCascadePplRate = 2.5;
constexpr double kCascadePplCap = 20.0;

// Role violation.
constexpr int kRoleRamp = 4;
constexpr double kRoleAck = 0.85;
constexpr double kRolePeerTeam = 0.40;
constexpr double kRoleJump = 0.45;
constexpr double kRolePeerJump = 0.20;

// Stressors.
constexpr int kStressRamp = 8;
constexpr double kParaphraseMult = 1.5;

std::vector<double> normalized(std::vector<double> v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n > 0.0) {
        for (double& x : v) x /= n;
    }
    return v;
}

int team_of(int worker) { return (worker - 1) / kTeamSize; }

double ramp(int t, int t_start, int len) {
    return std::min(1.0, static_cast<double>(t - t_start + 1) / static_cast<double>(len));
}

}  // namespace

std::string to_string(StressorKind k) {
    switch (k) {
        case StressorKind::memory_limit: return "memory_limit";
        case StressorKind::response_delay: return "response_delay";
        case StressorKind::paraphrase_noise: return "paraphrase_noise";
        case StressorKind::role_overload: return "role_overload";
    }
    return "memory_limit";
}

StressorKind stressor_kind_from_string(const std::string& s) {
    if (s == "memory_limit") return StressorKind::memory_limit;
    if (s == "response_delay") return StressorKind::response_delay;
    if (s == "paraphrase_noise") return StressorKind::paraphrase_noise;
    if (s == "role_overload") return StressorKind::role_overload;
    throw ConfigError("unknown stressor kind: " + s);
}

int default_sem_onset_lag(Archetype a) {
    switch (a) {
        case Archetype::echo_chamber: return 6;
        case Archetype::hallucination_cascade: return 7;
        case Archetype::role_violation: return 4;
        default: return 6;
    }
}

Cohort make_cohort(uint64_t cohort_seed, int d, int max_agents) {
    Rng rng(child_seed(cohort_seed, "cohort"));
    Cohort cohort;
    cohort.task_dir = normalized(rng.normal_vector(d));

    cohort.names.push_back("coord");
    for (int w = 1; w < max_agents; ++w) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "w%02d", w);
        cohort.names.push_back(buf);
    }

    for (int i = 0; i < max_agents; ++i) {
        std::vector<double> offset = normalized(rng.normal_vector(d));
        std::vector<double> a(d);
        for (int k = 0; k < d; ++k) a[k] = cohort.task_dir[k] + kAnchorSpread * offset[k];
        cohort.anchors.push_back({i, normalized(std::move(a)), kDriftStep});
    }

    auto held_out = [&]() {
        std::vector<double> v = normalized(rng.normal_vector(d));
        double proj = 0.0;
        for (int k = 0; k < d; ++k) proj += v[k] * cohort.task_dir[k];
        for (int k = 0; k < d; ++k) v[k] -= proj * cohort.task_dir[k];
        return normalized(std::move(v));
    };
    cohort.violation_dir = held_out();
    cohort.hallucination_dir = held_out();
    return cohort;
}

namespace {

struct RoundPlan {
    std::vector<char> hub_targets;            // per worker; hub broadcast recipients
    std::vector<int> ack_target;              // per worker; -1 = dropped
    std::vector<std::vector<int>> extras;     // per worker, ascending same-team dst
    std::vector<std::vector<int>> cross;      // per worker, ascending cross-team dst
    std::vector<std::vector<std::vector<int>>> injected;  // per sender, recipient groups
};

struct GenState {
    double intensity = kIntensityMean;
    std::vector<double> drift;
    std::vector<std::vector<double>> carried;  // last active embedding per agent
    std::vector<int> infected_at;              // -1 when clean (cascade)
    std::vector<std::vector<int>> children;
};

// Status-message fallback chain: hub, or the next teammate up the order.
int higher_teammate(int w, int n_workers, uint64_t pick) {
    std::vector<int> mates;
    for (int j = w + 1; j <= n_workers; ++j) {
        if (team_of(j) == team_of(w)) mates.push_back(j);
    }
    if (mates.empty()) return 0;  // last in team reports to the hub
    return mates[pick % mates.size()];
}

int team_lead(int w) { return 1 + team_of(w) * kTeamSize; }

}  // namespace

GeneratedTrajectory generate(const ScenarioConfig& cfg) {
    if (cfg.n_agents < 12 || cfg.n_agents > 15)
        throw ConfigError("n_agents must lie in [12, 15]");
    if (cfg.n_rounds < 4) throw ConfigError("n_rounds too small");
    if (cfg.d < 2) throw ConfigError("embedding dim too small");
    if (cfg.noise_scale < 0.0) throw ConfigError("noise_scale must be >= 0");

    const int N = cfg.n_agents;
    const int T = cfg.n_rounds;
    const int n_workers = N - 1;
    const bool risk_active = cfg.archetype != Archetype::normal && cfg.t_start < T;
    if (risk_active) {
        if (cfg.t_start < 1) throw ConfigError("t_start must be >= 1");
        if (cfg.archetype != Archetype::stressor && cfg.t_start + cfg.sem_onset_lag >= T)
            throw ConfigError("t_start + sem_onset_lag must be < n_rounds");
        if (cfg.archetype == Archetype::stressor && !cfg.stressor_kind)
            throw ConfigError("stressor archetype requires stressor_kind");
    }

    const Cohort cohort = make_cohort(cfg.cohort_seed, cfg.d, N);

    Rng rng_intensity(child_seed(cfg.seed, "intensity"));
    Rng rng_drift(child_seed(cfg.seed, "drift"));
    Rng rng_embed(child_seed(cfg.seed, "embed"));
    Rng rng_routing(child_seed(cfg.seed, "routing"));
    Rng rng_schedule(child_seed(cfg.seed, "schedule"));
    Rng rng_attack(child_seed(cfg.seed, "attack"));

    GenState st;
    st.drift.assign(cfg.d, 0.0);
    st.carried.assign(N, std::vector<double>(cfg.d, 0.0));
    st.infected_at.assign(N, -1);
    st.children.assign(N, {});

    // Schedule stream, fixed draw order: perplexity bases, dense episodes,
    // archetype selections.
    std::vector<double> ppl_base(N);
    for (int i = 0; i < N; ++i) ppl_base[i] = rng_schedule.uniform(12.0, 22.0);

    std::vector<std::pair<int, int>> dense_windows;
    if (cfg.dense_collab) {
        const int e1 = 8 + static_cast<int>(rng_schedule.uniform_index(6));
        const int l1 = 6 + static_cast<int>(rng_schedule.uniform_index(4));
        const int e2 = 24 + static_cast<int>(rng_schedule.uniform_index(6));
        const int l2 = 6 + static_cast<int>(rng_schedule.uniform_index(4));
        dense_windows.push_back({std::min(e1, T - 1), std::min(e1 + l1, T)});
        dense_windows.push_back({std::min(e2, T - 1), std::min(e2 + l2, T)});
    }

    std::vector<int> clique;
    int instigator = -1, source = -1, violator = -1, peer = -1;
    if (cfg.archetype == Archetype::echo_chamber) {
        const int full_teams = n_workers / kTeamSize;
        const int team = static_cast<int>(rng_schedule.uniform_index(std::max(1, full_teams)));
        for (int k = 0; k < kTeamSize; ++k) clique.push_back(1 + team * kTeamSize + k);
        instigator = clique[rng_schedule.uniform_index(clique.size())];
    } else if (cfg.archetype == Archetype::hallucination_cascade) {
        source = 1 + static_cast<int>(rng_schedule.uniform_index(n_workers));
    } else if (cfg.archetype == Archetype::role_violation) {
        violator = 6 + static_cast<int>(rng_schedule.uniform_index(std::max(1, n_workers - 5)));
        peer = 1 + static_cast<int>(rng_schedule.uniform_index(kTeamSize));  // team 0
    }

    // Semantic onset: annotated lag for attacks, a scheduled-degradation
    // coordination proxy for stressors.
    int t_sem = cfg.t_start + cfg.sem_onset_lag;
    if (risk_active && cfg.archetype == Archetype::stressor) {
        switch (*cfg.stressor_kind) {
            case StressorKind::memory_limit:
                t_sem = cfg.t_start + static_cast<int>(std::ceil(0.5 * kStressRamp)) - 1;
                break;
            case StressorKind::response_delay:
            case StressorKind::paraphrase_noise:
                t_sem = cfg.t_start + static_cast<int>(std::ceil(0.6 * kStressRamp)) - 1;
                break;
            case StressorKind::role_overload: {
                const int base_k = static_cast<int>(std::lround(0.4 * n_workers));
                const int target = static_cast<int>(std::ceil(0.9 * n_workers));
                t_sem = cfg.t_start + std::max(1, target - base_k);
                break;
            }
        }
        if (t_sem >= T) throw ConfigError("stressor onset too late for the horizon");
    }

    Trajectory traj;
    traj.id = cfg.traj_id;
    traj.dim = cfg.d;
    for (int i = 0; i < N; ++i) traj.agents.push_back(cohort.names[i]);
    traj.rounds.resize(T);

    for (int t = 0; t < T; ++t) {
        // Intensity and shared drift advance every round.
        const double xi_c = rng_intensity.normal();
        if (t > 0) {
            st.intensity = std::clamp(
                kIntensityMean + kIntensityPhi * (st.intensity - kIntensityMean) +
                    kIntensityNoise * xi_c,
                0.25, 1.0);
        }
        for (int k = 0; k < cfg.d; ++k) {
            st.drift[k] = kDriftPhi * st.drift[k] + kDriftStep * rng_drift.normal();
        }

        bool dense_now = false;
        for (const auto& [a, b] : dense_windows) dense_now = dense_now || (t >= a && t < b);
        const double c_eff = dense_now ? 1.0 : st.intensity;

        // Unconditional per-agent draws keep stream parity across scenarios.
        std::vector<std::vector<double>> xi(N);
        std::vector<double> jit(N);
        for (int i = 0; i < N; ++i) {
            xi[i] = rng_embed.normal_vector(cfg.d);
            jit[i] = rng_embed.normal();
        }

        // Base routing plan. Every worker posts exactly one status message
        // (hub or up-team), the hub always briefs everyone; silence only
        // ever arises from risk perturbations.
        RoundPlan plan;
        plan.hub_targets.assign(n_workers + 1, 1);
        plan.ack_target.assign(n_workers + 1, 0);
        plan.extras.assign(n_workers + 1, {});
        plan.cross.assign(n_workers + 1, {});
        plan.injected.assign(N, {});

        const double p_ack_hub = (t == 0) ? 1.0 : kAckHubBase + kAckHubSlope * c_eff;
        const double p_extra = (t == 0) ? 0.0 : (dense_now ? kDenseExtraTeam
                                                           : kExtraTeamBase * c_eff);
        for (int w = 1; w <= n_workers; ++w) {
            const bool to_hub = rng_routing.bernoulli(p_ack_hub);
            const uint64_t pick = rng_routing.next_u64();
            plan.ack_target[w] = to_hub ? 0 : higher_teammate(w, n_workers, pick);
        }
        for (int w = 1; w <= n_workers; ++w) {
            for (int j = w + 1; j <= n_workers; ++j) {
                if (team_of(j) != team_of(w)) continue;
                if (rng_routing.bernoulli(p_extra)) plan.extras[w].push_back(j);
            }
        }
        if (cfg.dense_collab) {
            for (int w = 1; w <= n_workers; ++w) {
                for (int j = w + 1; j <= n_workers; ++j) {
                    if (team_of(j) == team_of(w)) continue;
                    if (rng_routing.bernoulli(dense_now ? kDenseCross : 0.0))
                        plan.cross[w].push_back(j);
                }
            }
        }

        // Embedding assembly coefficients, adjusted by stressors.
        double drift_coef = 1.0;
        double extra_noise = 0.0;
        const double r_attack = risk_active ? ramp(t, cfg.t_start, kStressRamp) : 0.0;
        if (risk_active && t >= cfg.t_start && cfg.archetype == Archetype::stressor) {
            switch (*cfg.stressor_kind) {
                case StressorKind::memory_limit:
                    drift_coef = 1.0 - r_attack;
                    break;
                case StressorKind::paraphrase_noise:
                    extra_noise = kParaphraseMult * r_attack * cfg.noise_scale;
                    break;
                default:
                    break;
            }
        }

        const auto carried_prev = st.carried;

        std::vector<std::vector<double>> y(N);
        const double pull = kPullCoef * (c_eff - kIntensityMean);
        for (int i = 0; i < N; ++i) {
            std::vector<double> raw(cfg.d);
            const auto& anchor = cohort.anchors[i].anchor;
            for (int k = 0; k < cfg.d; ++k) {
                raw[k] = anchor[k] + drift_coef * st.drift[k] +
                         pull * (cohort.task_dir[k] - anchor[k]) + cfg.noise_scale * xi[i][k];
            }
            if (extra_noise > 0.0) {
                for (int k = 0; k < cfg.d; ++k) raw[k] += extra_noise * rng_attack.normal();
            }
            y[i] = normalized(std::move(raw));
        }

        std::vector<double> ppl(N);
        for (int i = 0; i < N; ++i) ppl[i] = std::clamp(ppl_base[i] + 2.0 * jit[i], 1.0, 60.0);

        // --- archetype perturbations (post-onset only) ---
        if (risk_active && t >= cfg.t_start) {
            const bool post_sem = t >= t_sem;
            switch (cfg.archetype) {
                case Archetype::echo_chamber: {
                    const double a = ramp(t, cfg.t_start, kEchoRamp);
                    std::vector<double> center(cfg.d, 0.0);
                    for (int m : clique) {
                        for (int k = 0; k < cfg.d; ++k) center[k] += cohort.anchors[m].anchor[k];
                    }
                    center = normalized(std::move(center));
                    for (int m : clique) {
                        std::vector<double> v = y[m];
                        for (int k = 0; k < cfg.d; ++k) {
                            v[k] += (post_sem ? kEchoPreBlend : a * kEchoPreBlend) *
                                    (center[k] - y[m][k]);
                            if (post_sem) v[k] += kEchoJump * cohort.violation_dir[k];
                        }
                        y[m] = normalized(std::move(v));
                    }
                    // densify: the instigator blasts the clique, members
                    // reciprocate and fold their status reports inward
                    {
                        std::vector<int> targets;
                        for (int o : clique) {
                            if (o != instigator) targets.push_back(o);
                        }
                        std::sort(targets.begin(), targets.end());
                        plan.injected[instigator].push_back(targets);
                    }
                    for (int m : clique) {
                        if (m == instigator) continue;
                        if (rng_attack.bernoulli(kEchoReciprocate))
                            plan.injected[m].push_back({instigator});
                        for (int o : clique) {
                            if (o == instigator || o == m) continue;
                            if (rng_attack.bernoulli(kEchoMemberPair * a))
                                plan.injected[m].push_back({o});
                        }
                    }
                    for (int m : clique) {
                        if (rng_attack.bernoulli(kEchoSuppress * a)) {
                            // status report goes into the chamber, not up
                            plan.ack_target[m] = (m == instigator)
                                                     ? clique[m == clique[0] ? 1 : 0]
                                                     : instigator;
                        }
                        auto& extras = plan.extras[m];
                        std::vector<int> kept;
                        for (int j : extras) {
                            const bool in_clique =
                                std::find(clique.begin(), clique.end(), j) != clique.end();
                            if (in_clique || !rng_attack.bernoulli(kEchoSuppress * a))
                                kept.push_back(j);
                        }
                        extras = kept;
                    }
                    break;
                }
                case Archetype::hallucination_cascade: {
                    if (st.infected_at[source] < 0) st.infected_at[source] = t;
                    // grow the diffusion tree by up to two nodes per round
                    for (int grow = 0; grow < 2; ++grow) {
                        std::vector<int> parents;
                        for (int i = 1; i <= n_workers; ++i) {
                            if (st.infected_at[i] >= 0 &&
                                static_cast<int>(st.children[i].size()) < 3)
                                parents.push_back(i);
                        }
                        std::vector<int> clean;
                        for (int i = 1; i <= n_workers; ++i) {
                            if (st.infected_at[i] < 0) clean.push_back(i);
                        }
                        if (parents.empty() || clean.empty()) break;
                        const int parent = parents[rng_attack.uniform_index(parents.size())];
                        const int child = clean[rng_attack.uniform_index(clean.size())];
                        st.infected_at[child] = t;
                        st.children[parent].push_back(child);
                    }
                    for (int i = 1; i <= n_workers; ++i) {
                        if (st.infected_at[i] < 0) continue;
                        for (int ch : st.children[i]) {
                            if (rng_attack.bernoulli(kCascadeParentSend))
                                plan.injected[i].push_back({ch});
                        }
                        int parent = -1;
                        for (int p = 1; p <= n_workers; ++p) {
                            const auto& kids = st.children[p];
                            if (std::find(kids.begin(), kids.end(), i) != kids.end()) parent = p;
                        }
                        if (parent > 0 && rng_attack.bernoulli(kCascadeAck))
                            plan.injected[i].push_back({parent});
                        if (rng_attack.bernoulli(kCascadeSuppress * r_attack)) {
                            // status stays inside the cascade tree
                            plan.ack_target[i] =
                                parent > 0 ? parent
                                           : (st.children[i].empty() ? plan.ack_target[i]
                                                                     : st.children[i][0]);
                        }
                        auto& extras = plan.extras[i];
                        std::vector<int> kept;
                        for (int j : extras) {
                            if (!rng_attack.bernoulli(kCascadeSuppress * r_attack))
                                kept.push_back(j);
                        }
                        extras = kept;
                    }
                    // semantics: the source drifts into fabricated content,
                    // downstream nodes copy it with rising fidelity
                    {
                        const double shift =
                            post_sem ? kCascadeJump
                                     : kCascadePreShift * ramp(t, cfg.t_start, kCascadeRamp);
                        std::vector<double> v = y[source];
                        for (int k = 0; k < cfg.d; ++k)
                            v[k] += shift * cohort.hallucination_dir[k];
                        y[source] = normalized(std::move(v));
                    }
                    for (int i = 1; i <= n_workers; ++i) {
                        if (i == source || st.infected_at[i] < 0) continue;
                        double f = 0.05 + 0.05 * ramp(t, st.infected_at[i], 5);
                        if (post_sem) f = std::min(0.9, f + 0.55);
                        std::vector<double> v(cfg.d);
                        for (int k = 0; k < cfg.d; ++k) {
                            v[k] = (1.0 - f) * y[i][k] + f * carried_prev[source][k];
                        }
                        y[i] = normalized(std::move(v));
                    }
                    ppl[source] = std::clamp(
                        ppl[source] +
                            std::min(kCascadePplCap, kCascadePplRate * (t - cfg.t_start)),
                        1.0, 60.0);
                    break;
                }
                case Archetype::role_violation: {
                    const double a = ramp(t, cfg.t_start, kRoleRamp);
                    // the violator routes around the hub to a cross-team peer
                    plan.ack_target[violator] = peer;
                    plan.injected[violator].push_back({peer});
                    if (rng_attack.bernoulli(kRoleAck)) plan.injected[peer].push_back({violator});
                    for (int j = 1 + team_of(peer) * kTeamSize;
                         j <= std::min(n_workers, (team_of(peer) + 1) * kTeamSize); ++j) {
                        if (j == peer || j == violator) continue;
                        if (rng_attack.bernoulli(kRolePeerTeam * a))
                            plan.injected[violator].push_back({j});
                    }
                    if (post_sem) {
                        std::vector<double> v = y[violator];
                        for (int k = 0; k < cfg.d; ++k)
                            v[k] += kRoleJump * cohort.violation_dir[k];
                        y[violator] = normalized(std::move(v));
                        std::vector<double> u = y[peer];
                        for (int k = 0; k < cfg.d; ++k)
                            u[k] += kRolePeerJump * cohort.violation_dir[k];
                        y[peer] = normalized(std::move(u));
                    }
                    break;
                }
                case Archetype::stressor: {
                    switch (*cfg.stressor_kind) {
                        case StressorKind::response_delay: {
                            for (int w = 1; w <= n_workers; ++w) {
                                if (rng_attack.bernoulli(0.5 * r_attack))
                                    plan.ack_target[w] = -1;  // reply never arrives
                                auto& extras = plan.extras[w];
                                std::vector<int> kept;
                                for (int j : extras) {
                                    if (!rng_attack.bernoulli(0.5 * r_attack)) kept.push_back(j);
                                }
                                extras = kept;
                            }
                            break;
                        }
                        case StressorKind::memory_limit: {
                            for (int w = 1; w <= n_workers; ++w) {
                                auto& extras = plan.extras[w];
                                std::vector<int> kept;
                                for (int j : extras) {
                                    if (!rng_attack.bernoulli(0.8 * r_attack)) kept.push_back(j);
                                }
                                extras = kept;
                            }
                            break;
                        }
                        case StressorKind::role_overload: {
                            const int base_k = static_cast<int>(std::lround(0.4 * n_workers));
                            const int k_t = std::min(n_workers, base_k + (t - cfg.t_start));
                            for (int w = 1; w <= n_workers; ++w) {
                                plan.ack_target[w] = (w <= k_t) ? 0 : team_lead(w);
                                if (plan.ack_target[w] == w) plan.ack_target[w] = 0;
                                if (rng_attack.bernoulli(0.6 * r_attack))
                                    plan.hub_targets[w] = 0;  // hub too swamped to brief w
                                auto& extras = plan.extras[w];
                                std::vector<int> kept;
                                for (int j : extras) {
                                    if (!rng_attack.bernoulli(0.7 * r_attack)) kept.push_back(j);
                                }
                                extras = kept;
                            }
                            bool any = false;
                            for (int w = 1; w <= n_workers; ++w) any = any || plan.hub_targets[w];
                            if (!any) plan.hub_targets[1 + (t % n_workers)] = 1;
                            break;
                        }
                        case StressorKind::paraphrase_noise:
                            break;  // handled in the embedding assembly
                    }
                    break;
                }
                default:
                    break;
            }
        }

        // --- materialize messages in canonical order ---
        auto emit = [&](int sender, std::vector<int> recipients) {
            if (recipients.empty()) return;
            std::sort(recipients.begin(), recipients.end());
            recipients.erase(std::unique(recipients.begin(), recipients.end()),
                             recipients.end());
            std::erase(recipients, sender);
            if (recipients.empty()) return;
            Message m;
            m.sender = sender;
            m.recipients = std::move(recipients);
            m.round = t;
            m.embedding = y[sender];
            m.perplexity = ppl[sender];
            traj.rounds[t].push_back(std::move(m));
            st.carried[sender] = y[sender];
        };

        {
            std::vector<int> targets;
            for (int w = 1; w <= n_workers; ++w) {
                if (plan.hub_targets[w]) targets.push_back(w);
            }
            emit(0, targets);
        }
        for (int w = 1; w <= n_workers; ++w) {
            if (plan.ack_target[w] >= 0) emit(w, {plan.ack_target[w]});
            for (int j : plan.extras[w]) emit(w, {j});
            for (int j : plan.cross[w]) emit(w, {j});
            auto groups = plan.injected[w];
            std::sort(groups.begin(), groups.end());
            for (auto& g : groups) emit(w, std::move(g));
        }
    }

    if (risk_active) {
        traj.label = Label::risk;
        RiskAnnotations ann;
        ann.t_start = cfg.t_start;
        ann.t_sem = t_sem;
        ann.archetype = cfg.archetype;
        if (instigator >= 0) ann.instigator = cohort.names[instigator];
        if (source >= 0) ann.instigator = cohort.names[source];
        if (violator >= 0) ann.instigator = cohort.names[violator];
        traj.risk = ann;
    }

    traj.validate();

    GeneratedTrajectory out;
    out.traj = std::move(traj);
    out.dense_windows = dense_windows;
    for (int p = 1; p < N; ++p) {
        for (int c : st.children[p]) out.chain_edges.push_back({p, c});
    }
    out.stressor_kind = risk_active ? cfg.stressor_kind : std::nullopt;
    if (!clique.empty()) out.focus_agents = clique;
    if (source >= 0) out.focus_agents = {source};
    if (violator >= 0) out.focus_agents = {violator, peer};
    return out;
}

GeneratedTrajectory generate_normal(ScenarioConfig cfg) {
    cfg.archetype = Archetype::normal;
    return generate(cfg);
}

GeneratedTrajectory generate_echo_chamber(ScenarioConfig cfg) {
    if (cfg.archetype != Archetype::echo_chamber)
        throw ConfigError("generate_echo_chamber: wrong archetype");
    return generate(cfg);
}

GeneratedTrajectory generate_hallucination_cascade(ScenarioConfig cfg) {
    if (cfg.archetype != Archetype::hallucination_cascade)
        throw ConfigError("generate_hallucination_cascade: wrong archetype");
    return generate(cfg);
}

GeneratedTrajectory generate_role_violation(ScenarioConfig cfg) {
    if (cfg.archetype != Archetype::role_violation)
        throw ConfigError("generate_role_violation: wrong archetype");
    return generate(cfg);
}

GeneratedTrajectory generate_stressor(ScenarioConfig cfg) {
    if (cfg.archetype != Archetype::stressor)
        throw ConfigError("generate_stressor: wrong archetype");
    return generate(cfg);
}

std::vector<CorpusEntry> generate_corpus(const CorpusCounts& counts, uint64_t base_seed,
                                         const ScenarioConfig& base) {
    std::vector<CorpusEntry> corpus;
    int index = 0;

    auto push = [&](Archetype a, bool dense, std::optional<StressorKind> kind, int per_kind_idx,
                    int total_of_kind) {
        ScenarioConfig cfg = base;
        cfg.archetype = a;
        cfg.dense_collab = dense;
        cfg.stressor_kind = kind;
        cfg.seed = child_seed(base_seed, "trajectory", index);
        cfg.cohort_seed = base_seed;
        cfg.n_agents = 12 + (index % 4);
        Rng sched(child_seed(base_seed, "onset", index));
        cfg.t_start = 12 + static_cast<int>(sched.uniform_index(9));
        if (a != Archetype::normal) cfg.sem_onset_lag = default_sem_onset_lag(a);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%05d", index);
        cfg.traj_id = std::string(dense ? "dense" : to_string(a)) + "-" + buf;

        std::string role = "test";
        if (a == Archetype::normal) {
            // 50/25/25 split, stratified within each normal sub-kind
            const int q = per_kind_idx * 4 / std::max(1, total_of_kind);
            role = (q < 2) ? "train" : (q == 2 ? "cal" : "test");
        }
        corpus.push_back({generate(cfg), role});
        ++index;
    };

    for (int i = 0; i < counts.normal; ++i)
        push(Archetype::normal, false, {}, i, counts.normal);
    for (int i = 0; i < counts.dense_normal; ++i)
        push(Archetype::normal, true, {}, i, counts.dense_normal);
    for (int i = 0; i < counts.echo_chamber; ++i)
        push(Archetype::echo_chamber, false, {}, i, counts.echo_chamber);
    for (int i = 0; i < counts.hallucination_cascade; ++i)
        push(Archetype::hallucination_cascade, false, {}, i, counts.hallucination_cascade);
    for (int i = 0; i < counts.role_violation; ++i)
        push(Archetype::role_violation, false, {}, i, counts.role_violation);
    const StressorKind kinds[4] = {StressorKind::memory_limit, StressorKind::response_delay,
                                   StressorKind::paraphrase_noise, StressorKind::role_overload};
    for (int i = 0; i < counts.stressor; ++i)
        push(Archetype::stressor, false, kinds[i % 4], i, counts.stressor);
    return corpus;
}

std::string manifest_to_json(const std::vector<CorpusEntry>& corpus,
                             const std::vector<std::string>& file_names, uint64_t base_seed,
                             int dim) {
    nlohmann::ordered_json j;
    j["base_seed"] = base_seed;
    j["dim"] = dim;
    nlohmann::ordered_json list = nlohmann::ordered_json::array();
    for (size_t i = 0; i < corpus.size(); ++i) {
        const auto& entry = corpus[i];
        const Trajectory& t = entry.gen.traj;
        nlohmann::ordered_json e;
        e["file"] = file_names[i];
        e["traj_id"] = t.id;
        e["label"] = to_string(t.label);
        e["role"] = entry.role;
        e["n_agents"] = t.n_agents();
        e["dense"] = !entry.gen.dense_windows.empty();
        if (!entry.gen.dense_windows.empty()) {
            nlohmann::ordered_json w = nlohmann::ordered_json::array();
            for (const auto& [a, b] : entry.gen.dense_windows) w.push_back({a, b});
            e["dense_windows"] = w;
        }
        if (t.risk) {
            e["archetype"] = to_string(t.risk->archetype);
            e["t_start"] = t.risk->t_start;
            e["t_sem"] = t.risk->t_sem;
            if (t.risk->instigator) e["instigator"] = *t.risk->instigator;
            if (entry.gen.stressor_kind) e["stressor_kind"] = to_string(*entry.gen.stressor_kind);
        }
        list.push_back(e);
    }
    j["trajectories"] = list;
    return j.dump(2);
}

}  // namespace flowaudit
