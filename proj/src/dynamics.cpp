#include "flowaudit/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "flowaudit/errors.hpp"
#include "flowaudit/kernels.hpp"
#include "flowaudit/rng.hpp"

namespace flowaudit {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

// --- parameters ---------------------------------------------------------------

void PredictorParams::allocate() {
    const int d = hyper.d, h = hyper.hidden, mh = hyper.mlp_hidden;
    Wz = Matrix(h, 2 * d);
    Wr = Matrix(h, 2 * d);
    Wn = Matrix(h, 2 * d);
    Uz = Matrix(h, h);
    Ur = Matrix(h, h);
    Un = Matrix(h, h);
    bz.assign(h, 0.0);
    br.assign(h, 0.0);
    bn.assign(h, 0.0);
    Wo = Matrix(d, h);
    bo.assign(d, 0.0);
    M1 = Matrix(mh, 4);
    c1.assign(mh, 0.0);
    M2 = Matrix(mh, mh);
    c2.assign(mh, 0.0);
    m3.assign(mh, 0.0);
    c3 = 0.0;
}

void PredictorParams::init(uint64_t seed) {
    allocate();
    Rng rng(child_seed(seed, "param-init"));
    const double s = hyper.init_scale;
    visit([&](const std::string&, double* p, size_t n) {
        for (size_t k = 0; k < n; ++k) p[k] = rng.uniform(-s, s);
    });
}

void PredictorParams::fill(double v) {
    visit([&](const std::string&, double* p, size_t n) {
        for (size_t k = 0; k < n; ++k) p[k] = v;
    });
}

void PredictorParams::visit(const std::function<void(const std::string&, double*, size_t)>& fn) {
    fn("gru.Wz", Wz.data(), Wz.size());
    fn("gru.Wr", Wr.data(), Wr.size());
    fn("gru.Wn", Wn.data(), Wn.size());
    fn("gru.Uz", Uz.data(), Uz.size());
    fn("gru.Ur", Ur.data(), Ur.size());
    fn("gru.Un", Un.data(), Un.size());
    fn("gru.bz", bz.data(), bz.size());
    fn("gru.br", br.data(), br.size());
    fn("gru.bn", bn.data(), bn.size());
    fn("gru.Wo", Wo.data(), Wo.size());
    fn("gru.bo", bo.data(), bo.size());
    fn("mlp.M1", M1.data(), M1.size());
    fn("mlp.c1", c1.data(), c1.size());
    fn("mlp.M2", M2.data(), M2.size());
    fn("mlp.c2", c2.data(), c2.size());
    fn("mlp.m3", m3.data(), m3.size());
    fn("mlp.c3", &c3, 1);
}

void PredictorParams::visit_const(
    const std::function<void(const std::string&, const double*, size_t)>& fn) const {
    const_cast<PredictorParams*>(this)->visit(
        [&](const std::string& name, double* p, size_t n) { fn(name, p, n); });
}

size_t PredictorParams::n_params() const {
    size_t total = 0;
    visit_const([&](const std::string&, const double*, size_t n) { total += n; });
    return total;
}

// --- attention and features ----------------------------------------------------

std::vector<double> gated_attention(const std::vector<double>& weights,
                                    const std::vector<double>& kappas) {
    if (weights.size() != kappas.size())
        throw ContractError("gated_attention: weight/kappa size mismatch");
    const size_t n = weights.size();
    std::vector<double> alpha(n);
    if (n == 0) return alpha;

    double max_logit = -std::numeric_limits<double>::infinity();
    for (size_t k = 0; k < n; ++k) {
        alpha[k] = weights[k] * std::max(0.0, kappas[k]);
        max_logit = std::max(max_logit, alpha[k]);
    }
    double total = 0.0;
    for (auto& a : alpha) {
        a = std::exp(a - max_logit);  // shift-invariant softmax
        total += a;
    }
    for (auto& a : alpha) a /= total;
    return alpha;
}

double neighborhood_variance(const SystemState& state, int node) {
    const size_t d = state.semantics.cols();
    std::vector<int> members{node};
    for (const auto& e : state.graph.edges) {
        if (e.dst == node) members.push_back(e.src);
    }
    if (members.size() <= 1) return 0.0;

    double total = 0.0;
    for (size_t k = 0; k < d; ++k) {
        double mean = 0.0, meansq = 0.0;
        for (int i : members) {
            const double v = state.semantics(i, k);
            mean += v;
            meansq += v * v;
        }
        mean /= static_cast<double>(members.size());
        meansq /= static_cast<double>(members.size());
        total += std::max(0.0, meansq - mean * mean);
    }
    return total / static_cast<double>(d);
}

namespace {

// Context rows c_i = sum_j alpha_ij y_j over in-neighbors j under the
// round's curvature gate (edges without curvature gate at relu(0)).
Matrix build_contexts(const SystemState& state, const CurvatureField& field, CouplingMode mode) {
    const int n = state.graph.n_nodes;
    const size_t d = state.semantics.cols();
    Matrix ctx(n, d, 0.0);

    std::vector<std::vector<int>> in_src(n);
    std::vector<std::vector<double>> in_w(n), in_k(n);
    for (const auto& e : state.graph.edges) {
        in_src[e.dst].push_back(e.src);
        in_w[e.dst].push_back(e.weight);
        const EdgeKappa* ek = field.find(e.src, e.dst);
        in_k[e.dst].push_back(ek ? ek->kappa : 0.0);
    }

    for (int i = 0; i < n; ++i) {
        if (in_src[i].empty()) continue;
        std::vector<double> alpha;
        if (mode == CouplingMode::full) {
            alpha = gated_attention(in_w[i], in_k[i]);
        } else {
            alpha.resize(in_w[i].size());
            double total = std::accumulate(in_w[i].begin(), in_w[i].end(), 0.0);
            for (size_t k = 0; k < alpha.size(); ++k) alpha[k] = in_w[i][k] / total;
        }
        for (size_t k = 0; k < alpha.size(); ++k) {
            kernels::axpy(alpha[k], state.semantics.row(in_src[i][k]), ctx.row(i), d);
        }
    }
    return ctx;
}

}  // namespace

SequenceData build_sequence(const std::vector<SystemState>& states,
                            const std::vector<CurvatureField>& fields, CouplingMode mode) {
    if (states.size() != fields.size())
        throw ContractError("build_sequence: states/curvature misalignment");
    SequenceData seq;
    if (states.empty()) return seq;
    seq.n_agents = static_cast<int>(states.front().active.size());
    seq.d = static_cast<int>(states.front().semantics.cols());

    for (size_t t = 0; t + 1 < states.size(); ++t) {
        const SystemState& st = states[t];
        const CurvatureField& ft = fields[t];
        StepInput step;

        const Matrix ctx = build_contexts(st, ft, mode);
        step.x = Matrix(seq.n_agents, 2 * seq.d);
        for (int i = 0; i < seq.n_agents; ++i) {
            for (int k = 0; k < seq.d; ++k) {
                step.x(i, k) = st.semantics(i, k);
                step.x(i, seq.d + k) = ctx(i, k);
            }
        }
        step.target_y = states[t + 1].semantics;

        step.edges.reserve(ft.kappa.size());
        for (const auto& ek : ft.kappa) {
            StepEdge e;
            e.src = ek.src;
            e.dst = ek.dst;
            e.features[0] = ek.kappa;
            if (mode == CouplingMode::full) {
                e.features[1] = std::sqrt(
                    kernels::l2sq_diff(st.semantics.row(ek.src), st.semantics.row(ek.dst),
                                       seq.d));
                e.features[2] = neighborhood_variance(st, ek.src);
                e.features[3] = neighborhood_variance(st, ek.dst);
            }
            if (const EdgeKappa* next = fields[t + 1].find(ek.src, ek.dst)) {
                e.kappa_next = next->kappa;
                e.scored = true;
            }
            step.edges.push_back(e);
        }
        seq.steps.push_back(std::move(step));
    }
    return seq;
}

// --- forward ------------------------------------------------------------------

GruState make_gru_state(const PredictorParams& params, int n_agents) {
    GruState s;
    s.h = Matrix(n_agents, params.hyper.hidden, 0.0);
    return s;
}

namespace {

struct StepCache {
    // per agent, flattened n_agents x h (and x d for yhat)
    Matrix z, r, n, hu, h_prev, h_new, yhat;
};

// Forward one GRU step for all agents; fills cache when provided.
void gru_step(const PredictorParams& p, const StepInput& step, GruState& state, Matrix& yhat,
              StepCache* cache) {
    const int N = static_cast<int>(step.x.rows());
    const int h = p.hyper.hidden;
    const int d = p.hyper.d;

    std::vector<double> za(h), ra(h), na(h), hu(h), hnew(h);
    for (int i = 0; i < N; ++i) {
        const double* x = step.x.row(i);
        double* hp = state.h.row(i);

        kernels::matvec(p.Wz.data(), x, za.data(), h, 2 * d, false);
        kernels::matvec(p.Uz.data(), hp, za.data(), h, h, true);
        kernels::matvec(p.Wr.data(), x, ra.data(), h, 2 * d, false);
        kernels::matvec(p.Ur.data(), hp, ra.data(), h, h, true);
        kernels::matvec(p.Un.data(), hp, hu.data(), h, h, false);
        kernels::matvec(p.Wn.data(), x, na.data(), h, 2 * d, false);

        for (int k = 0; k < h; ++k) {
            za[k] = sigmoid(za[k] + p.bz[k]);
            ra[k] = sigmoid(ra[k] + p.br[k]);
            na[k] = std::tanh(na[k] + ra[k] * hu[k] + p.bn[k]);
            hnew[k] = (1.0 - za[k]) * na[k] + za[k] * hp[k];
        }

        double* yrow = yhat.row(i);
        kernels::matvec(p.Wo.data(), hnew.data(), yrow, d, h, false);
        for (int k = 0; k < d; ++k) yrow[k] += p.bo[k];

        if (cache) {
            for (int k = 0; k < h; ++k) {
                cache->z(i, k) = za[k];
                cache->r(i, k) = ra[k];
                cache->n(i, k) = na[k];
                cache->hu(i, k) = hu[k];
                cache->h_prev(i, k) = hp[k];
                cache->h_new(i, k) = hnew[k];
            }
            for (int k = 0; k < d; ++k) cache->yhat(i, k) = yrow[k];
        }
        for (int k = 0; k < h; ++k) hp[k] = hnew[k];
    }
}

struct MlpCache {
    std::vector<double> a1, a2;
    double raw = 0.0;
};

double mlp_eval(const PredictorParams& p, const double f[4], MlpCache* cache) {
    const int mh = p.hyper.mlp_hidden;
    std::vector<double> a1(mh), a2(mh);
    kernels::matvec(p.M1.data(), f, a1.data(), mh, 4, false);
    for (int k = 0; k < mh; ++k) a1[k] = std::max(0.0, a1[k] + p.c1[k]);
    kernels::matvec(p.M2.data(), a1.data(), a2.data(), mh, mh, false);
    for (int k = 0; k < mh; ++k) a2[k] = std::max(0.0, a2[k] + p.c2[k]);
    const double raw = kernels::dot(p.m3.data(), a2.data(), mh) + p.c3;
    if (cache) {
        cache->a1 = std::move(a1);
        cache->a2 = std::move(a2);
        cache->raw = raw;
    }
    return std::clamp(raw, p.hyper.kappa_clip_min, p.hyper.kappa_clip_max);
}

}  // namespace

Matrix semantic_step(const PredictorParams& params, const StepInput& step, GruState& state) {
    Matrix yhat(step.x.rows(), params.hyper.d);
    gru_step(params, step, state, yhat, nullptr);
    return yhat;
}

Matrix semantic_predict(const PredictorParams& params, const SystemState& state,
                        const CurvatureField& kappas, GruState& gru, CouplingMode mode) {
    const int n = state.graph.n_nodes;
    const int d = static_cast<int>(state.semantics.cols());
    if (d != params.hyper.d) throw ContractError("semantic_predict: dimension mismatch");

    StepInput step;
    const Matrix ctx = build_contexts(state, kappas, mode);
    step.x = Matrix(n, 2 * d);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < d; ++k) {
            step.x(i, k) = state.semantics(i, k);
            step.x(i, d + k) = ctx(i, k);
        }
    }
    return semantic_step(params, step, gru);
}

double mlp_forward(const PredictorParams& params, const double features[4]) {
    return mlp_eval(params, features, nullptr);
}

std::vector<EdgePrediction> geometric_predict(const PredictorParams& params,
                                              const CurvatureField& kappas,
                                              const SystemState& state, CouplingMode mode) {
    const size_t d = state.semantics.cols();
    std::vector<EdgePrediction> out;
    out.reserve(kappas.kappa.size());
    for (const auto& ek : kappas.kappa) {
        if (!state.graph.find_edge(ek.src, ek.dst))
            throw ContractError("geometric_predict: curvature for an edge absent from the graph");
        double f[4] = {ek.kappa, 0.0, 0.0, 0.0};
        if (mode == CouplingMode::full) {
            f[1] = std::sqrt(
                kernels::l2sq_diff(state.semantics.row(ek.src), state.semantics.row(ek.dst), d));
            f[2] = neighborhood_variance(state, ek.src);
            f[3] = neighborhood_variance(state, ek.dst);
        }
        out.push_back({ek.src, ek.dst, mlp_eval(params, f, nullptr)});
    }
    return out;
}

double joint_loss(const Matrix& pred_y, const Matrix& obs_y, const std::vector<double>& pred_kappa,
                  const std::vector<double>& obs_kappa, double lambda) {
    if (pred_y.rows() != obs_y.rows() || pred_y.cols() != obs_y.cols())
        throw ContractError("joint_loss: semantic shape mismatch");
    if (pred_kappa.size() != obs_kappa.size())
        throw ContractError("joint_loss: curvature length mismatch");
    if (lambda < 0.0) throw ContractError("joint_loss: lambda must be >= 0");

    double loss = 0.0;
    for (size_t i = 0; i < pred_y.rows(); ++i) {
        loss += kernels::l2sq_diff(pred_y.row(i), obs_y.row(i), pred_y.cols());
    }
    for (size_t k = 0; k < pred_kappa.size(); ++k) {
        loss += lambda * std::abs(pred_kappa[k] - obs_kappa[k]);
    }
    if (!std::isfinite(loss)) throw NumericError("joint_loss: non-finite value");
    return loss;
}

// --- loss + gradients over a batch of sequences --------------------------------

namespace {

// Forward + optional full BPTT for one sequence. Returns the summed loss
// over its step pairs and the number of pairs.
std::pair<double, int> sequence_loss(const PredictorParams& p, const SequenceData& seq,
                                     PredictorParams* g) {
    const int h = p.hyper.hidden;
    const int d = p.hyper.d;
    const int N = seq.n_agents;
    const double lambda = p.hyper.lambda;
    const int T = static_cast<int>(seq.steps.size());

    GruState state = make_gru_state(p, N);
    std::vector<StepCache> caches;
    std::vector<std::vector<MlpCache>> mlp_caches;
    if (g) {
        caches.resize(T);
        mlp_caches.resize(T);
    }

    double loss = 0.0;
    Matrix yhat(N, d);
    for (int t = 0; t < T; ++t) {
        const StepInput& step = seq.steps[t];
        StepCache* cache = nullptr;
        if (g) {
            caches[t] = StepCache{Matrix(N, h), Matrix(N, h), Matrix(N, h),
                                  Matrix(N, h), Matrix(N, h), Matrix(N, h), Matrix(N, d)};
            cache = &caches[t];
        }
        gru_step(p, step, state, yhat, cache);
        for (int i = 0; i < N; ++i) {
            loss += kernels::l2sq_diff(yhat.row(i), step.target_y.row(i), d);
        }
        if (g) mlp_caches[t].resize(step.edges.size());
        for (size_t e = 0; e < step.edges.size(); ++e) {
            const StepEdge& edge = step.edges[e];
            if (!edge.scored) continue;
            const double khat =
                mlp_eval(p, edge.features, g ? &mlp_caches[t][e] : nullptr);
            loss += lambda * std::abs(edge.kappa_next - khat);
        }
    }

    if (g) {
        Matrix dh_next(N, h, 0.0);
        std::vector<double> dyhat(d), dh(h), dz(h), dn(h), dna(h), dr(h), dra(h), dza(h),
            dhu(h), dh_prev(h);
        std::vector<double> da1(p.hyper.mlp_hidden), da2(p.hyper.mlp_hidden);

        for (int t = T - 1; t >= 0; --t) {
            const StepInput& step = seq.steps[t];
            const StepCache& c = caches[t];

            // MLP path (no recurrence).
            for (size_t e = 0; e < step.edges.size(); ++e) {
                const StepEdge& edge = step.edges[e];
                if (!edge.scored) continue;
                const MlpCache& mc = mlp_caches[t][e];
                const double khat =
                    std::clamp(mc.raw, p.hyper.kappa_clip_min, p.hyper.kappa_clip_max);
                double draw = -lambda * sign(edge.kappa_next - khat);
                if (mc.raw < p.hyper.kappa_clip_min || mc.raw > p.hyper.kappa_clip_max)
                    draw = 0.0;  // clamp is flat outside the clip range
                if (draw == 0.0) continue;

                const int mh = p.hyper.mlp_hidden;
                kernels::axpy(draw, mc.a2.data(), g->m3.data(), mh);
                g->c3 += draw;
                for (int k = 0; k < mh; ++k)
                    da2[k] = (mc.a2[k] > 0.0) ? draw * p.m3[k] : 0.0;
                kernels::ger(g->M2.data(), da2.data(), mc.a1.data(), mh, mh);
                kernels::axpy(1.0, da2.data(), g->c2.data(), mh);
                std::fill(da1.begin(), da1.end(), 0.0);
                kernels::matvec_t(p.M2.data(), da2.data(), da1.data(), mh, mh);
                for (int k = 0; k < mh; ++k) {
                    if (mc.a1[k] <= 0.0) da1[k] = 0.0;
                }
                kernels::ger(g->M1.data(), da1.data(), edge.features, mh, 4);
                kernels::axpy(1.0, da1.data(), g->c1.data(), mh);
            }

            // GRU path with BPTT.
            for (int i = 0; i < N; ++i) {
                const double* x = step.x.row(i);
                for (int k = 0; k < d; ++k)
                    dyhat[k] = 2.0 * (c.yhat(i, k) - step.target_y(i, k));

                std::copy(dh_next.row(i), dh_next.row(i) + h, dh.begin());
                kernels::matvec_t(p.Wo.data(), dyhat.data(), dh.data(), d, h);
                kernels::ger(g->Wo.data(), dyhat.data(), c.h_new.row(i), d, h);
                kernels::axpy(1.0, dyhat.data(), g->bo.data(), d);

                for (int k = 0; k < h; ++k) {
                    const double zk = c.z(i, k), nk = c.n(i, k);
                    dz[k] = dh[k] * (c.h_prev(i, k) - nk);
                    dn[k] = dh[k] * (1.0 - zk);
                    dh_prev[k] = dh[k] * zk;
                    dna[k] = dn[k] * (1.0 - nk * nk);
                    dr[k] = dna[k] * c.hu(i, k);
                    dhu[k] = dna[k] * c.r(i, k);
                    dra[k] = dr[k] * c.r(i, k) * (1.0 - c.r(i, k));
                    dza[k] = dz[k] * zk * (1.0 - zk);
                }

                kernels::ger(g->Wn.data(), dna.data(), x, h, 2 * d);
                kernels::axpy(1.0, dna.data(), g->bn.data(), h);
                kernels::ger(g->Un.data(), dhu.data(), c.h_prev.row(i), h, h);
                kernels::matvec_t(p.Un.data(), dhu.data(), dh_prev.data(), h, h);

                kernels::ger(g->Wr.data(), dra.data(), x, h, 2 * d);
                kernels::axpy(1.0, dra.data(), g->br.data(), h);
                kernels::ger(g->Ur.data(), dra.data(), c.h_prev.row(i), h, h);
                kernels::matvec_t(p.Ur.data(), dra.data(), dh_prev.data(), h, h);

                kernels::ger(g->Wz.data(), dza.data(), x, h, 2 * d);
                kernels::axpy(1.0, dza.data(), g->bz.data(), h);
                kernels::ger(g->Uz.data(), dza.data(), c.h_prev.row(i), h, h);
                kernels::matvec_t(p.Uz.data(), dza.data(), dh_prev.data(), h, h);

                std::copy(dh_prev.begin(), dh_prev.end(), dh_next.row(i));
            }
        }
    }
    return {loss, T};
}

}  // namespace

double batch_loss(const PredictorParams& params, const std::vector<SequenceData>& batch,
                  PredictorParams* grads) {
    if (grads) {
        grads->hyper = params.hyper;
        grads->allocate();
    }
    double loss = 0.0;
    int pairs = 0;
    for (const auto& seq : batch) {
        auto [l, n] = sequence_loss(params, seq, grads);
        loss += l;
        pairs += n;
    }
    if (pairs == 0) throw ContractError("batch_loss: no step pairs in batch");
    const double scale = 1.0 / static_cast<double>(pairs);
    if (grads) {
        grads->visit([&](const std::string&, double* p, size_t n) {
            for (size_t k = 0; k < n; ++k) p[k] *= scale;
        });
    }
    return loss * scale;
}

// --- training -------------------------------------------------------------------

TrainResult train(const std::vector<SequenceData>& sequences, const Hyper& hyper) {
    if (sequences.empty()) throw ContractError("train: need at least one sequence");

    TrainResult result;
    result.params.hyper = hyper;
    result.params.init(hyper.seed);
    result.initial_loss = batch_loss(result.params, sequences, nullptr);

    std::vector<size_t> order(sequences.size());
    std::iota(order.begin(), order.end(), 0);

    PredictorParams grads;
    const int bs = std::max(1, hyper.batch_size);
    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        Rng shuffle_rng(child_seed(hyper.seed, "epoch-shuffle", epoch));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        int epoch_pairs = 0;
        for (size_t start = 0; start < order.size(); start += bs) {
            grads.hyper = hyper;
            grads.allocate();
            double loss = 0.0;
            int pairs = 0;
            for (size_t k = start; k < std::min(order.size(), start + bs); ++k) {
                auto [l, n] = sequence_loss(result.params, sequences[order[k]], &grads);
                loss += l;
                pairs += n;
            }
            if (!std::isfinite(loss))
                throw TrainingError("training diverged (non-finite loss)", epoch);
            const double scale = 1.0 / static_cast<double>(pairs);
            const double step = hyper.learning_rate * scale;

            // theta -= lr * grad (both visited in the same fixed order)
            std::vector<std::pair<double*, size_t>> blocks;
            result.params.visit([&](const std::string&, double* p, size_t n) {
                blocks.push_back({p, n});
            });
            size_t bi = 0;
            grads.visit([&](const std::string&, double* gp, size_t n) {
                kernels::axpy(-step, gp, blocks[bi].first, n);
                ++bi;
            });

            epoch_loss += loss;
            epoch_pairs += pairs;
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(epoch_pairs));
    }
    return result;
}

TrainResult train_on_trajectories(const std::vector<Trajectory>& normals,
                                  const FlowConfig& flow_cfg, const GeometryConfig& geo_cfg,
                                  Hyper hyper, CouplingMode mode) {
    std::vector<SequenceData> sequences;
    sequences.reserve(normals.size());
    for (const auto& traj : normals) {
        const auto states = build_states(traj, flow_cfg);
        std::vector<FlowGraph> graphs;
        graphs.reserve(states.size());
        for (const auto& st : states) graphs.push_back(st.graph);
        const auto fields = curvature_field(graphs, geo_cfg);
        hyper.d = traj.dim;
        auto seq = build_sequence(states, fields, mode);
        seq.traj_id = traj.id;
        sequences.push_back(std::move(seq));
    }
    hyper.kappa_clip_min = geo_cfg.clip_min;
    hyper.kappa_clip_max = 1.0;
    return train(sequences, hyper);
}

// --- gradient verification -------------------------------------------------------

PredictorParams analytic_gradients(const PredictorParams& params,
                                   const std::vector<SequenceData>& batch) {
    PredictorParams grads;
    batch_loss(params, batch, &grads);
    return grads;
}

PredictorParams finite_difference_gradients(const PredictorParams& params,
                                            const std::vector<SequenceData>& batch, double step) {
    PredictorParams work = params;
    PredictorParams fd;
    fd.hyper = params.hyper;
    fd.allocate();

    std::vector<std::pair<double*, size_t>> fd_blocks;
    fd.visit([&](const std::string&, double* p, size_t n) { fd_blocks.push_back({p, n}); });

    size_t bi = 0;
    work.visit([&](const std::string&, double* p, size_t n) {
        for (size_t k = 0; k < n; ++k) {
            const double saved = p[k];
            p[k] = saved + step;
            const double up = batch_loss(work, batch, nullptr);
            p[k] = saved - step;
            const double down = batch_loss(work, batch, nullptr);
            p[k] = saved;
            fd_blocks[bi].first[k] = (up - down) / (2.0 * step);
        }
        ++bi;
    });
    return fd;
}

GradCheckReport compare_gradients(const PredictorParams& analytic, const PredictorParams& fd,
                                  double tolerance) {
    GradCheckReport report;
    std::vector<std::tuple<std::string, const double*, size_t>> a_blocks;
    analytic.visit_const([&](const std::string& name, const double* p, size_t n) {
        a_blocks.push_back({name, p, n});
    });
    size_t bi = 0;
    fd.visit_const([&](const std::string& name, const double* p, size_t n) {
        auto [a_name, a_ptr, a_n] = a_blocks[bi];
        (void)a_name;
        for (size_t k = 0; k < std::min(n, a_n); ++k) {
            const double ga = a_ptr[k], gf = p[k];
            const double denom = std::max(1e-5, std::abs(ga) + std::abs(gf));
            const double rel = std::abs(ga - gf) / denom;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = name + "[" + std::to_string(k) + "]";
            }
        }
        ++bi;
    });
    report.pass = report.max_rel_error < tolerance;
    return report;
}

GradCheckReport gradient_check(const PredictorParams& params,
                               const std::vector<SequenceData>& batch, double tolerance) {
    const PredictorParams ga = analytic_gradients(params, batch);
    const PredictorParams gf = finite_difference_gradients(params, batch, 1e-5);
    return compare_gradients(ga, gf, tolerance);
}

// --- serialization ----------------------------------------------------------------

std::string params_to_json(const PredictorParams& params) {
    nlohmann::ordered_json j;
    j["format"] = 1;
    nlohmann::ordered_json h;
    h["d"] = params.hyper.d;
    h["hidden"] = params.hyper.hidden;
    h["mlp_hidden"] = params.hyper.mlp_hidden;
    h["lambda"] = params.hyper.lambda;
    h["learning_rate"] = params.hyper.learning_rate;
    h["epochs"] = params.hyper.epochs;
    h["batch_size"] = params.hyper.batch_size;
    h["seed"] = params.hyper.seed;
    h["init_scale"] = params.hyper.init_scale;
    h["kappa_clip_min"] = params.hyper.kappa_clip_min;
    h["kappa_clip_max"] = params.hyper.kappa_clip_max;
    j["hyper"] = h;
    nlohmann::ordered_json tensors;
    params.visit_const([&](const std::string& name, const double* p, size_t n) {
        tensors[name] = std::vector<double>(p, p + n);
    });
    j["tensors"] = tensors;
    return j.dump();
}

PredictorParams params_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("checkpoint parse error: ") + e.what());
    }
    if (!j.contains("format") || j["format"].get<int>() != 1)
        throw SchemaError("unsupported checkpoint format");

    PredictorParams params;
    const auto& h = j.at("hyper");
    params.hyper.d = h.at("d").get<int>();
    params.hyper.hidden = h.at("hidden").get<int>();
    params.hyper.mlp_hidden = h.at("mlp_hidden").get<int>();
    params.hyper.lambda = h.at("lambda").get<double>();
    params.hyper.learning_rate = h.at("learning_rate").get<double>();
    params.hyper.epochs = h.at("epochs").get<int>();
    params.hyper.batch_size = h.at("batch_size").get<int>();
    params.hyper.seed = h.at("seed").get<uint64_t>();
    params.hyper.init_scale = h.at("init_scale").get<double>();
    params.hyper.kappa_clip_min = h.at("kappa_clip_min").get<double>();
    params.hyper.kappa_clip_max = h.at("kappa_clip_max").get<double>();
    params.allocate();

    const auto& tensors = j.at("tensors");
    params.visit([&](const std::string& name, double* p, size_t n) {
        const auto v = tensors.at(name).get<std::vector<double>>();
        if (v.size() != n) throw SchemaError("checkpoint tensor shape mismatch: " + name);
        std::copy(v.begin(), v.end(), p);
    });
    return params;
}

}  // namespace flowaudit
