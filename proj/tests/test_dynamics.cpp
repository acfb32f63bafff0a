#include <doctest.h>

#include <cmath>

#include "flowaudit/dynamics.hpp"
#include "flowaudit/errors.hpp"
#include "flowaudit/rng.hpp"
#include "oracles/oracles.hpp"

using namespace flowaudit;

namespace {

Hyper small_hyper(int d = 3, int h = 5, int mh = 6) {
    Hyper hy;
    hy.d = d;
    hy.hidden = h;
    hy.mlp_hidden = mh;
    hy.lambda = 1.0;
    return hy;
}

SequenceData random_sequence(Rng& rng, const Hyper& hy, int n_agents, int steps) {
    SequenceData seq;
    seq.n_agents = n_agents;
    seq.d = hy.d;
    for (int t = 0; t < steps; ++t) {
        StepInput step;
        step.x = Matrix(n_agents, 2 * hy.d);
        step.target_y = Matrix(n_agents, hy.d);
        for (int i = 0; i < n_agents; ++i) {
            for (int k = 0; k < 2 * hy.d; ++k) step.x(i, k) = rng.normal(0.0, 0.8);
            for (int k = 0; k < hy.d; ++k) step.target_y(i, k) = rng.normal(0.0, 0.8);
        }
        const int n_edges = 1 + static_cast<int>(rng.uniform_index(4));
        for (int e = 0; e < n_edges; ++e) {
            StepEdge edge;
            edge.src = static_cast<int>(rng.uniform_index(n_agents));
            edge.dst = static_cast<int>(rng.uniform_index(n_agents));
            edge.features[0] = rng.uniform(-1.0, 1.0);
            edge.features[1] = rng.uniform(0.0, 2.0);
            edge.features[2] = rng.uniform(0.0, 0.3);
            edge.features[3] = rng.uniform(0.0, 0.3);
            edge.kappa_next = rng.uniform(-1.0, 1.0);
            edge.scored = true;
            step.edges.push_back(edge);
        }
        seq.steps.push_back(std::move(step));
    }
    return seq;
}

// The joint loss has kinks (relu, |.|, output clamp). A batch counts as
// non-degenerate for finite differencing when every such hinge sits at
// least `margin` away from its switching point.
bool non_degenerate(const PredictorParams& p, const std::vector<SequenceData>& batch,
                    double margin) {
    const int mh = p.hyper.mlp_hidden;
    for (const auto& seq : batch) {
        for (const auto& step : seq.steps) {
            for (const auto& edge : step.edges) {
                if (!edge.scored) continue;
                std::vector<double> a1(mh), a2(mh);
                for (int i = 0; i < mh; ++i) {
                    double v = p.c1[i];
                    for (int j = 0; j < 4; ++j) v += p.M1(i, j) * edge.features[j];
                    if (std::abs(v) < margin) return false;
                    a1[i] = std::max(0.0, v);
                }
                for (int i = 0; i < mh; ++i) {
                    double v = p.c2[i];
                    for (int j = 0; j < mh; ++j) v += p.M2(i, j) * a1[j];
                    if (std::abs(v) < margin) return false;
                    a2[i] = std::max(0.0, v);
                }
                double raw = p.c3;
                for (int j = 0; j < mh; ++j) raw += p.m3[j] * a2[j];
                if (std::abs(raw - p.hyper.kappa_clip_min) < margin) return false;
                if (std::abs(raw - p.hyper.kappa_clip_max) < margin) return false;
                const double khat =
                    std::clamp(raw, p.hyper.kappa_clip_min, p.hyper.kappa_clip_max);
                if (std::abs(edge.kappa_next - khat) < margin) return false;
            }
        }
    }
    return true;
}

std::pair<PredictorParams, std::vector<SequenceData>> well_conditioned_instance(uint64_t seed) {
    for (uint64_t attempt = 0;; ++attempt) {
        Rng rng(child_seed(seed, "gradcheck", attempt));
        PredictorParams p;
        p.hyper = small_hyper();
        p.hyper.seed = rng.next_u64();
        p.init(p.hyper.seed);
        std::vector<SequenceData> batch;
        batch.push_back(random_sequence(rng, p.hyper, 3, 4));
        if (non_degenerate(p, batch, 1e-3)) return {std::move(p), std::move(batch)};
    }
}

}  // namespace

TEST_CASE("gated attention analytic cases") {
    SUBCASE("non-positive curvature flattens to uniform") {
        const auto a = gated_attention({0.7, 0.4}, {-0.5, 0.0});
        CHECK(a[0] == doctest::Approx(0.5));
        CHECK(a[1] == doctest::Approx(0.5));
    }
    SUBCASE("single neighbor takes all mass") {
        const auto a = gated_attention({0.3}, {0.9});
        CHECK(a[0] == doctest::Approx(1.0));
    }
    SUBCASE("w=1 and kappa=(ln2, 0) gives (2/3, 1/3)") {
        const auto a = gated_attention({1.0, 1.0}, {std::log(2.0), 0.0});
        CHECK(a[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
        CHECK(a[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
    SUBCASE("empty neighbor set gives an empty map") {
        CHECK(gated_attention({}, {}).empty());
    }
}

TEST_CASE("gated attention properties") {
    Rng rng(31);
    for (int rep = 0; rep < 200; ++rep) {
        const size_t n = 1 + rng.uniform_index(6);
        std::vector<double> w(n), k(n);
        for (auto& v : w) v = rng.uniform(0.0, 1.0);
        for (auto& v : k) v = rng.uniform(-1.0, 1.0);
        const auto a = gated_attention(w, k);
        double total = 0.0;
        for (double v : a) total += v;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

        // logit shift invariance: w=1, kappa shifted by a positive constant
        if (rep % 4 == 0) {
            std::vector<double> ones(n, 1.0), kp(n), kps(n);
            const double c = rng.uniform(0.1, 1.0);
            for (size_t i = 0; i < n; ++i) {
                kp[i] = rng.uniform(0.2, 1.5);
                kps[i] = kp[i] + c;
            }
            const auto a1 = gated_attention(ones, kp);
            const auto a2 = gated_attention(ones, kps);
            for (size_t i = 0; i < n; ++i)
                CHECK(a1[i] == doctest::Approx(a2[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("monotone gating: raising a positive kappa raises its weight") {
    const auto lo = gated_attention({1.0, 1.0}, {0.2, 0.5});
    const auto hi = gated_attention({1.0, 1.0}, {0.4, 0.5});
    CHECK(hi[0] > lo[0]);
}

TEST_CASE("neighborhood variance") {
    SystemState st;
    st.graph.n_nodes = 3;
    st.graph.edges = {{1, 0, 0, 0, 0.5}, {2, 0, 0, 0, 0.5}};  // 1->0, 2->0
    st.semantics = Matrix(3, 1);
    st.active = {1, 1, 1};

    SUBCASE("identical embeddings give zero") {
        for (int i = 0; i < 3; ++i) st.semantics(i, 0) = 2.5;
        CHECK(neighborhood_variance(st, 0) == doctest::Approx(0.0));
    }
    SUBCASE("population variance of {0, 2} with self at 1 in d=1") {
        // in-neighborhood of 0 including self: {0, 1, 2}
        st.semantics(0, 0) = 1.0;
        st.semantics(1, 0) = 0.0;
        st.semantics(2, 0) = 2.0;
        CHECK(neighborhood_variance(st, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    }
    SUBCASE("singleton neighborhood is zero") {
        CHECK(neighborhood_variance(st, 1) == doctest::Approx(0.0));
    }
}

TEST_CASE("neighborhood variance matches a direct two-pass computation") {
    Rng rng(55);
    for (int rep = 0; rep < 100; ++rep) {
        const int n = 6, d = 4;
        SystemState st;
        st.graph.n_nodes = n;
        for (int j = 1; j < n; ++j) {
            if (rng.bernoulli(0.7)) st.graph.edges.push_back({j, 0, 0, 0, 1.0});
        }
        st.semantics = Matrix(n, d);
        for (int i = 0; i < n; ++i) {
            for (int k = 0; k < d; ++k) st.semantics(i, k) = rng.normal();
        }
        st.active.assign(n, 1);

        std::vector<int> members = {0};
        for (const auto& e : st.graph.edges) members.push_back(e.src);
        double expect = 0.0;
        for (int k = 0; k < d; ++k) {
            double mean = 0.0;
            for (int m : members) mean += st.semantics(m, k);
            mean /= members.size();
            double var = 0.0;
            for (int m : members) {
                const double diff = st.semantics(m, k) - mean;
                var += diff * diff;
            }
            expect += var / members.size();
        }
        expect /= d;
        CHECK(neighborhood_variance(st, 0) == doctest::Approx(expect).epsilon(1e-10));
    }
}

TEST_CASE("zero parameters and zero hidden state produce the zero output") {
    PredictorParams p;
    p.hyper = small_hyper();
    p.allocate();  // all zeros
    SystemState st;
    st.graph.n_nodes = 2;
    st.semantics = Matrix(2, 3, 0.7);
    st.active = {1, 1};
    CurvatureField field;
    GruState gru = make_gru_state(p, 2);
    const Matrix yhat = semantic_predict(p, st, field, gru, CouplingMode::full);
    for (size_t i = 0; i < yhat.rows(); ++i) {
        for (size_t k = 0; k < yhat.cols(); ++k) CHECK(yhat(i, k) == doctest::Approx(0.0));
    }
}

TEST_CASE("agents without in-neighbors depend only on their own state") {
    PredictorParams p;
    p.hyper = small_hyper();
    p.init(91);

    auto make_state = [&](double other_value) {
        SystemState st;
        st.graph.n_nodes = 2;  // no edges at all
        st.semantics = Matrix(2, 3);
        for (int k = 0; k < 3; ++k) {
            st.semantics(0, k) = 0.4 * (k + 1);
            st.semantics(1, k) = other_value;
        }
        st.active = {1, 1};
        return st;
    };
    CurvatureField field;
    GruState g1 = make_gru_state(p, 2), g2 = make_gru_state(p, 2);
    const Matrix y1 = semantic_predict(p, make_state(1.0), field, g1, CouplingMode::full);
    const Matrix y2 = semantic_predict(p, make_state(-2.0), field, g2, CouplingMode::full);
    for (size_t k = 0; k < y1.cols(); ++k) CHECK(y1(0, k) == y2(0, k));
}

TEST_CASE("forward pass matches the clean-room reference within 1e-10") {
    Rng rng(2024);
    for (int rep = 0; rep < 20; ++rep) {
        PredictorParams p;
        p.hyper = small_hyper(4, 6, 5);
        p.init(rng.next_u64());
        const SequenceData seq = random_sequence(rng, p.hyper, 3, 5);

        GruState state = make_gru_state(p, 3);
        std::vector<std::vector<double>> ref_h(3, std::vector<double>(p.hyper.hidden, 0.0));
        for (const auto& step : seq.steps) {
            const Matrix yhat = semantic_step(p, step, state);
            for (int i = 0; i < 3; ++i) {
                std::vector<double> x(step.x.row(i), step.x.row(i) + 2 * p.hyper.d);
                const auto y_ref = oracles::ref_gru_step(p, x, ref_h[i]);
                for (int k = 0; k < p.hyper.d; ++k) {
                    CHECK(std::abs(yhat(i, k) - y_ref[k]) < 1e-10);
                }
            }
        }
    }
}

TEST_CASE("geometric predictor matches the clean-room MLP and clamps") {
    Rng rng(606);
    PredictorParams p;
    p.hyper = small_hyper(3, 4, 7);
    p.init(rng.next_u64());

    SUBCASE("zero weights output the final bias everywhere") {
        PredictorParams z;
        z.hyper = p.hyper;
        z.allocate();
        z.c3 = 0.25;
        const double f1[4] = {0.5, 1.0, 0.1, 0.2};
        const double f2[4] = {-0.5, 0.3, 0.0, 0.0};
        CHECK(mlp_forward(z, f1) == doctest::Approx(0.25));
        CHECK(mlp_forward(z, f2) == doctest::Approx(0.25));
    }
    SUBCASE("random instances match the reference") {
        for (int rep = 0; rep < 200; ++rep) {
            double f[4] = {rng.uniform(-1.0, 1.0), rng.uniform(0.0, 2.0),
                           rng.uniform(0.0, 0.5), rng.uniform(0.0, 0.5)};
            CHECK(std::abs(mlp_forward(p, f) - oracles::ref_mlp(p, f)) < 1e-10);
        }
    }
    SUBCASE("identical inputs on two edges give identical outputs") {
        const double f[4] = {0.3, 0.6, 0.05, 0.02};
        CHECK(mlp_forward(p, f) == mlp_forward(p, f));
    }
}

TEST_CASE("geometric_predict rejects curvature for edges absent from the graph") {
    PredictorParams p;
    p.hyper = small_hyper();
    p.init(4);
    SystemState st;
    st.graph.n_nodes = 2;  // no edges
    st.semantics = Matrix(2, 3, 0.1);
    st.active = {1, 1};
    CurvatureField field;
    field.kappa = {{0, 1, 0.4}};
    CHECK_THROWS_AS(geometric_predict(p, field, st, CouplingMode::full), ContractError);
}

TEST_CASE("joint loss analytic cases") {
    Matrix obs(2, 2, 0.0);
    Matrix pred = obs;
    SUBCASE("perfect prediction scores zero") {
        CHECK(joint_loss(pred, obs, {0.3}, {0.3}, 1.0) == doctest::Approx(0.0));
    }
    SUBCASE("norm-0.5 error plus 0.1 curvature error at lambda 1 gives 0.35") {
        pred(0, 0) = 0.3;
        pred(0, 1) = 0.4;  // error vector norm 0.5
        CHECK(joint_loss(pred, obs, {0.5}, {0.6}, 1.0) ==
              doctest::Approx(0.35).epsilon(1e-12));
    }
    SUBCASE("lambda 0 reduces to the semantic part") {
        pred(0, 0) = 1.0;
        CHECK(joint_loss(pred, obs, {0.0}, {5.0}, 0.0) == doctest::Approx(1.0));
    }
    SUBCASE("NaN input is a numeric error") {
        pred(0, 0) = std::nan("");
        CHECK_THROWS_AS(joint_loss(pred, obs, {}, {}, 1.0), NumericError);
    }
}

TEST_CASE("analytic gradients match central finite differences") {
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        auto [params, batch] = well_conditioned_instance(seed);
        const auto report = gradient_check(params, batch, 1e-4);
        INFO("seed ", seed, " worst ", report.worst_param, " rel ", report.max_rel_error);
        CHECK(report.pass);
    }
}

TEST_CASE("zero-loss batch has near-zero gradients") {
    PredictorParams p;
    p.hyper = small_hyper();
    p.allocate();  // zero params -> zero predictions
    SequenceData seq;
    seq.n_agents = 2;
    seq.d = p.hyper.d;
    StepInput step;
    step.x = Matrix(2, 2 * p.hyper.d, 0.3);
    step.target_y = Matrix(2, p.hyper.d, 0.0);  // matches the zero output
    seq.steps.push_back(step);
    const auto grads = analytic_gradients(p, {seq});
    double max_abs = 0.0;
    grads.visit_const([&](const std::string&, const double* v, size_t n) {
        for (size_t k = 0; k < n; ++k) max_abs = std::max(max_abs, std::abs(v[k]));
    });
    // tanh'(0) etc. are nonzero, but the loss is exactly flat at this point
    CHECK(max_abs == doctest::Approx(0.0));
}

TEST_CASE("corrupted gradient fails the check and names a parameter") {
    auto [params, batch] = well_conditioned_instance(77);
    auto ga = analytic_gradients(params, batch);
    const auto gf = finite_difference_gradients(params, batch, 1e-5);
    ga.Wn(0, 0) += 0.5;  // deliberate corruption
    const auto report = compare_gradients(ga, gf, 1e-4);
    CHECK(!report.pass);
    CHECK(report.worst_param == "gru.Wn[0]");
}

TEST_CASE("training basics") {
    Rng rng(13);
    Hyper hy = small_hyper(3, 5, 5);
    hy.epochs = 0;
    hy.seed = 99;
    std::vector<SequenceData> data;
    for (int i = 0; i < 4; ++i) data.push_back(random_sequence(rng, hy, 3, 6));

    SUBCASE("zero epochs returns the initialization unchanged") {
        const auto r = train(data, hy);
        PredictorParams init;
        init.hyper = hy;
        init.init(hy.seed);
        bool equal = true;
        r.params.visit_const([&](const std::string& name, const double* v, size_t n) {
            init.visit([&](const std::string& name2, double* w, size_t n2) {
                if (name == name2 && n == n2) {
                    for (size_t k = 0; k < n; ++k) equal = equal && (v[k] == w[k]);
                }
            });
        });
        CHECK(equal);
    }
    SUBCASE("same seed twice gives bit-identical parameters") {
        hy.epochs = 5;
        const auto r1 = train(data, hy);
        const auto r2 = train(data, hy);
        bool equal = true;
        std::vector<std::pair<const double*, size_t>> blocks;
        r1.params.visit_const([&](const std::string&, const double* v, size_t n) {
            blocks.push_back({v, n});
        });
        size_t bi = 0;
        r2.params.visit_const([&](const std::string&, const double* v, size_t n) {
            for (size_t k = 0; k < n; ++k) equal = equal && (v[k] == blocks[bi].first[k]);
            ++bi;
        });
        CHECK(equal);
    }
    SUBCASE("loss decreases on a learnable target") {
        // targets are a fixed linear map of inputs: y = 0.5 * x[:d]
        for (auto& seq : data) {
            for (auto& step : seq.steps) {
                for (int i = 0; i < seq.n_agents; ++i) {
                    for (int k = 0; k < seq.d; ++k) step.target_y(i, k) = 0.5 * step.x(i, k);
                }
                step.edges.clear();
            }
        }
        hy.epochs = 50;
        hy.learning_rate = 0.05;
        const auto r = train(data, hy);
        CHECK(r.epoch_loss.back() < r.initial_loss);
    }
    SUBCASE("loss non-increasing on a fixed full batch at tiny learning rate") {
        hy.epochs = 20;
        hy.learning_rate = 1e-4;
        hy.batch_size = static_cast<int>(data.size());
        const auto r = train(data, hy);
        double prev = r.initial_loss;
        for (double l : r.epoch_loss) {
            CHECK(l <= prev + 1e-12);
            prev = l;
        }
    }
}

TEST_CASE("checkpoint serialization round-trips bit-exactly") {
    PredictorParams p;
    p.hyper = small_hyper(4, 7, 6);
    p.init(123456);
    const std::string text = params_to_json(p);
    const PredictorParams q = params_from_json(text);
    CHECK(params_to_json(q) == text);
    bool equal = true;
    std::vector<std::pair<const double*, size_t>> blocks;
    p.visit_const([&](const std::string&, const double* v, size_t n) {
        blocks.push_back({v, n});
    });
    size_t bi = 0;
    q.visit_const([&](const std::string&, const double* v, size_t n) {
        for (size_t k = 0; k < n; ++k) equal = equal && (v[k] == blocks[bi].first[k]);
        ++bi;
    });
    CHECK(equal);
}
