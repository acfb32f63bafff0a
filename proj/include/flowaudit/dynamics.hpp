#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flowaudit/flow_graph.hpp"
#include "flowaudit/geometry.hpp"
#include "flowaudit/matrix.hpp"
#include "flowaudit/trajectory.hpp"

namespace flowaudit {

// Coupled next-round predictor: a curvature-gated GRU over agent embeddings
// (semantic path) and a small MLP over per-edge geometry features
// (geometric path), trained jointly on normal trajectories.

struct Hyper {
    int d = 16;                  // embedding dim, given by data
    int hidden = 32;             // GRU hidden size
    int mlp_hidden = 32;         // width of both MLP hidden layers
    double lambda = 1.0;         // weight of the curvature term in the joint loss
    double learning_rate = 1e-3;
    int epochs = 60;
    int batch_size = 8;
    uint64_t seed = 0;
    double init_scale = 0.1;     // uniform [-s, s] initialization
    double kappa_clip_min = -2.0;
    double kappa_clip_max = 1.0;
};

// Attention over in-neighbors, gate-free when `gated` is false (ablation:
// weight-proportional mixing instead of exp(w * relu(kappa)) softmax).
enum class CouplingMode { full, uncoupled };

struct PredictorParams {
    Hyper hyper;

    // GRU cell, input [y_i ; context_i] of size 2d, hidden h, output d.
    Matrix Wz, Wr, Wn;           // h x 2d
    Matrix Uz, Ur, Un;           // h x h
    std::vector<double> bz, br, bn;
    Matrix Wo;                   // d x h projection to embedding space
    std::vector<double> bo;

    // Edge MLP over [kappa, tension, var_src, var_dst].
    Matrix M1;                   // mlp_hidden x 4
    std::vector<double> c1;
    Matrix M2;                   // mlp_hidden x mlp_hidden
    std::vector<double> c2;
    std::vector<double> m3;      // 1 x mlp_hidden
    double c3 = 0.0;

    void allocate();                      // zero tensors with hyper's shapes
    void init(uint64_t seed);             // seeded uniform [-init_scale, init_scale]
    void fill(double v);

    // Iterate named parameter blocks (for updates, FD, serialization).
    void visit(const std::function<void(const std::string&, double*, size_t)>& fn);
    void visit_const(
        const std::function<void(const std::string&, const double*, size_t)>& fn) const;
    size_t n_params() const;
};

// softmax over logits w_j * relu(kappa_j); returns weights summing to 1.
std::vector<double> gated_attention(const std::vector<double>& weights,
                                    const std::vector<double>& kappas);

// Mean over coordinates of the per-coordinate population variance of
// {y_k : k in in-neighbors(node) or k == node}.
double neighborhood_variance(const SystemState& state, int node);

// --- precomputed step inputs -------------------------------------------------
// Everything the predictor consumes is a pure function of the data (the
// attention has no learnable parameters), so sequences are built once.

struct StepEdge {
    int src = 0;
    int dst = 0;
    double features[4] = {0, 0, 0, 0};  // kappa, tension, var_src, var_dst
    double kappa_next = 0.0;            // target; valid when scored
    bool scored = false;                // edge has curvature at both t and t+1
};

struct StepInput {
    Matrix x;          // n_agents x 2d: [y_i ; context_i]
    Matrix target_y;   // n_agents x d: Y_{t+1}
    std::vector<StepEdge> edges;
};

struct SequenceData {
    std::string traj_id;
    int n_agents = 0;
    int d = 0;
    std::vector<StepInput> steps;  // step t predicts round t+1
};

SequenceData build_sequence(const std::vector<SystemState>& states,
                            const std::vector<CurvatureField>& fields, CouplingMode mode);

// --- forward passes ----------------------------------------------------------

struct GruState {
    Matrix h;  // n_agents x hidden
};

GruState make_gru_state(const PredictorParams& params, int n_agents);

// One GRU step for every agent from the precomputed inputs; returns Y_hat
// for the next round and advances `state`.
Matrix semantic_step(const PredictorParams& params, const StepInput& step, GruState& state);

// Spec-level wrappers operating on a SystemState + CurvatureField.
Matrix semantic_predict(const PredictorParams& params, const SystemState& state,
                        const CurvatureField& kappas, GruState& gru, CouplingMode mode);

struct EdgePrediction {
    int src = 0;
    int dst = 0;
    double kappa_hat = 0.0;
};

// Next-round curvature for every edge carrying curvature at t. Throws
// ContractError if the field references an edge absent from the graph.
std::vector<EdgePrediction> geometric_predict(const PredictorParams& params,
                                              const CurvatureField& kappas,
                                              const SystemState& state, CouplingMode mode);

double mlp_forward(const PredictorParams& params, const double features[4]);

// Joint loss for one (prediction, observation) pair:
// sum_i ||y_i - yhat_i||^2 + lambda * sum_e |kappa_e - kappahat_e|.
double joint_loss(const Matrix& pred_y, const Matrix& obs_y,
                  const std::vector<double>& pred_kappa, const std::vector<double>& obs_kappa,
                  double lambda);

// --- training ----------------------------------------------------------------

struct TrainResult {
    PredictorParams params;
    std::vector<double> epoch_loss;  // mean per-pair loss, one entry per epoch
    double initial_loss = 0.0;       // before the first update
};

// Mini-batch gradient descent with full backpropagation through time.
// Deterministic given hyper.seed. Throws TrainingError on divergence.
TrainResult train(const std::vector<SequenceData>& sequences, const Hyper& hyper);

// Convenience: build states, curvature and sequences from trajectories.
TrainResult train_on_trajectories(const std::vector<Trajectory>& normals,
                                  const FlowConfig& flow_cfg, const GeometryConfig& geo_cfg,
                                  Hyper hyper, CouplingMode mode);

// Mean per-pair loss of the batch plus (optionally) its gradients.
double batch_loss(const PredictorParams& params, const std::vector<SequenceData>& batch,
                  PredictorParams* grads);

// --- gradient verification ----------------------------------------------------

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    bool pass = false;
};

PredictorParams analytic_gradients(const PredictorParams& params,
                                   const std::vector<SequenceData>& batch);
PredictorParams finite_difference_gradients(const PredictorParams& params,
                                            const std::vector<SequenceData>& batch, double step);
GradCheckReport compare_gradients(const PredictorParams& analytic, const PredictorParams& fd,
                                  double tolerance);
GradCheckReport gradient_check(const PredictorParams& params,
                               const std::vector<SequenceData>& batch, double tolerance);

// --- serialization -----------------------------------------------------------

std::string params_to_json(const PredictorParams& params);
PredictorParams params_from_json(const std::string& text);

}  // namespace flowaudit
