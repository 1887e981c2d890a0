#pragma once

#include <atomic>
#include <cstdint>
#include <vector>

#include "rtlppa/encoder.hpp"
#include "rtlppa/matrix.hpp"
#include "rtlppa/normalize.hpp"
#include "rtlppa/rng.hpp"

namespace rtlppa {

struct GatingNetwork {
    Matrix weight;  // N x d
    bool has_bias = false;
    Vector bias;  // N when has_bias
};

// Three-layer MLP producing one scalar: d -> H (tanh, dropout),
// H -> H (tanh, dropout), H -> 1 (linear).
struct Expert {
    std::vector<DenseLayer> layers;  // exactly 3
    std::vector<double> dropout;     // per layer

    Expert() = default;
    Expert(const Expert& other)
        : layers(other.layers), dropout(other.dropout),
          eval_count(other.eval_count.load()) {}
    Expert& operator=(const Expert& other) {
        layers = other.layers;
        dropout = other.dropout;
        eval_count.store(other.eval_count.load());
        return *this;
    }

    // Forward-pass counter backing the sparsity contract: unselected experts
    // must never be evaluated.
    mutable std::atomic<std::uint64_t> eval_count{0};
};

struct MoEHead {
    Metric metric = Metric::area;
    std::vector<Expert> experts;
    GatingNetwork gate;
    std::size_t top_k = 3;

    std::size_t num_experts() const { return experts.size(); }
    std::size_t input_dim() const { return gate.weight.cols(); }
    std::size_t hidden_dim() const { return experts.empty() ? 0 : experts[0].layers[0].weight.rows(); }
};

struct GatingWeights {
    Vector alpha;                      // length N, sums to 1
    std::vector<std::size_t> selected;  // k indices, ascending
    Vector alpha_tilde;                 // aligned with selected, sums to 1
};

struct ExpertCache {
    std::vector<Vector> inputs;   // input to each layer
    std::vector<Vector> outputs;  // activated output of each layer (pre-dropout)
    std::vector<Vector> masks;    // inverted-dropout masks; empty in eval mode
    double y = 0.0;
};

struct MoECache {
    Vector input;
    GatingWeights gating;
    std::vector<double> selected_outputs;      // aligned with gating.selected
    std::vector<ExpertCache> selected_caches;  // aligned with gating.selected
    double yhat = 0.0;
    bool valid = false;
};

struct MoEOutput {
    double yhat = 0.0;
    GatingWeights gating;
    std::vector<double> selected_outputs;
};

MoEHead make_head(Metric metric, std::size_t input_dim, std::size_t num_experts,
                  std::size_t hidden_dim, std::size_t top_k, double dropout_rate,
                  bool gate_bias, Rng& rng);

// alpha = softmax(W_gate o [+ b]), max-subtracted for stability.
Vector gate(const MoEHead& head, const PooledEmbedding& o);

// k largest entries of alpha (ties to the lowest index), renormalized to 1.
GatingWeights topk_renormalize(const Vector& alpha, std::size_t k);

// rng is required in train mode (dropout stream); cache is optional and
// enables moe_backward.
double expert_forward(const Expert& expert, const Vector& input, bool train_mode,
                      Rng* rng = nullptr, ExpertCache* cache = nullptr);

MoEOutput moe_forward(const MoEHead& head, const PooledEmbedding& o, bool train_mode,
                      Rng* rng = nullptr, MoECache* cache = nullptr);

struct ExpertGrads {
    std::vector<Matrix> dW;
    std::vector<Vector> db;
};

struct MoEGrads {
    Matrix gate_dW;
    Vector gate_db;
    std::vector<ExpertGrads> experts;  // all N; unselected entries stay zero

    void init_like(const MoEHead& head);
    void clear();
};

// Accumulates parameter gradients and the gradient w.r.t. the pooled input.
// The top-k selection set is treated as piecewise-constant; unselected experts
// receive zero gradient.
void moe_backward(const MoEHead& head, const MoECache& cache, double grad_yhat,
                  MoEGrads& grads, Vector& input_grad);

}  // namespace rtlppa
