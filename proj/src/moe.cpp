#include "rtlppa/moe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rtlppa {

MoEHead make_head(Metric metric, std::size_t input_dim, std::size_t num_experts,
                  std::size_t hidden_dim, std::size_t top_k, double dropout_rate,
                  bool gate_bias, Rng& rng) {
    if (num_experts == 0 || top_k == 0 || top_k > num_experts)
        throw ConfigError("MoE head requires 1 <= top_k <= num_experts");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw ConfigError("dropout rate must be in [0, 1)");

    MoEHead head;
    head.metric = metric;
    head.top_k = top_k;

    head.gate.weight = Matrix(num_experts, input_dim);
    const double g_std = 1.0 / std::sqrt(static_cast<double>(input_dim));
    for (double& v : head.gate.weight.data()) v = rng.normal(0.0, g_std);
    head.gate.has_bias = gate_bias;
    if (gate_bias) head.gate.bias = Vector(num_experts, 0.0);

    for (std::size_t e = 0; e < num_experts; ++e) {
        Expert expert;
        const std::size_t dims[4] = {input_dim, hidden_dim, hidden_dim, 1};
        for (int l = 0; l < 3; ++l) {
            DenseLayer layer;
            layer.weight = Matrix(dims[l + 1], dims[l]);
            const double std_l = 1.0 / std::sqrt(static_cast<double>(dims[l]));
            for (double& v : layer.weight.data()) v = rng.normal(0.0, std_l);
            layer.bias = Vector(dims[l + 1], 0.0);
            expert.layers.push_back(std::move(layer));
        }
        expert.dropout = {dropout_rate, dropout_rate, 0.0};
        head.experts.push_back(std::move(expert));
    }
    return head;
}

Vector gate(const MoEHead& head, const PooledEmbedding& o) {
    if (o.vector.size() != head.input_dim())
        throw ShapeError("gate: embedding dimension does not match gating matrix");
    for (double v : o.vector)
        if (!std::isfinite(v)) throw NumericError("gate: non-finite embedding component");

    Vector logits = head.gate.weight.matvec(o.vector);
    if (head.gate.has_bias) axpy(logits, 1.0, head.gate.bias);

    const double max_logit = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double& v : logits) {
        v = std::exp(v - max_logit);
        sum += v;
    }
    for (double& v : logits) v /= sum;
    return logits;
}

GatingWeights topk_renormalize(const Vector& alpha, std::size_t k) {
    const std::size_t n = alpha.size();
    if (k < 1 || k > n) throw ConfigError("top_k out of range: k=" + std::to_string(k) +
                                          " for " + std::to_string(n) + " experts");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return alpha[a] > alpha[b];  // stable sort keeps lowest index first on ties
    });

    GatingWeights gw;
    gw.alpha = alpha;
    gw.selected.assign(order.begin(), order.begin() + k);
    std::sort(gw.selected.begin(), gw.selected.end());

    double sum = 0.0;
    for (std::size_t idx : gw.selected) sum += alpha[idx];
    gw.alpha_tilde.reserve(k);
    for (std::size_t idx : gw.selected) gw.alpha_tilde.push_back(alpha[idx] / sum);
    return gw;
}

double expert_forward(const Expert& expert, const Vector& input, bool train_mode,
                      Rng* rng, ExpertCache* cache) {
    if (input.size() != expert.layers[0].weight.cols())
        throw ShapeError("expert_forward: input dimension mismatch");
    if (train_mode && rng == nullptr)
        throw ConfigError("expert_forward: train mode requires a dropout rng");

    expert.eval_count.fetch_add(1, std::memory_order_relaxed);
    if (cache) {
        cache->inputs.clear();
        cache->outputs.clear();
        cache->masks.clear();
    }

    Vector x = input;
    for (std::size_t l = 0; l < expert.layers.size(); ++l) {
        const DenseLayer& layer = expert.layers[l];
        if (cache) cache->inputs.push_back(x);

        Vector z = layer.weight.matvec(x);
        axpy(z, 1.0, layer.bias);
        const bool last = (l + 1 == expert.layers.size());
        if (!last)
            for (double& v : z) v = std::tanh(v);
        if (cache) cache->outputs.push_back(z);

        const double p = expert.dropout[l];
        if (train_mode && p > 0.0 && !last) {
            Vector mask(z.size());
            const double keep = 1.0 - p;
            for (std::size_t i = 0; i < z.size(); ++i) {
                mask[i] = rng->bernoulli(p) ? 0.0 : 1.0 / keep;  // inverted dropout
                z[i] *= mask[i];
            }
            if (cache) cache->masks.push_back(std::move(mask));
        } else if (cache) {
            cache->masks.emplace_back();
        }
        x = std::move(z);
    }
    const double y = x[0];
    if (cache) cache->y = y;
    return y;
}

MoEOutput moe_forward(const MoEHead& head, const PooledEmbedding& o, bool train_mode,
                      Rng* rng, MoECache* cache) {
    MoEOutput out;
    out.gating = topk_renormalize(gate(head, o), head.top_k);

    if (cache) {
        cache->input = o.vector;
        cache->gating = out.gating;
        cache->selected_outputs.clear();
        cache->selected_caches.assign(out.gating.selected.size(), ExpertCache{});
    }

    double yhat = 0.0;
    for (std::size_t j = 0; j < out.gating.selected.size(); ++j) {
        const std::size_t idx = out.gating.selected[j];
        ExpertCache* ec = cache ? &cache->selected_caches[j] : nullptr;
        const double y = expert_forward(head.experts[idx], o.vector, train_mode, rng, ec);
        out.selected_outputs.push_back(y);
        yhat += out.gating.alpha_tilde[j] * y;
    }
    out.yhat = yhat;

    if (cache) {
        cache->selected_outputs = out.selected_outputs;
        cache->yhat = yhat;
        cache->valid = true;
    }
    return out;
}

void MoEGrads::init_like(const MoEHead& head) {
    gate_dW = Matrix(head.gate.weight.rows(), head.gate.weight.cols());
    gate_db.assign(head.gate.has_bias ? head.gate.bias.size() : 0, 0.0);
    experts.clear();
    for (const Expert& e : head.experts) {
        ExpertGrads g;
        for (const DenseLayer& layer : e.layers) {
            g.dW.emplace_back(layer.weight.rows(), layer.weight.cols());
            g.db.emplace_back(layer.bias.size(), 0.0);
        }
        experts.push_back(std::move(g));
    }
}

void MoEGrads::clear() {
    gate_dW.data().assign(gate_dW.data().size(), 0.0);
    gate_db.assign(gate_db.size(), 0.0);
    for (ExpertGrads& g : experts) {
        for (Matrix& m : g.dW) m.data().assign(m.data().size(), 0.0);
        for (Vector& v : g.db) v.assign(v.size(), 0.0);
    }
}

namespace {

// Backprop one expert; returns gradient w.r.t. the expert input.
Vector expert_backward(const Expert& expert, const ExpertCache& cache, double dy,
                       ExpertGrads& grads) {
    Vector grad = {dy};
    for (std::size_t l = expert.layers.size(); l-- > 0;) {
        const DenseLayer& layer = expert.layers[l];
        const Vector& x = cache.inputs[l];
        const Vector& h = cache.outputs[l];
        const bool last = (l + 1 == expert.layers.size());

        Vector dz = std::move(grad);
        if (!cache.masks[l].empty())
            for (std::size_t i = 0; i < dz.size(); ++i) dz[i] *= cache.masks[l][i];
        if (!last)
            for (std::size_t i = 0; i < dz.size(); ++i) dz[i] *= 1.0 - h[i] * h[i];

        grads.dW[l].add_outer(dz, x);
        axpy(grads.db[l], 1.0, dz);
        grad = layer.weight.matvec_transposed(dz);
    }
    return grad;
}

}  // namespace

void moe_backward(const MoEHead& head, const MoECache& cache, double grad_yhat,
                  MoEGrads& grads, Vector& input_grad) {
    if (!cache.valid) throw BackwardBeforeForward();
    const std::size_t n = head.num_experts();
    const std::size_t d = head.input_dim();
    if (input_grad.size() != d) throw ShapeError("moe_backward: input_grad dimension mismatch");

    const GatingWeights& gw = cache.gating;

    // Selected experts: dL/dy_j = g * alpha_tilde_j.
    for (std::size_t j = 0; j < gw.selected.size(); ++j) {
        const std::size_t idx = gw.selected[j];
        const double dy = grad_yhat * gw.alpha_tilde[j];
        Vector dx = expert_backward(head.experts[idx], cache.selected_caches[j], dy,
                                    grads.experts[idx]);
        axpy(input_grad, 1.0, dx);
    }

    // Renormalized gating path: for j in K, dL/dalpha_j = (g / S) (y_j - yhat).
    double sum_selected = 0.0;
    for (std::size_t idx : gw.selected) sum_selected += gw.alpha[idx];
    Vector dalpha(n, 0.0);
    for (std::size_t j = 0; j < gw.selected.size(); ++j)
        dalpha[gw.selected[j]] = grad_yhat / sum_selected * (cache.selected_outputs[j] - cache.yhat);

    // Softmax backward: dz_i = alpha_i (dalpha_i - sum_j alpha_j dalpha_j).
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) c += gw.alpha[i] * dalpha[i];
    Vector dz(n);
    for (std::size_t i = 0; i < n; ++i) dz[i] = gw.alpha[i] * (dalpha[i] - c);

    grads.gate_dW.add_outer(dz, cache.input);
    if (head.gate.has_bias) axpy(grads.gate_db, 1.0, dz);
    axpy(input_grad, 1.0, head.gate.weight.matvec_transposed(dz));
}

}  // namespace rtlppa
