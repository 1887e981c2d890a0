#include "rtlppa/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rtlppa/errors.hpp"

namespace rtlppa {

double huber_loss(double yhat, double z) {
    if (!std::isfinite(yhat) || !std::isfinite(z)) {
        throw NumericError("huber_loss: non-finite input");
    }
    const double e = yhat - z;
    const double a = std::fabs(e);
    return a < 1.0 ? 0.5 * e * e : a - 0.5;
}

double huber_grad(double yhat, double z) {
    if (!std::isfinite(yhat) || !std::isfinite(z)) {
        throw NumericError("huber_grad: non-finite input");
    }
    const double e = yhat - z;
    if (e > 1.0) return 1.0;
    if (e < -1.0) return -1.0;
    return e;
}

void fit_model_stats(PpaModel& model, const std::vector<DatasetRecord>& records) {
    model.stats.clear();
    for (Metric metric : model.metrics) {
        std::vector<double> values;
        values.reserve(records.size());
        for (const DatasetRecord& r : records) {
            switch (metric) {
                case Metric::area: values.push_back(r.area); break;
                case Metric::delay: values.push_back(r.delay); break;
                default: values.push_back(r.power); break;
            }
        }
        model.stats.push_back(fit_stats(values, metric, model.config.norm_epsilon));
    }
    model.stats_fitted = true;
}

std::vector<TrainSample> prepare_samples(const PpaModel& model,
                                         const std::vector<DatasetRecord>& records) {
    if (!model.stats_fitted) {
        throw ConfigError("prepare_samples: normalization stats not fitted");
    }
    std::vector<TrainSample> samples;
    samples.reserve(records.size());
    for (const DatasetRecord& record : records) {
        TrainSample s;
        s.id = record.id;
        const SourceUnit unit = tokenize(record.source);
        s.rows = hash_tokens(model.encoder, unit);
        s.token_count = s.rows.size();
        if (s.token_count == 0) {
            throw EmptyInput("record '" + record.id + "' has no countable tokens");
        }
        for (std::size_t h = 0; h < model.metrics.size(); ++h) {
            double value = 0.0;
            switch (model.metrics[h]) {
                case Metric::area: value = record.area; break;
                case Metric::delay: value = record.delay; break;
                default: value = record.power; break;
            }
            const double z = normalize(model.stats[h], value);
            if (!std::isfinite(z)) {
                throw NumericError("record '" + record.id + "': non-finite target");
            }
            s.targets.push_back(z);
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

double EpochStats::total() const {
    return std::accumulate(mean_loss.begin(), mean_loss.end(), 0.0);
}

Trainer::Trainer(PpaModel& model) : model_(model) {
    enc_grads_.init_like(model.encoder);
    head_grads_.resize(model.heads.size());
    for (std::size_t h = 0; h < model.heads.size(); ++h) {
        head_grads_[h].init_like(model.heads[h]);
    }

    // Mirrors the traversal in parameter_groups() so ids stay aligned; frozen
    // groups are absent.
    auto add = [&](const std::string& id, double* param, double* grad, std::size_t n) {
        bindings_.push_back(Binding{id, param, grad, n});
    };
    for (std::size_t l = 0; l < model.encoder.num_layers(); ++l) {
        DenseLayer& layer = model_.encoder.base_layers[l];
        const std::string base = "encoder.layer" + std::to_string(l);
        if (!layer.frozen) {
            add(base + ".weight", layer.weight.data().data(),
                enc_grads_.dW[l].data().data(), layer.weight.data().size());
            add(base + ".bias", layer.bias.data(), enc_grads_.db[l].data(),
                layer.bias.size());
        }
        LowRankAdapter& adapter = model_.encoder.adapters[l];
        add(base + ".adapter.A", adapter.A.data().data(), enc_grads_.dA[l].data().data(),
            adapter.A.data().size());
        add(base + ".adapter.B", adapter.B.data().data(), enc_grads_.dB[l].data().data(),
            adapter.B.data().size());
    }
    for (std::size_t h = 0; h < model_.heads.size(); ++h) {
        MoEHead& head = model_.heads[h];
        MoEGrads& grads = head_grads_[h];
        const std::string base = std::string("head.") + metric_name(head.metric);
        add(base + ".gate.weight", head.gate.weight.data().data(),
            grads.gate_dW.data().data(), head.gate.weight.data().size());
        if (head.gate.has_bias) {
            add(base + ".gate.bias", head.gate.bias.data(), grads.gate_db.data(),
                head.gate.bias.size());
        }
        for (std::size_t e = 0; e < head.experts.size(); ++e) {
            for (std::size_t l = 0; l < head.experts[e].layers.size(); ++l) {
                DenseLayer& layer = head.experts[e].layers[l];
                const std::string lbase =
                    base + ".expert" + std::to_string(e) + ".layer" + std::to_string(l);
                add(lbase + ".weight", layer.weight.data().data(),
                    grads.experts[e].dW[l].data().data(), layer.weight.data().size());
                add(lbase + ".bias", layer.bias.data(), grads.experts[e].db[l].data(),
                    layer.bias.size());
            }
        }
    }
    adam_m_.resize(bindings_.size());
    adam_v_.resize(bindings_.size());
    all_idx_.resize(bindings_.size());
    std::iota(all_idx_.begin(), all_idx_.end(), 0);
    separate_idx_.resize(model_.heads.size());
    for (std::size_t i = 0; i < bindings_.size(); ++i) {
        adam_m_[i].assign(bindings_[i].size, 0.0);
        adam_v_[i].assign(bindings_[i].size, 0.0);
        const std::string& id = bindings_[i].id;
        for (std::size_t h = 0; h < model_.heads.size(); ++h) {
            const std::string prefix =
                std::string("head.") + metric_name(model_.heads[h].metric) + ".";
            if (id.rfind("encoder.", 0) == 0 || id.rfind(prefix, 0) == 0) {
                separate_idx_[h].push_back(i);
            }
        }
    }
}

void Trainer::clear_gradients() {
    enc_grads_.clear();
    for (MoEGrads& g : head_grads_) g.clear();
}

void Trainer::backward_sample(const TrainSample& sample, double scale, bool train_mode,
                              Rng* rng, std::vector<double>* head_losses) {
    EncodeCache cache;
    const PooledEmbedding o = encode_recorded(model_.encoder, sample.rows, cache);
    Vector input_grad(o.vector.size(), 0.0);
    for (std::size_t h = 0; h < model_.heads.size(); ++h) {
        if (active_head_ < model_.heads.size() && h != active_head_) continue;
        MoECache mc;
        const MoEOutput out = moe_forward(model_.heads[h], o, train_mode, rng, &mc);
        if (head_losses) {
            (*head_losses)[h] += huber_loss(out.yhat, sample.targets[h]);
        }
        const double g = huber_grad(out.yhat, sample.targets[h]) * scale;
        moe_backward(model_.heads[h], mc, g, head_grads_[h], input_grad);
    }
    encode_backward(model_.encoder, cache, input_grad, enc_grads_);
}

void Trainer::accumulate_gradients(const TrainSample& sample, double scale) {
    backward_sample(sample, scale, /*train_mode=*/false, nullptr, nullptr);
}

double Trainer::sample_loss(const TrainSample& sample) {
    EncodeCache cache;
    const PooledEmbedding o = encode_recorded(model_.encoder, sample.rows, cache);
    double total = 0.0;
    for (std::size_t h = 0; h < model_.heads.size(); ++h) {
        const MoEOutput out = moe_forward(model_.heads[h], o, false, nullptr, nullptr);
        total += huber_loss(out.yhat, sample.targets[h]);
    }
    return total;
}

void Trainer::adam_step(const std::vector<std::size_t>& binding_idx) {
    ++adam_t_;
    const ModelConfig& cfg = model_.config;
    const double b1 = cfg.adam_beta1;
    const double b2 = cfg.adam_beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(adam_t_));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(adam_t_));
    for (std::size_t i : binding_idx) {
        double* p = bindings_[i].param;
        const double* g = bindings_[i].grad;
        Vector& m = adam_m_[i];
        Vector& v = adam_v_[i];
        for (std::size_t j = 0; j < bindings_[i].size; ++j) {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            const double mhat = m[j] / corr1;
            const double vhat = v[j] / corr2;
            p[j] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_epsilon);
        }
    }
}

EpochStats Trainer::train_epoch(const std::vector<TrainSample>& samples, Rng& rng,
                                std::ostream* step_log, std::size_t epoch) {
    if (samples.empty()) throw EmptyDataset("train_epoch: no samples");
    const std::size_t n = samples.size();
    const std::size_t batch = std::max<std::size_t>(1, model_.config.batch_size);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    EpochStats stats;
    stats.mean_loss.assign(model_.heads.size(), 0.0);
    std::vector<double> batch_losses(model_.heads.size());
    for (std::size_t start = 0; start < n; start += batch) {
        const std::size_t end = std::min(start + batch, n);
        const double inv_bs = 1.0 / static_cast<double>(end - start);
        clear_gradients();
        std::fill(batch_losses.begin(), batch_losses.end(), 0.0);
        try {
            for (std::size_t i = start; i < end; ++i) {
                backward_sample(samples[order[i]], inv_bs, true, &rng, &batch_losses);
            }
        } catch (const NumericError& err) {
            throw TrainingDiverged(err.what(), global_step_);
        }
        double total = 0.0;
        for (double l : batch_losses) total += l;
        if (!std::isfinite(total)) {
            throw TrainingDiverged("non-finite batch loss", global_step_);
        }
        adam_step(active_head_ < separate_idx_.size() ? separate_idx_[active_head_]
                                                      : all_idx_);
        if (step_log) {
            nlohmann::ordered_json line;
            line["epoch"] = epoch;
            line["step"] = global_step_;
            for (std::size_t h = 0; h < model_.heads.size(); ++h) {
                line[std::string("loss_") + metric_label(model_.heads[h].metric)] =
                    batch_losses[h] * inv_bs;
            }
            (*step_log) << line.dump() << "\n";
        }
        for (std::size_t h = 0; h < batch_losses.size(); ++h) {
            stats.mean_loss[h] += batch_losses[h];
        }
        ++stats.steps;
        ++global_step_;
    }
    for (double& l : stats.mean_loss) l /= static_cast<double>(n);
    return stats;
}

std::vector<EpochStats> Trainer::fit(const std::vector<TrainSample>& samples,
                                     std::size_t epochs, std::ostream* step_log) {
    Rng rng(model_.config.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<EpochStats> history;
    for (std::size_t e = 0; e < epochs; ++e) {
        if (model_.config.joint_heads) {
            history.push_back(train_epoch(samples, rng, step_log, e));
        } else {
            // one pass per head, each updating that head plus the adapters
            EpochStats merged;
            merged.mean_loss.assign(model_.heads.size(), 0.0);
            for (std::size_t h = 0; h < model_.heads.size(); ++h) {
                active_head_ = h;
                const EpochStats pass = train_epoch(samples, rng, step_log, e);
                merged.mean_loss[h] = pass.mean_loss[h];
                merged.steps += pass.steps;
            }
            active_head_ = static_cast<std::size_t>(-1);
            history.push_back(std::move(merged));
        }
        ++model_.epochs_trained;
    }
    return history;
}

GradCheckReport grad_check(PpaModel& model, const TrainSample& sample,
                           const GradCheckOptions& options) {
    Trainer trainer(model);
    trainer.clear_gradients();
    trainer.accumulate_gradients(sample, 1.0);

    // Copy the analytic gradients out before poking parameters.
    std::vector<Vector> analytic;
    for (const Trainer::Binding& b : trainer.bindings()) {
        analytic.emplace_back(b.grad, b.grad + b.size);
    }

    Rng rng(options.seed);
    GradCheckReport report;
    const double h = options.step;
    const auto& bindings = trainer.bindings();
    for (std::size_t gi = 0; gi < bindings.size(); ++gi) {
        const Trainer::Binding& b = bindings[gi];
        std::vector<std::size_t> coords;
        if (b.size <= options.coords_per_group) {
            coords.resize(b.size);
            std::iota(coords.begin(), coords.end(), 0);
        } else {
            std::set<std::size_t> seen;
            while (seen.size() < options.coords_per_group) {
                seen.insert(rng.index(b.size));
            }
            coords.assign(seen.begin(), seen.end());
        }
        GradCheckGroup group;
        group.id = b.id;
        group.coords_checked = coords.size();
        for (std::size_t c : coords) {
            const double saved = b.param[c];
            b.param[c] = saved + h;
            const double up = trainer.sample_loss(sample);
            b.param[c] = saved - h;
            const double down = trainer.sample_loss(sample);
            b.param[c] = saved;
            const double numeric = (up - down) / (2.0 * h);
            double ga = analytic[gi][c];
            if (options.negate_analytic) ga = -ga;
            const double dev = std::fabs(ga - numeric) /
                               std::max({std::fabs(ga), std::fabs(numeric), 1e-8});
            group.max_deviation = std::max(group.max_deviation, dev);
        }
        report.max_deviation = std::max(report.max_deviation, group.max_deviation);
        report.groups.push_back(std::move(group));
    }
    return report;
}

}  // namespace rtlppa
