#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "rtlppa/dataset.hpp"
#include "rtlppa/model.hpp"

namespace rtlppa {

// Eq.-style Huber with the threshold fixed at 1: 0.5 e^2 for |e| < 1,
// |e| - 0.5 otherwise. Non-finite inputs throw NumericError.
double huber_loss(double yhat, double z);
// Derivative w.r.t. yhat: e clipped to [-1, 1].
double huber_grad(double yhat, double z);

// One training sample: hashed token rows plus normalized targets in head
// order.
struct TrainSample {
    std::string id;
    std::vector<std::uint32_t> rows;
    std::size_t token_count = 0;
    std::vector<double> targets;
};

// Fits log/z normalization stats for every model metric on the given records
// (training split only) and stores them on the model.
void fit_model_stats(PpaModel& model, const std::vector<DatasetRecord>& records);

// Tokenizes, hashes and normalizes records into training samples. Requires
// fitted stats; rejects records with nonpositive token counts or non-finite
// targets.
std::vector<TrainSample> prepare_samples(const PpaModel& model,
                                         const std::vector<DatasetRecord>& records);

struct EpochStats {
    std::vector<double> mean_loss;  // per head, mean over samples
    std::size_t steps = 0;

    double total() const;
};

// Adam over the trainable parameter groups, with gradient buffers bound to
// the same traversal order. One Trainer per model instance.
class Trainer {
  public:
    explicit Trainer(PpaModel& model);

    // Seeded shuffle, per-batch forward/backward over all heads, summed Huber
    // losses, one Adam step per batch. step_log, when given, receives one
    // JSONL line per step. Throws TrainingDiverged on non-finite loss.
    EpochStats train_epoch(const std::vector<TrainSample>& samples, Rng& rng,
                           std::ostream* step_log = nullptr, std::size_t epoch = 0);

    // Full schedule; returns stats per epoch. Callers typically pass
    // model.config.epochs; resume flows may run fewer.
    std::vector<EpochStats> fit(const std::vector<TrainSample>& samples,
                                std::size_t epochs, std::ostream* step_log = nullptr);

    // Eval-mode (dropout off) total Huber loss of one sample.
    double sample_loss(const TrainSample& sample);

    // Eval-mode backward of one sample into the internal gradient buffers,
    // scaled by `scale`; used by the gradient checker.
    void accumulate_gradients(const TrainSample& sample, double scale);
    void clear_gradients();

    struct Binding {
        std::string id;
        double* param = nullptr;
        double* grad = nullptr;
        std::size_t size = 0;
    };
    const std::vector<Binding>& bindings() const { return bindings_; }

  private:
    void adam_step(const std::vector<std::size_t>& binding_idx);
    void backward_sample(const TrainSample& sample, double scale, bool train_mode,
                         Rng* rng, std::vector<double>* head_losses);

    PpaModel& model_;
    EncoderGrads enc_grads_;
    std::vector<MoEGrads> head_grads_;
    std::vector<Binding> bindings_;
    std::vector<std::size_t> all_idx_;
    std::vector<std::vector<std::size_t>> separate_idx_;  // encoder + one head
    std::vector<Vector> adam_m_;
    std::vector<Vector> adam_v_;
    std::size_t adam_t_ = 0;
    std::size_t global_step_ = 0;
    // < heads.size() while a separate-mode pass trains a single head
    std::size_t active_head_ = static_cast<std::size_t>(-1);
};

struct GradCheckOptions {
    double step = 1e-5;
    std::size_t coords_per_group = 50;
    std::uint64_t seed = 7;
    // flips the sign of the analytic gradient; exists so tests can verify the
    // checker actually detects a broken backward pass
    bool negate_analytic = false;
};

struct GradCheckGroup {
    std::string id;
    double max_deviation = 0.0;
    std::size_t coords_checked = 0;
};

struct GradCheckReport {
    std::vector<GradCheckGroup> groups;
    double max_deviation = 0.0;

    bool within(double tolerance) const { return max_deviation < tolerance; }
};

// Central-difference check of the full backward pass (dropout off). Deviation
// per coordinate: |g_a - g_n| / max(|g_a|, |g_n|, 1e-8).
GradCheckReport grad_check(PpaModel& model, const TrainSample& sample,
                           const GradCheckOptions& options = {});

}  // namespace rtlppa
