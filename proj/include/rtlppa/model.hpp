#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rtlppa/encoder.hpp"
#include "rtlppa/moe.hpp"
#include "rtlppa/normalize.hpp"

namespace rtlppa {

// Architecture and training hyperparameters. Everything needed to rebuild or
// resume a model is carried in the artifact for provenance.
struct ModelConfig {
    // encoder
    std::size_t vocab_hash_size = 4096;
    std::size_t embed_dim = 64;
    std::size_t encoder_layers = 2;
    std::size_t lora_rank = 16;
    // regression heads
    std::size_t num_experts = 6;
    std::size_t top_k = 3;
    std::size_t expert_hidden = 256;
    double dropout = 0.0;  // regularization off by default at desk scale; see --dropout
    bool gate_bias = false;
    // targets
    double norm_epsilon = 1e-6;
    // training
    std::size_t epochs = 24;
    std::size_t batch_size = 8;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::size_t fragment_size = 512;
    bool adapter_mode = true;  // freeze encoder base layers, train adapters only
    bool joint_heads = true;   // one optimizer step covers all heads
    std::uint64_t seed = 42;
};

constexpr int kModelFormatVersion = 1;

struct PpaModel {
    ModelConfig config;
    EncoderParams encoder;
    std::vector<Metric> metrics;  // head order
    std::vector<MoEHead> heads;
    std::vector<NormalizationStats> stats;  // valid once stats_fitted
    bool stats_fitted = false;
    std::size_t epochs_trained = 0;

    std::size_t head_index(Metric m) const;
};

PpaModel make_model(const ModelConfig& config);

// JSON artifact, format-versioned; save(load(f)) reproduces f byte for byte.
void save_model(const PpaModel& model, const std::string& path);
PpaModel load_model(const std::string& path);

std::string model_to_json(const PpaModel& model);
PpaModel model_from_json(const std::string& text);

// Normalized-space predictions, one per head, eval mode.
std::vector<double> predict_normalized(const PpaModel& model, const SourceUnit& unit);

// Physical-unit predictions; requires fitted normalization stats.
std::vector<double> predict_physical(const PpaModel& model, const SourceUnit& unit);

// Named view of one parameter tensor. `trainable` reflects the adapter-mode
// freeze contract.
struct ParamGroup {
    std::string id;
    double* data = nullptr;
    std::size_t size = 0;
    bool trainable = true;
};

std::vector<ParamGroup> parameter_groups(PpaModel& model);
std::vector<ParamGroup> trainable_groups(PpaModel& model);

}  // namespace rtlppa
