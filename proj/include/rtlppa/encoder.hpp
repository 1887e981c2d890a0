#pragma once

#include <cstdint>
#include <vector>

#include "rtlppa/frontend.hpp"
#include "rtlppa/matrix.hpp"

namespace rtlppa {

struct DenseLayer {
    Matrix weight;  // d x d
    Vector bias;    // d
    bool frozen = false;
};

// Trainable low-rank delta for one frozen dense layer: W_eff = W + scale*B*A.
// B starts at zero so the adapted network initially equals the base network.
struct LowRankAdapter {
    Matrix A;  // r x d
    Matrix B;  // d x r
    std::size_t rank = 16;
    double scale = 1.0 / 16.0;
};

struct EncoderParams {
    std::size_t vocab_hash_size = 4096;
    std::size_t embed_dim = 64;
    std::uint64_t seed = 0;
    Matrix embedding;                      // V x d, frozen
    std::vector<DenseLayer> base_layers;   // frozen
    std::vector<LowRankAdapter> adapters;  // one per base layer, trainable

    std::size_t num_layers() const { return base_layers.size(); }
};

struct PooledEmbedding {
    Vector vector;
    std::size_t token_count = 0;
};

EncoderParams make_encoder(std::size_t vocab_hash_size, std::size_t embed_dim,
                           std::size_t num_layers, std::size_t rank, std::uint64_t seed);

// Embedding row for a token lexeme: FNV-1a hash mod vocab size.
std::uint32_t token_row(const EncoderParams& params, const std::string& lexeme);

// Per-token hidden states after the full layer stack, one row per token.
Matrix embed_fragment(const EncoderParams& params, const std::vector<Token>& tokens);

// Mean over rows.
PooledEmbedding pool(const Matrix& hidden);

// Token-count-weighted mean, so fragmented encoding equals whole-input pooling.
PooledEmbedding aggregate_fragments(const std::vector<PooledEmbedding>& pools);

// fragment -> embed -> pool -> aggregate. Equivalent to pooling all tokens at
// once for every fragment size.
PooledEmbedding encode(const EncoderParams& params, const SourceUnit& unit,
                       std::size_t fragment_size);

// --- training support -------------------------------------------------------

// Activations recorded by encode_recorded: act[0] holds the embedding rows,
// act[l] the output of layer l.
struct EncodeCache {
    std::vector<std::uint32_t> rows;
    std::vector<Matrix> act;
    std::size_t token_count = 0;
};

// Hashed embedding rows for the counted tokens of a unit; precompute once per
// dataset item, the rows stay valid while vocab_hash_size is unchanged.
std::vector<std::uint32_t> hash_tokens(const EncoderParams& params, const SourceUnit& unit);

// Forward pass over precomputed rows with per-layer activations kept for the
// backward pass. Agrees with encode() on the same unit to fp roundoff.
PooledEmbedding encode_recorded(const EncoderParams& params,
                                const std::vector<std::uint32_t>& rows, EncodeCache& cache);

struct EncoderGrads {
    std::vector<Matrix> dA;  // aligned with adapters
    std::vector<Matrix> dB;
    std::vector<Matrix> dW;  // base layer weights; filled only when unfrozen
    std::vector<Vector> db;

    void init_like(const EncoderParams& params);
    void clear();
};

// Backprop d(loss)/d(pooled) into the adapter matrices (and base layers when
// they are not frozen); the embedding table receives no gradient.
void encode_backward(const EncoderParams& params, const EncodeCache& cache,
                     const Vector& grad_pooled, EncoderGrads& grads);

}  // namespace rtlppa
