#include "rtlppa/encoder.hpp"

#include <cmath>

#include "rtlppa/rng.hpp"

namespace rtlppa {

namespace {

// x -> tanh(W x + b + scale * B (A x)), writing the result to `out`.
void layer_forward(const DenseLayer& layer, const LowRankAdapter& adapter, const double* x,
                   double* out, std::size_t d) {
    const std::size_t r = adapter.rank;
    Vector ax(r, 0.0);
    for (std::size_t i = 0; i < r; ++i) {
        const double* arow = adapter.A.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += arow[j] * x[j];
        ax[i] = acc;
    }
    for (std::size_t i = 0; i < d; ++i) {
        const double* wrow = layer.weight.row(i);
        const double* brow = adapter.B.row(i);
        double acc = layer.bias[i];
        for (std::size_t j = 0; j < d; ++j) acc += wrow[j] * x[j];
        double delta = 0.0;
        for (std::size_t j = 0; j < r; ++j) delta += brow[j] * ax[j];
        out[i] = std::tanh(acc + adapter.scale * delta);
    }
}

Matrix forward_rows(const EncoderParams& params, const std::vector<std::uint32_t>& rows,
                    EncodeCache* cache) {
    const std::size_t n = rows.size();
    const std::size_t d = params.embed_dim;
    Matrix h(n, d);
    for (std::size_t t = 0; t < n; ++t) {
        const double* e = params.embedding.row(rows[t]);
        double* out = h.row(t);
        for (std::size_t j = 0; j < d; ++j) out[j] = e[j];
    }
    if (cache) {
        cache->rows = rows;
        cache->act.clear();
        cache->act.push_back(h);
        cache->token_count = n;
    }
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        Matrix next(n, d);
        for (std::size_t t = 0; t < n; ++t)
            layer_forward(params.base_layers[l], params.adapters[l], h.row(t), next.row(t), d);
        h = std::move(next);
        if (cache) cache->act.push_back(h);
    }
    return h;
}

}  // namespace

EncoderParams make_encoder(std::size_t vocab_hash_size, std::size_t embed_dim,
                           std::size_t num_layers, std::size_t rank, std::uint64_t seed) {
    if (vocab_hash_size == 0 || embed_dim == 0 || num_layers == 0)
        throw ConfigError("encoder dimensions must be positive");
    if (rank == 0 || rank > embed_dim)
        throw ConfigError("adapter rank must satisfy 1 <= r <= embed_dim");

    EncoderParams p;
    p.vocab_hash_size = vocab_hash_size;
    p.embed_dim = embed_dim;
    p.seed = seed;

    Rng rng(seed);
    p.embedding = Matrix(vocab_hash_size, embed_dim);
    for (double& v : p.embedding.data()) v = rng.normal();

    const double w_std = 1.0 / std::sqrt(static_cast<double>(embed_dim));
    for (std::size_t l = 0; l < num_layers; ++l) {
        DenseLayer layer;
        layer.weight = Matrix(embed_dim, embed_dim);
        for (double& v : layer.weight.data()) v = rng.normal(0.0, w_std);
        layer.bias = Vector(embed_dim, 0.0);
        layer.frozen = true;
        p.base_layers.push_back(std::move(layer));

        LowRankAdapter adapter;
        adapter.rank = rank;
        adapter.scale = 1.0 / static_cast<double>(rank);
        adapter.A = Matrix(rank, embed_dim);
        for (double& v : adapter.A.data()) v = rng.uniform(-0.05, 0.05);
        adapter.B = Matrix(embed_dim, rank);  // zero-initialized
        p.adapters.push_back(std::move(adapter));
    }
    return p;
}

std::uint32_t token_row(const EncoderParams& params, const std::string& lexeme) {
    return static_cast<std::uint32_t>(fnv1a64(lexeme) % params.vocab_hash_size);
}

Matrix embed_fragment(const EncoderParams& params, const std::vector<Token>& tokens) {
    if (tokens.empty()) throw EmptyInput("embed_fragment: empty fragment");
    std::vector<std::uint32_t> rows;
    rows.reserve(tokens.size());
    for (const Token& t : tokens) rows.push_back(token_row(params, t.lexeme));
    return forward_rows(params, rows, nullptr);
}

PooledEmbedding pool(const Matrix& hidden) {
    if (hidden.rows() == 0) throw EmptyInput("pool: empty hidden-state matrix");
    const std::size_t n = hidden.rows();
    const std::size_t d = hidden.cols();
    PooledEmbedding out;
    out.vector.assign(d, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        const double* row = hidden.row(t);
        for (std::size_t j = 0; j < d; ++j) out.vector[j] += row[j];
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (double& v : out.vector) v *= inv;
    out.token_count = n;
    return out;
}

PooledEmbedding aggregate_fragments(const std::vector<PooledEmbedding>& pools) {
    if (pools.empty()) throw EmptyInput("aggregate_fragments: empty pool list");
    const std::size_t d = pools.front().vector.size();
    PooledEmbedding out;
    out.vector.assign(d, 0.0);
    std::size_t total = 0;
    for (const PooledEmbedding& p : pools) {
        if (p.vector.size() != d)
            throw ShapeError("aggregate_fragments: mismatched embedding dimensions");
        const double w = static_cast<double>(p.token_count);
        for (std::size_t j = 0; j < d; ++j) out.vector[j] += w * p.vector[j];
        total += p.token_count;
    }
    if (total == 0) throw EmptyInput("aggregate_fragments: zero total token count");
    const double inv = 1.0 / static_cast<double>(total);
    for (double& v : out.vector) v *= inv;
    out.token_count = total;
    return out;
}

PooledEmbedding encode(const EncoderParams& params, const SourceUnit& unit,
                       std::size_t fragment_size) {
    const FragmentSet set = fragment(unit, fragment_size);
    std::vector<PooledEmbedding> pools;
    pools.reserve(set.fragments.size());
    for (std::size_t f = 0; f < set.fragments.size(); ++f) {
        std::vector<Token> toks;
        toks.reserve(set.fragment_length(f));
        for (std::size_t i = set.fragments[f].first; i < set.fragments[f].second; ++i)
            toks.push_back(unit.tokens[set.counted[i]]);
        pools.push_back(pool(embed_fragment(params, toks)));
    }
    return aggregate_fragments(pools);
}

std::vector<std::uint32_t> hash_tokens(const EncoderParams& params, const SourceUnit& unit) {
    std::vector<std::uint32_t> rows;
    for (const Token& t : unit.tokens)
        if (!t.is_separator()) rows.push_back(token_row(params, t.lexeme));
    return rows;
}

PooledEmbedding encode_recorded(const EncoderParams& params,
                                const std::vector<std::uint32_t>& rows, EncodeCache& cache) {
    if (rows.empty()) throw EmptyInput("encode_recorded: no tokens");
    return pool(forward_rows(params, rows, &cache));
}

void EncoderGrads::init_like(const EncoderParams& params) {
    dA.clear();
    dB.clear();
    dW.clear();
    db.clear();
    for (const LowRankAdapter& a : params.adapters) {
        dA.emplace_back(a.A.rows(), a.A.cols());
        dB.emplace_back(a.B.rows(), a.B.cols());
    }
    for (const DenseLayer& layer : params.base_layers) {
        dW.emplace_back(layer.weight.rows(), layer.weight.cols());
        db.emplace_back(layer.bias.size(), 0.0);
    }
}

void EncoderGrads::clear() {
    for (Matrix& m : dA) m.data().assign(m.data().size(), 0.0);
    for (Matrix& m : dB) m.data().assign(m.data().size(), 0.0);
    for (Matrix& m : dW) m.data().assign(m.data().size(), 0.0);
    for (Vector& v : db) v.assign(v.size(), 0.0);
}

void encode_backward(const EncoderParams& params, const EncodeCache& cache,
                     const Vector& grad_pooled, EncoderGrads& grads) {
    if (cache.act.empty()) throw BackwardBeforeForward();
    const std::size_t n = cache.token_count;
    const std::size_t d = params.embed_dim;
    const std::size_t L = params.num_layers();
    if (grad_pooled.size() != d) throw ShapeError("encode_backward: gradient dimension mismatch");
    if (grads.dA.size() != L) throw ShapeError("encode_backward: gradient buffers not initialized");

    // d(pooled)/d(h_t) = 1/n for every token.
    const double inv_n = 1.0 / static_cast<double>(n);
    Matrix dh(n, d);
    for (std::size_t t = 0; t < n; ++t) {
        double* row = dh.row(t);
        for (std::size_t j = 0; j < d; ++j) row[j] = grad_pooled[j] * inv_n;
    }

    for (std::size_t l = L; l-- > 0;) {
        const DenseLayer& layer = params.base_layers[l];
        const LowRankAdapter& adapter = params.adapters[l];
        const std::size_t r = adapter.rank;
        const Matrix& x_mat = cache.act[l];      // inputs to layer l
        const Matrix& h_mat = cache.act[l + 1];  // outputs of layer l
        Matrix dx(n, d);

        Vector du(d), ax(r), btdu(r);
        for (std::size_t t = 0; t < n; ++t) {
            const double* x = x_mat.row(t);
            const double* h = h_mat.row(t);
            const double* g = dh.row(t);
            for (std::size_t j = 0; j < d; ++j) du[j] = g[j] * (1.0 - h[j] * h[j]);

            // recomputed, cheaper than caching r values per token
            for (std::size_t i = 0; i < r; ++i) {
                const double* arow = adapter.A.row(i);
                double acc = 0.0;
                for (std::size_t j = 0; j < d; ++j) acc += arow[j] * x[j];
                ax[i] = acc;
            }
            for (std::size_t i = 0; i < r; ++i) btdu[i] = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                const double* brow = adapter.B.row(i);
                const double dui = du[i];
                for (std::size_t j = 0; j < r; ++j) btdu[j] += brow[j] * dui;
            }

            if (!layer.frozen) {
                for (std::size_t i = 0; i < d; ++i) {
                    double* wrow = grads.dW[l].row(i);
                    const double dui = du[i];
                    for (std::size_t j = 0; j < d; ++j) wrow[j] += dui * x[j];
                    grads.db[l][i] += dui;
                }
            }

            // dA += scale * (B^T du) x^T ; dB += scale * du (A x)^T
            for (std::size_t i = 0; i < r; ++i) {
                double* arow = grads.dA[l].row(i);
                const double s = adapter.scale * btdu[i];
                for (std::size_t j = 0; j < d; ++j) arow[j] += s * x[j];
            }
            for (std::size_t i = 0; i < d; ++i) {
                double* brow = grads.dB[l].row(i);
                const double s = adapter.scale * du[i];
                for (std::size_t j = 0; j < r; ++j) brow[j] += s * ax[j];
            }

            // dx = W^T du + scale * A^T (B^T du)
            double* dxrow = dx.row(t);
            for (std::size_t j = 0; j < d; ++j) dxrow[j] = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                const double* wrow = layer.weight.row(i);
                const double dui = du[i];
                for (std::size_t j = 0; j < d; ++j) dxrow[j] += wrow[j] * dui;
            }
            for (std::size_t i = 0; i < r; ++i) {
                const double* arow = adapter.A.row(i);
                const double s = adapter.scale * btdu[i];
                for (std::size_t j = 0; j < d; ++j) dxrow[j] += s * arow[j];
            }
        }
        dh = std::move(dx);
    }
}

}  // namespace rtlppa
