#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "qpi/errors.hpp"
#include "qpi/rng.hpp"
#include "qpi/tensor.hpp"
#include "qpi/tokenizer.hpp"

namespace qpi {

inline constexpr double kLayerNormEps = 1e-12;
inline constexpr double kMaskedScore = -1e9;
inline constexpr double kInitStd = 0.02;

struct EncoderConfig {
    std::size_t num_layers = 12;
    std::size_t num_heads = 12;
    std::size_t embed_dim = 768;
    std::size_t ffn_dim = 3072;
    std::size_t max_position = 512;
    std::size_t vocab_size = 30522;
    double dropout_rate = 0.1;

    std::size_t head_dim() const { return embed_dim / num_heads; }

    void validate() const {
        if (num_heads == 0 || embed_dim % num_heads != 0) {
            throw UsageError("encoder config: embed_dim " + std::to_string(embed_dim) +
                             " not divisible by num_heads " + std::to_string(num_heads));
        }
        if (embed_dim < 2) throw UsageError("encoder config: embed_dim must be >= 2");
        if (ffn_dim == 0) throw UsageError("encoder config: ffn_dim must be positive");
        if (vocab_size < 4) throw UsageError("encoder config: vocab_size must cover specials");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
            throw UsageError("encoder config: dropout_rate must be in [0,1)");
        }
    }
};

template <typename T>
struct EmbeddingTables {
    Tensor<T> token_table;     // [vocab_size, d]
    Tensor<T> position_table;  // [max_position, d]
    Tensor<T> segment_table;   // [2, d]
    Tensor<T> ln_gamma;        // [d]
    Tensor<T> ln_beta;         // [d]
};

template <typename T>
struct AttentionParams {
    Tensor<T> w_q, b_q;
    Tensor<T> w_k, b_k;
    Tensor<T> w_v, b_v;
    Tensor<T> w_o, b_o;
};

template <typename T>
struct FeedForwardParams {
    Tensor<T> w1, b1;  // [d, ffn_dim], [ffn_dim]
    Tensor<T> w2, b2;  // [ffn_dim, d], [d]
};

template <typename T>
struct EncoderLayerParams {
    AttentionParams<T> attention;
    Tensor<T> attn_ln_gamma, attn_ln_beta;
    FeedForwardParams<T> ffn;
    Tensor<T> ffn_ln_gamma, ffn_ln_beta;
};

// Per-position sum of token + position + segment embeddings, layer-normed,
// with dropout in train mode.
template <typename T>
Tensor<T> embed(const EncodedInput& input, const EmbeddingTables<T>& tables,
                const EncoderConfig& cfg, Rng& rng, bool train) {
    const std::size_t n = input.ids.size();
    if (n > cfg.max_position) {
        throw UsageError("embed: sequence length " + std::to_string(n) +
                         " exceeds max_position " + std::to_string(cfg.max_position));
    }
    for (int id : input.ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size) {
            throw DataError("embed: token id " + std::to_string(id) +
                            " out of range for vocab size " + std::to_string(cfg.vocab_size));
        }
    }
    std::vector<int> positions(n);
    for (std::size_t i = 0; i < n; ++i) positions[i] = static_cast<int>(i);
    Tensor<T> tok = embedding_rows(tables.token_table, input.ids);
    Tensor<T> pos = embedding_rows(tables.position_table, positions);
    Tensor<T> seg = embedding_rows(tables.segment_table, input.segment_ids);
    Tensor<T> summed = add(add(tok, pos), seg);
    Tensor<T> normed =
        layer_norm(summed, tables.ln_gamma, tables.ln_beta, static_cast<T>(kLayerNormEps));
    return dropout(normed, cfg.dropout_rate, rng, train);
}

namespace detail {

// Additive attention mask: 0 on visible key columns, a large negative score
// on masked ones. Shared by every query row.
template <typename T>
Tensor<T> attention_mask_bias(const std::vector<bool>& mask, std::size_t n) {
    std::vector<T> bias(n * n, T(0));
    for (std::size_t j = 0; j < n; ++j) {
        if (!mask[j]) {
            for (std::size_t i = 0; i < n; ++i) bias[i * n + j] = static_cast<T>(kMaskedScore);
        }
    }
    return Tensor<T>({n, n}, std::move(bias));
}

}  // namespace detail

// softmax(Q K^T * scale) V with masked key positions forced to (effectively)
// zero weight. `scale` defaults to 1/sqrt(d_k).
template <typename T>
Tensor<T> scaled_dot_product_attention(const Tensor<T>& q, const Tensor<T>& k,
                                       const Tensor<T>& v, const std::vector<bool>& mask,
                                       double scale = 0.0) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.shape() != k.shape() ||
        q.dim(0) != v.dim(0)) {
        throw ShapeError("attention: incompatible shapes Q" + detail::shape_str(q.shape()) +
                         " K" + detail::shape_str(k.shape()) + " V" +
                         detail::shape_str(v.shape()));
    }
    const std::size_t n = q.dim(0);
    if (mask.size() != n) {
        throw ShapeError("attention: mask length " + std::to_string(mask.size()) +
                         " does not match sequence length " + std::to_string(n));
    }
    bool any = false;
    for (bool b : mask) any = any || b;
    if (!any) throw UsageError("attention: every position is masked");
    if (scale == 0.0) scale = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
    Tensor<T> scores = scalar_mul(matmul(q, transpose(k)), static_cast<T>(scale));
    Tensor<T> biased = add(scores, detail::attention_mask_bias<T>(mask, n));
    Tensor<T> weights = softmax_rows(biased);
    return matmul(weights, v);
}

// Splits the projected Q/K/V into heads, runs scaled attention per head,
// concatenates and projects by W_o.
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& x, const AttentionParams<T>& p,
                               const std::vector<bool>& mask, std::size_t num_heads) {
    const std::size_t d = x.dim(1);
    if (num_heads == 0 || d % num_heads != 0) {
        throw UsageError("multi_head_attention: width " + std::to_string(d) +
                         " not divisible into " + std::to_string(num_heads) + " heads");
    }
    const std::size_t dk = d / num_heads;
    Tensor<T> q = add_row_bias(matmul(x, p.w_q), p.b_q);
    Tensor<T> k = add_row_bias(matmul(x, p.w_k), p.b_k);
    Tensor<T> v = add_row_bias(matmul(x, p.w_v), p.b_v);
    std::vector<Tensor<T>> heads;
    heads.reserve(num_heads);
    for (std::size_t h = 0; h < num_heads; ++h) {
        Tensor<T> qh = slice_cols(q, h * dk, dk);
        Tensor<T> kh = slice_cols(k, h * dk, dk);
        Tensor<T> vh = slice_cols(v, h * dk, dk);
        heads.push_back(scaled_dot_product_attention(qh, kh, vh, mask));
    }
    Tensor<T> concat = concat_cols(heads);
    return add_row_bias(matmul(concat, p.w_o), p.b_o);
}

// One encoder block: post-norm residual attention sublayer followed by a
// post-norm residual GELU feed-forward sublayer.
template <typename T>
Tensor<T> encoder_layer(const Tensor<T>& x, const EncoderLayerParams<T>& p,
                        const std::vector<bool>& mask, const EncoderConfig& cfg, Rng& rng,
                        bool train) {
    Tensor<T> attn = multi_head_attention(x, p.attention, mask, cfg.num_heads);
    attn = dropout(attn, cfg.dropout_rate, rng, train);
    Tensor<T> y1 = layer_norm(add(x, attn), p.attn_ln_gamma, p.attn_ln_beta,
                              static_cast<T>(kLayerNormEps));
    Tensor<T> hidden = gelu(add_row_bias(matmul(y1, p.ffn.w1), p.ffn.b1));
    Tensor<T> ffn_out = add_row_bias(matmul(hidden, p.ffn.w2), p.ffn.b2);
    ffn_out = dropout(ffn_out, cfg.dropout_rate, rng, train);
    return layer_norm(add(y1, ffn_out), p.ffn_ln_gamma, p.ffn_ln_beta,
                      static_cast<T>(kLayerNormEps));
}

// Full stack: embeddings then num_layers encoder blocks. Hidden states are
// returned for every position including padded ones; consumers apply the mask.
template <typename T>
Tensor<T> encode(const EncodedInput& input, const EmbeddingTables<T>& tables,
                 const std::vector<EncoderLayerParams<T>>& layers, const EncoderConfig& cfg,
                 Rng& rng, bool train) {
    Tensor<T> h = embed(input, tables, cfg, rng, train);
    for (const auto& layer : layers) {
        h = encoder_layer(h, layer, input.attention_mask, cfg, rng, train);
    }
    return h;
}

}  // namespace qpi
