#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "qpi/errors.hpp"
#include "qpi/rng.hpp"
#include "qpi/tensor.hpp"

namespace qpi {

enum class HeadKind { cnn, mean_pool };

inline const char* head_kind_name(HeadKind k) {
    return k == HeadKind::cnn ? "cnn" : "mean";
}

template <typename T>
struct ConvFilter {
    Tensor<T> weight;  // [g, d]
    Tensor<T> bias;    // scalar
};

// Parallel convolution filters grouped by window size. Filters are stored in
// (width-ascending, filter-index) order, which fixes the layout of the
// condensed vector.
template <typename T>
struct ConvFilterBank {
    std::vector<std::size_t> widths;
    std::size_t filters_per_width = 0;
    std::vector<std::vector<ConvFilter<T>>> filters;  // [width_idx][filter_idx]

    std::size_t total_filters() const { return widths.size() * filters_per_width; }

    std::size_t max_width() const {
        std::size_t m = 0;
        for (std::size_t g : widths) m = std::max(m, g);
        return m;
    }
};

// Condensed fixed-length representation of a sequence, tagged with the head
// that produced it.
template <typename T>
struct Condensed {
    Tensor<T> values;
    HeadKind provenance = HeadKind::cnn;
};

template <typename T>
struct ClassifierParams {
    Tensor<T> weight;  // [input_dim, 2]
    Tensor<T> bias;    // [2]
};

// ReLU feature map of one filter over every window of X: length n-g+1.
template <typename T>
Tensor<T> conv_feature_map(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    return relu(conv_windows(x, w, b));
}

// Maximum of a feature map; gradient reaches only the (first) argmax.
template <typename T>
Tensor<T> max_over_time(const Tensor<T>& e) {
    return max_vec(e);
}

// Convolves every filter over the unpadded prefix of X (windows touching
// [PAD] positions are excluded), max-pools each feature map, concatenates in
// (width-ascending, filter-index) order and applies dropout in train mode.
template <typename T>
Condensed<T> cnn_condense(const Tensor<T>& x, const ConvFilterBank<T>& bank,
                          const std::vector<bool>& mask, double dropout_rate, Rng& rng,
                          bool train) {
    if (x.rank() != 2 || mask.size() != x.dim(0)) {
        throw ShapeError("cnn_condense: mask length " + std::to_string(mask.size()) +
                         " does not match " + detail::shape_str(x.shape()));
    }
    std::size_t unpadded = 0;
    while (unpadded < mask.size() && mask[unpadded]) ++unpadded;
    if (unpadded < bank.max_width()) {
        throw UsageError("cnn_condense: unpadded length " + std::to_string(unpadded) +
                         " shorter than largest filter width " +
                         std::to_string(bank.max_width()));
    }
    Tensor<T> prefix = unpadded == x.dim(0) ? x : slice_rows(x, 0, unpadded);
    std::vector<Tensor<T>> pooled;
    pooled.reserve(bank.total_filters());
    for (std::size_t wi = 0; wi < bank.widths.size(); ++wi) {
        for (const auto& filter : bank.filters[wi]) {
            pooled.push_back(max_over_time(conv_feature_map(prefix, filter.weight, filter.bias)));
        }
    }
    Tensor<T> concat = stack_scalars(pooled);
    return {dropout(concat, dropout_rate, rng, train), HeadKind::cnn};
}

// Arithmetic mean of the hidden states over unmasked positions.
template <typename T>
Condensed<T> mean_pool(const Tensor<T>& x, const std::vector<bool>& mask) {
    return {masked_mean_rows(x, mask), HeadKind::mean_pool};
}

// softmax(h W + b): a two-way probability vector.
template <typename T>
Tensor<T> classify(const Tensor<T>& h, const ClassifierParams<T>& params) {
    if (h.rank() != 1 || params.weight.rank() != 2 || h.dim(0) != params.weight.dim(0)) {
        throw UsageError("classify: input width " + detail::shape_str(h.shape()) +
                         " does not match classifier " + detail::shape_str(params.weight.shape()));
    }
    return softmax_rows(linear_vec(h, params.weight, params.bias));
}

// Argmax with ties resolved to label 0.
template <typename T>
int predicted_label(const Tensor<T>& probs) {
    return probs.at(1) > probs.at(0) ? 1 : 0;
}

}  // namespace qpi
