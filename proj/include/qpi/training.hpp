#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "qpi/data_io.hpp"
#include "qpi/errors.hpp"
#include "qpi/model.hpp"
#include "qpi/pipelines.hpp"
#include "qpi/rng.hpp"
#include "qpi/tensor.hpp"

namespace qpi {

inline constexpr double kProbFloor = 1e-12;

// -log p[label], with probabilities clamped away from zero so the loss stays
// finite on saturated predictions.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& probs, int label) {
    if (label != 0 && label != 1) {
        throw UsageError("cross_entropy: label must be 0 or 1, got " + std::to_string(label));
    }
    if (probs.rank() != 1 || probs.dim(0) != 2) {
        throw UsageError("cross_entropy: expected a probability pair, got " +
                         detail::shape_str(probs.shape()));
    }
    Tensor<T> clamped = clamp_min(probs, static_cast<T>(kProbFloor));
    Tensor<T> picked = pick(clamped, static_cast<std::size_t>(label));
    return scalar_mul(log_elem(picked), T(-1));
}

// Mean cross-entropy over a batch of per-example probability pairs.
template <typename T>
Tensor<T> batch_cross_entropy(const std::vector<Tensor<T>>& probs, const std::vector<int>& labels) {
    if (probs.empty() || probs.size() != labels.size()) {
        throw UsageError("batch_cross_entropy: " + std::to_string(probs.size()) +
                         " probability pairs vs " + std::to_string(labels.size()) + " labels");
    }
    std::vector<Tensor<T>> losses;
    losses.reserve(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        losses.push_back(cross_entropy(probs[i], labels[i]));
    }
    return mean_all(stack_scalars(losses));
}

struct AdamConfig {
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moment buffers per parameter, keyed by registry name.
template <typename T>
struct AdamState {
    AdamConfig config;
    std::size_t step = 0;
    std::unordered_map<std::string, std::vector<T>> m;
    std::unordered_map<std::string, std::vector<T>> v;
};

// One bias-corrected Adam update over the trainable parameters. Frozen
// parameters are untouched; trainable gradients are zeroed afterwards.
template <typename T>
void adam_step(ParamRegistry<T>& params, AdamState<T>& state) {
    ++state.step;
    const double b1 = state.config.beta1;
    const double b2 = state.config.beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (auto& e : params.entries()) {
        if (!e.trainable) continue;
        if (!e.tensor.has_grad()) {
            throw UsageError("adam_step: trainable parameter '" + e.name +
                             "' has no gradient; forward/backward did not reach it");
        }
        auto& m = state.m[e.name];
        auto& v = state.v[e.name];
        if (m.empty()) m.assign(e.tensor.numel(), T(0));
        if (v.empty()) v.assign(e.tensor.numel(), T(0));
        auto& data = e.tensor.values();
        const auto& grad = e.tensor.grad();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double g = static_cast<double>(grad[i]);
            const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * g;
            const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * g * g;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double mhat = mi / corr1;
            const double vhat = vi / corr2;
            data[i] -= static_cast<T>(state.config.lr * mhat /
                                      (std::sqrt(vhat) + state.config.eps));
        }
        e.tensor.zero_grad();
    }
}

// Draws n indices with replacement, each example weighted by the inverse of
// its class frequency, so both classes are sampled at ~equal rates.
inline std::vector<std::size_t> weighted_sample_indices(const std::vector<int>& labels,
                                                        std::size_t n, Rng& rng) {
    std::size_t counts[2] = {0, 0};
    for (int l : labels) {
        if (l != 0 && l != 1) {
            throw UsageError("weighted_sample_indices: label must be 0 or 1, got " +
                             std::to_string(l));
        }
        ++counts[l];
    }
    if (counts[0] == 0 || counts[1] == 0) {
        throw UsageError("weighted_sample_indices: both classes must be present");
    }
    std::vector<double> cumulative(labels.size());
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        total += 1.0 / static_cast<double>(counts[labels[i]]);
        cumulative[i] = total;
    }
    std::vector<std::size_t> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.uniform() * total;
        const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        out.push_back(std::min<std::size_t>(
            static_cast<std::size_t>(it - cumulative.begin()), labels.size() - 1));
    }
    return out;
}

inline std::vector<std::size_t> weighted_sample_indices(const std::vector<int>& labels,
                                                        std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    return weighted_sample_indices(labels, n, rng);
}

struct EvalResult {
    double accuracy = 0.0;
    double f1 = 0.0;
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    std::vector<int> predictions;
    std::vector<double> prob_duplicate;
};

// Confusion counts, accuracy and positive-class F1 from aligned prediction
// and label lists (precision/recall conventions: 0 when a denominator is
// empty).
inline EvalResult metrics_from_predictions(const std::vector<int>& predictions,
                                           const std::vector<int>& labels) {
    if (predictions.empty() || predictions.size() != labels.size()) {
        throw UsageError("metrics: " + std::to_string(predictions.size()) +
                         " predictions vs " + std::to_string(labels.size()) + " labels");
    }
    EvalResult res;
    res.predictions = predictions;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (predictions[i] == 1 && labels[i] == 1) ++res.tp;
        if (predictions[i] == 1 && labels[i] == 0) ++res.fp;
        if (predictions[i] == 0 && labels[i] == 1) ++res.fn;
        if (predictions[i] == 0 && labels[i] == 0) ++res.tn;
    }
    res.accuracy = static_cast<double>(res.tp + res.tn) / static_cast<double>(labels.size());
    const double precision =
        res.tp + res.fp == 0 ? 0.0 : static_cast<double>(res.tp) / (res.tp + res.fp);
    const double recall =
        res.tp + res.fn == 0 ? 0.0 : static_cast<double>(res.tp) / (res.tp + res.fn);
    res.f1 = precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
    return res;
}

// Full-dataset evaluation; dropout is disabled for the whole pass.
template <typename T>
EvalResult evaluate(Model<T>& model, const Vocab& vocab, const Dataset& dataset) {
    if (dataset.pairs.empty()) throw UsageError("evaluate: empty dataset");
    std::vector<int> predictions;
    std::vector<int> labels;
    std::vector<double> probs;
    predictions.reserve(dataset.pairs.size());
    for (const auto& pair : dataset.pairs) {
        if (!pair.label.has_value()) {
            throw UsageError("evaluate: dataset contains an unlabeled pair");
        }
        const Prediction p = predict(pair, model, vocab);
        predictions.push_back(p.label);
        probs.push_back(p.prob_duplicate);
        labels.push_back(*pair.label);
    }
    EvalResult res = metrics_from_predictions(predictions, labels);
    res.prob_duplicate = std::move(probs);
    return res;
}

struct OverlapResult {
    bool applicable = false;  // false when system a made no errors
    double fraction = 0.0;
    std::size_t errors_a = 0;
    std::size_t fixed_by_b = 0;
};

// Among the examples system a got wrong, the fraction system b got right.
inline OverlapResult error_overlap(const std::vector<int>& preds_a,
                                   const std::vector<int>& preds_b,
                                   const std::vector<int>& labels) {
    if (preds_a.size() != preds_b.size() || preds_a.size() != labels.size()) {
        throw UsageError("error_overlap: prediction/label lengths differ (" +
                         std::to_string(preds_a.size()) + ", " + std::to_string(preds_b.size()) +
                         ", " + std::to_string(labels.size()) + ")");
    }
    OverlapResult res;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (preds_a[i] != labels[i]) {
            ++res.errors_a;
            if (preds_b[i] == labels[i]) ++res.fixed_by_b;
        }
    }
    if (res.errors_a > 0) {
        res.applicable = true;
        res.fraction = static_cast<double>(res.fixed_by_b) / static_cast<double>(res.errors_a);
    }
    return res;
}

struct TrainOptions {
    std::size_t epochs = 12;
    std::size_t batch_size = 8;
    AdamConfig adam;
    std::uint64_t seed = 0;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;
    double val_f1 = 0.0;
    double wall_time_s = 0.0;
};

struct TrainHistory {
    std::uint64_t seed = 0;
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;  // 1-based; 0 when no epoch ran
    double best_val_accuracy = 0.0;
};

// The training loop: per epoch, |train| weighted-with-replacement draws are
// batched and stepped with Adam; validation metrics are recorded and the
// parameters of the best-validation-accuracy epoch are restored at the end.
template <typename T>
TrainHistory train(Model<T>& model, const Vocab& vocab, const Dataset& train_set,
                   const Dataset& val_set, const TrainOptions& opts) {
    if (train_set.pairs.empty() || val_set.pairs.empty()) {
        throw UsageError("train: datasets must be non-empty");
    }
    if (opts.batch_size == 0) throw UsageError("train: batch_size must be positive");
    std::vector<int> labels;
    labels.reserve(train_set.pairs.size());
    for (const auto& p : train_set.pairs) {
        if (!p.label.has_value()) throw UsageError("train: unlabeled pair in train set");
        labels.push_back(*p.label);
    }

    TrainHistory history;
    history.seed = opts.seed;
    Rng sampler_rng = Rng(opts.seed).fork(0x73616d70);
    model.reseed_dropout(opts.seed);
    AdamState<T> adam;
    adam.config = opts.adam;

    std::vector<std::vector<T>> best_params;
    for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const std::vector<std::size_t> order =
            weighted_sample_indices(labels, train_set.pairs.size(), sampler_rng);
        model.set_train_mode(true);
        double loss_sum = 0.0;
        std::size_t example_count = 0;
        for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
            const std::size_t end = std::min(order.size(), start + opts.batch_size);
            std::vector<Tensor<T>> probs;
            std::vector<int> batch_labels;
            probs.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) {
                const QuestionPair& pair = train_set.pairs[order[i]];
                probs.push_back(pipeline_forward(pair, model, vocab));
                batch_labels.push_back(*pair.label);
            }
            Tensor<T> loss = batch_cross_entropy(probs, batch_labels);
            const double loss_val = static_cast<double>(loss.item());
            if (!std::isfinite(loss_val)) {
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                   ", batch starting at " + std::to_string(start));
            }
            loss_sum += loss_val * static_cast<double>(end - start);
            example_count += end - start;
            backward(loss);
            adam_step(model.params(), adam);
        }
        model.set_train_mode(false);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(example_count);
        const EvalResult val = evaluate(model, vocab, val_set);
        rec.val_accuracy = val.accuracy;
        rec.val_f1 = val.f1;
        rec.wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        history.epochs.push_back(rec);

        if (history.best_epoch == 0 || val.accuracy > history.best_val_accuracy) {
            history.best_epoch = epoch;
            history.best_val_accuracy = val.accuracy;
            best_params.clear();
            for (const auto& e : model.params().entries()) {
                best_params.push_back(e.tensor.values());
            }
        }
    }
    if (!best_params.empty()) {
        auto& entries = model.params().entries();
        for (std::size_t i = 0; i < entries.size(); ++i) {
            entries[i].tensor.values() = best_params[i];
        }
    }
    return history;
}

}  // namespace qpi
