#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qpi/errors.hpp"
#include "qpi/model.hpp"
#include "qpi/tokenizer.hpp"

namespace qpi {

// The task triple: two questions and, outside prediction mode, a 0/1 label
// where 1 means the questions are duplicates.
struct QuestionPair {
    std::string question_a;
    std::string question_b;
    std::optional<int> label;
};

struct Prediction {
    int label = 0;
    double confidence = 0.0;
    double prob_duplicate = 0.0;
};

namespace detail {

// Encode + condense one question through the shared encoder and head.
template <typename T>
Condensed<T> condense_single(const std::string& text, Model<T>& model, const Vocab& vocab) {
    const EncodedInput enc =
        encode_single(tokenize(text, vocab), vocab, model.config.max_len);
    Tensor<T> hidden = model.encode(enc);
    return model.condense(hidden, enc.attention_mask);
}

}  // namespace detail

template <typename T>
struct SiameseParts {
    Tensor<T> h_a;
    Tensor<T> h_b;
    Tensor<T> probs;
};

// Siamese setup: both questions pass through the same encoder and head (the
// parameters are structurally shared, not copied); the classifier sees
// h_a concatenated with h_b.
template <typename T>
SiameseParts<T> siamese_parts(const QuestionPair& pair, Model<T>& model, const Vocab& vocab) {
    if (model.config.setup != SetupKind::siamese) {
        throw UsageError("siamese_forward: model is configured as matched_aggregation");
    }
    Condensed<T> ha = detail::condense_single(pair.question_a, model, vocab);
    Condensed<T> hb = detail::condense_single(pair.question_b, model, vocab);
    Tensor<T> joined = concat_vecs<T>({ha.values, hb.values});
    return {ha.values, hb.values, model.classify_probs(joined)};
}

template <typename T>
Tensor<T> siamese_forward(const QuestionPair& pair, Model<T>& model, const Vocab& vocab) {
    return siamese_parts(pair, model, vocab).probs;
}

// Matched aggregation setup: one packed [CLS] A [SEP] B [SEP] sequence, one
// encoder pass, one condensed vector.
template <typename T>
Tensor<T> matched_aggregation_forward(const QuestionPair& pair, Model<T>& model,
                                      const Vocab& vocab) {
    if (model.config.setup != SetupKind::matched_aggregation) {
        throw UsageError("matched_aggregation_forward: model is configured as siamese");
    }
    const EncodedInput enc =
        encode_pair(tokenize(pair.question_a, vocab), tokenize(pair.question_b, vocab), vocab,
                    model.config.max_len);
    Tensor<T> hidden = model.encode(enc);
    Condensed<T> h = model.condense(hidden, enc.attention_mask);
    return model.classify_probs(h.values);
}

// Forward through whichever setup the model is configured for.
template <typename T>
Tensor<T> pipeline_forward(const QuestionPair& pair, Model<T>& model, const Vocab& vocab) {
    return model.config.setup == SetupKind::siamese
               ? siamese_forward(pair, model, vocab)
               : matched_aggregation_forward(pair, model, vocab);
}

// Inference: dropout disabled, argmax label (ties to 0) with its probability.
template <typename T>
Prediction predict(const QuestionPair& pair, Model<T>& model, const Vocab& vocab) {
    const bool was_training = model.train_mode();
    model.set_train_mode(false);
    Tensor<T> probs = pipeline_forward(pair, model, vocab);
    model.set_train_mode(was_training);
    Prediction out;
    out.label = predicted_label(probs);
    out.confidence = static_cast<double>(probs.at(static_cast<std::size_t>(out.label)));
    out.prob_duplicate = static_cast<double>(probs.at(1));
    return out;
}

}  // namespace qpi
