#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "qpi/encoder.hpp"
#include "qpi/errors.hpp"
#include "qpi/heads.hpp"
#include "qpi/param_registry.hpp"
#include "qpi/rng.hpp"
#include "qpi/tensor.hpp"
#include "qpi/tokenizer.hpp"

namespace qpi {

enum class SetupKind { siamese, matched_aggregation };

inline const char* setup_kind_name(SetupKind s) {
    return s == SetupKind::siamese ? "siamese" : "ma";
}

inline std::size_t default_max_len(SetupKind s) {
    return s == SetupKind::siamese ? 32 : 64;
}

struct ModelConfig {
    EncoderConfig encoder;
    SetupKind setup = SetupKind::matched_aggregation;
    HeadKind head = HeadKind::cnn;
    std::vector<std::size_t> conv_widths = {2, 3, 4, 5};
    std::size_t filters_per_width = 100;
    std::size_t max_len = 64;

    std::size_t condensed_len() const {
        return head == HeadKind::cnn ? conv_widths.size() * filters_per_width
                                     : encoder.embed_dim;
    }

    std::size_t classifier_input_dim() const {
        return setup == SetupKind::siamese ? 2 * condensed_len() : condensed_len();
    }

    void validate() const {
        encoder.validate();
        if (max_len < 5 || max_len > encoder.max_position) {
            throw UsageError("model config: max_len " + std::to_string(max_len) +
                             " must be in [5, max_position=" +
                             std::to_string(encoder.max_position) + "]");
        }
        if (head == HeadKind::cnn) {
            if (conv_widths.empty() || filters_per_width == 0) {
                throw UsageError("model config: cnn head needs widths and filters");
            }
            for (std::size_t i = 0; i + 1 < conv_widths.size(); ++i) {
                if (conv_widths[i] >= conv_widths[i + 1]) {
                    throw UsageError("model config: conv widths must be strictly increasing");
                }
            }
            if (conv_widths.back() >= max_len) {
                throw UsageError("model config: largest filter width " +
                                 std::to_string(conv_widths.back()) +
                                 " does not fit max_len " + std::to_string(max_len));
            }
        }
    }
};

// Full-scale defaults for the given setup.
inline ModelConfig base_config(SetupKind setup, HeadKind head) {
    ModelConfig cfg;
    cfg.setup = setup;
    cfg.head = head;
    cfg.max_len = default_max_len(setup);
    return cfg;
}

// Small configuration for tests and gradient checks.
inline ModelConfig tiny_config(SetupKind setup, HeadKind head) {
    ModelConfig cfg;
    cfg.encoder.num_layers = 2;
    cfg.encoder.num_heads = 2;
    cfg.encoder.embed_dim = 16;
    cfg.encoder.ffn_dim = 64;
    cfg.encoder.max_position = 64;
    cfg.encoder.vocab_size = 64;
    cfg.setup = setup;
    cfg.head = head;
    cfg.conv_widths = {2, 3};
    cfg.filters_per_width = 2;
    cfg.max_len = setup == SetupKind::siamese ? 16 : 24;
    return cfg;
}

struct ParamShape {
    std::string name;
    std::vector<std::size_t> shape;
};

namespace detail {

inline void layer_param_shapes(const ModelConfig& cfg, std::size_t layer,
                               std::vector<ParamShape>& out) {
    const std::size_t d = cfg.encoder.embed_dim;
    const std::size_t f = cfg.encoder.ffn_dim;
    const std::string base = "encoder.layer." + std::to_string(layer) + ".";
    out.push_back({base + "attention.W_q", {d, d}});
    out.push_back({base + "attention.b_q", {d}});
    out.push_back({base + "attention.W_k", {d, d}});
    out.push_back({base + "attention.b_k", {d}});
    out.push_back({base + "attention.W_v", {d, d}});
    out.push_back({base + "attention.b_v", {d}});
    out.push_back({base + "attention.W_o", {d, d}});
    out.push_back({base + "attention.b_o", {d}});
    out.push_back({base + "attention.layer_norm.gamma", {d}});
    out.push_back({base + "attention.layer_norm.beta", {d}});
    out.push_back({base + "ffn.W_1", {d, f}});
    out.push_back({base + "ffn.b_1", {f}});
    out.push_back({base + "ffn.W_2", {f, d}});
    out.push_back({base + "ffn.b_2", {d}});
    out.push_back({base + "ffn.layer_norm.gamma", {d}});
    out.push_back({base + "ffn.layer_norm.beta", {d}});
}

}  // namespace detail

// Canonical parameter inventory (names and shapes) for a configuration, in
// registry order. Checkpoints, counting and model construction all derive
// from this single listing.
inline std::vector<ParamShape> parameter_shapes(const ModelConfig& cfg) {
    const std::size_t d = cfg.encoder.embed_dim;
    std::vector<ParamShape> out;
    out.push_back({"embeddings.token_table", {cfg.encoder.vocab_size, d}});
    out.push_back({"embeddings.position_table", {cfg.encoder.max_position, d}});
    out.push_back({"embeddings.segment_table", {2, d}});
    out.push_back({"embeddings.layer_norm.gamma", {d}});
    out.push_back({"embeddings.layer_norm.beta", {d}});
    for (std::size_t l = 0; l < cfg.encoder.num_layers; ++l) {
        detail::layer_param_shapes(cfg, l, out);
    }
    if (cfg.head == HeadKind::cnn) {
        for (std::size_t g : cfg.conv_widths) {
            for (std::size_t j = 0; j < cfg.filters_per_width; ++j) {
                const std::string base =
                    "head.cnn.width" + std::to_string(g) + ".filter" + std::to_string(j) + ".";
                out.push_back({base + "weight", {g, d}});
                out.push_back({base + "bias", {1}});
            }
        }
    }
    out.push_back({"classifier.weight", {cfg.classifier_input_dim(), 2}});
    out.push_back({"classifier.bias", {2}});
    return out;
}

// Whether a parameter is trainable when the top `k` of `num_layers` encoder
// layers are tunable: head and classifier always, layer i iff it is among the
// top k, embeddings only under full fine-tuning (k == num_layers), which is
// the reading of the published per-k parameter counts.
inline bool param_trainable(const std::string& name, std::size_t k, std::size_t num_layers) {
    if (name.rfind("embeddings.", 0) == 0) return k == num_layers;
    if (name.rfind("encoder.layer.", 0) == 0) {
        const std::size_t start = std::string("encoder.layer.").size();
        const std::size_t layer = std::stoul(name.substr(start, name.find('.', start) - start));
        return layer >= num_layers - k;
    }
    return true;  // head + classifier
}

// Trainable-parameter count for a configuration without materializing any
// tensor data.
inline std::size_t count_trainable_params(const ModelConfig& cfg, std::size_t k) {
    if (k > cfg.encoder.num_layers) {
        throw UsageError("count_trainable_params: k " + std::to_string(k) + " out of range 0.." +
                         std::to_string(cfg.encoder.num_layers));
    }
    std::size_t total = 0;
    for (const auto& p : parameter_shapes(cfg)) {
        if (!param_trainable(p.name, k, cfg.encoder.num_layers)) continue;
        std::size_t n = 1;
        for (std::size_t dim : p.shape) n *= dim;
        total += n;
    }
    return total;
}

// The full model: embeddings, encoder stack, condenser head and classifier,
// with every parameter registered by name.
template <typename T>
class Model {
public:
    ModelConfig config;
    EmbeddingTables<T> embeddings;
    std::vector<EncoderLayerParams<T>> layers;
    ConvFilterBank<T> conv_bank;  // populated only for the cnn head
    ClassifierParams<T> classifier;

    // Constructs with truncated-normal(0.02) weights, zero biases and
    // identity layer norms.
    static Model initialized(const ModelConfig& cfg, std::uint64_t seed) {
        Model m(cfg);
        Rng init_rng = Rng(seed).fork(0x696e6974);
        for (auto& e : m.registry_.entries()) {
            auto& data = e.tensor.values();
            if (is_weight_param(e.name)) {
                for (auto& v : data) v = static_cast<T>(init_rng.truncated_normal(kInitStd));
            } else if (is_gamma_param(e.name)) {
                std::fill(data.begin(), data.end(), T(1));
            }  // biases and betas stay zero
        }
        m.dropout_rng_ = Rng(seed).fork(0x64726f70);
        m.set_trainable_encoders(cfg.encoder.num_layers);
        return m;
    }

    // Constructs with all-zero parameters (checkpoint loading fills them in).
    static Model zeros(const ModelConfig& cfg) {
        Model m(cfg);
        m.set_trainable_encoders(cfg.encoder.num_layers);
        return m;
    }

    ParamRegistry<T>& params() { return registry_; }
    const ParamRegistry<T>& params() const { return registry_; }

    bool train_mode() const { return train_mode_; }
    void set_train_mode(bool on) { train_mode_ = on; }

    Rng& dropout_rng() { return dropout_rng_; }
    void reseed_dropout(std::uint64_t seed) { dropout_rng_ = Rng(seed).fork(0x64726f70); }

    std::size_t trainable_encoders() const { return trainable_k_; }

    std::size_t encode_invocations() const { return encode_invocations_; }
    void reset_encode_invocations() { encode_invocations_ = 0; }

    // Marks the top k encoder layers trainable and freezes the rest; the
    // embedding tables thaw only at k == num_layers; head and classifier stay
    // trainable throughout.
    void set_trainable_encoders(std::size_t k) {
        const std::size_t n = config.encoder.num_layers;
        if (k > n) {
            throw UsageError("set_trainable_encoders: k " + std::to_string(k) +
                             " out of range 0.." + std::to_string(n));
        }
        trainable_k_ = k;
        for (auto& e : registry_.entries()) {
            const bool t = param_trainable(e.name, k, n);
            e.trainable = t;
            e.tensor.set_requires_grad(t);
        }
    }

    std::size_t count_trainable() const { return registry_.count_trainable(); }

    Tensor<T> encode(const EncodedInput& input) {
        ++encode_invocations_;
        return qpi::encode(input, embeddings, layers, config.encoder, dropout_rng_,
                           train_mode_);
    }

    Condensed<T> condense(const Tensor<T>& hidden, const std::vector<bool>& mask) {
        if (config.head == HeadKind::cnn) {
            return cnn_condense(hidden, conv_bank, mask, config.encoder.dropout_rate,
                                dropout_rng_, train_mode_);
        }
        return mean_pool(hidden, mask);
    }

    Tensor<T> classify_probs(const Tensor<T>& input) { return classify(input, classifier); }

private:
    explicit Model(const ModelConfig& cfg) : config(cfg), dropout_rng_(0) {
        cfg.validate();
        build_tensors();
    }

    static bool is_weight_param(const std::string& name) {
        return name.find("W_") != std::string::npos || name.ends_with(".weight") ||
               name == "classifier.weight" || name.find("_table") != std::string::npos;
    }

    static bool is_gamma_param(const std::string& name) { return name.ends_with("gamma"); }

    // Allocates every parameter and wires struct members to registry entries.
    void build_tensors() {
        for (const auto& p : parameter_shapes(config)) {
            registry_.add(p.name, Tensor<T>(p.shape), true);
        }
        embeddings.token_table = registry_.tensor("embeddings.token_table");
        embeddings.position_table = registry_.tensor("embeddings.position_table");
        embeddings.segment_table = registry_.tensor("embeddings.segment_table");
        embeddings.ln_gamma = registry_.tensor("embeddings.layer_norm.gamma");
        embeddings.ln_beta = registry_.tensor("embeddings.layer_norm.beta");
        layers.resize(config.encoder.num_layers);
        for (std::size_t l = 0; l < config.encoder.num_layers; ++l) {
            const std::string base = "encoder.layer." + std::to_string(l) + ".";
            auto& lay = layers[l];
            lay.attention.w_q = registry_.tensor(base + "attention.W_q");
            lay.attention.b_q = registry_.tensor(base + "attention.b_q");
            lay.attention.w_k = registry_.tensor(base + "attention.W_k");
            lay.attention.b_k = registry_.tensor(base + "attention.b_k");
            lay.attention.w_v = registry_.tensor(base + "attention.W_v");
            lay.attention.b_v = registry_.tensor(base + "attention.b_v");
            lay.attention.w_o = registry_.tensor(base + "attention.W_o");
            lay.attention.b_o = registry_.tensor(base + "attention.b_o");
            lay.attn_ln_gamma = registry_.tensor(base + "attention.layer_norm.gamma");
            lay.attn_ln_beta = registry_.tensor(base + "attention.layer_norm.beta");
            lay.ffn.w1 = registry_.tensor(base + "ffn.W_1");
            lay.ffn.b1 = registry_.tensor(base + "ffn.b_1");
            lay.ffn.w2 = registry_.tensor(base + "ffn.W_2");
            lay.ffn.b2 = registry_.tensor(base + "ffn.b_2");
            lay.ffn_ln_gamma = registry_.tensor(base + "ffn.layer_norm.gamma");
            lay.ffn_ln_beta = registry_.tensor(base + "ffn.layer_norm.beta");
        }
        if (config.head == HeadKind::cnn) {
            conv_bank.widths = config.conv_widths;
            conv_bank.filters_per_width = config.filters_per_width;
            conv_bank.filters.resize(config.conv_widths.size());
            for (std::size_t wi = 0; wi < config.conv_widths.size(); ++wi) {
                const std::size_t g = config.conv_widths[wi];
                conv_bank.filters[wi].resize(config.filters_per_width);
                for (std::size_t j = 0; j < config.filters_per_width; ++j) {
                    const std::string base =
                        "head.cnn.width" + std::to_string(g) + ".filter" + std::to_string(j) +
                        ".";
                    conv_bank.filters[wi][j].weight = registry_.tensor(base + "weight");
                    conv_bank.filters[wi][j].bias = registry_.tensor(base + "bias");
                }
            }
        }
        classifier.weight = registry_.tensor("classifier.weight");
        classifier.bias = registry_.tensor("classifier.bias");
    }

    ParamRegistry<T> registry_;
    Rng dropout_rng_;
    bool train_mode_ = false;
    std::size_t trainable_k_ = 0;
    std::size_t encode_invocations_ = 0;
};

// Count over a constructed model: sums the registry's trainable tensors.
template <typename T>
std::size_t count_trainable_params(const Model<T>& model) {
    return model.params().count_trainable();
}

}  // namespace qpi
