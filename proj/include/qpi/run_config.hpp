#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qpi/errors.hpp"
#include "qpi/model.hpp"
#include "qpi/training.hpp"

namespace qpi {

enum class Precision { f32, f64 };

inline const char* precision_name(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

// Every architecture and training hyperparameter, with the published values
// as defaults. Parsed from a flat key=value file with [section] headers;
// unknown sections or keys are rejected.
struct RunConfig {
    // [model]
    std::size_t num_layers = 12;
    std::size_t num_heads = 12;
    std::size_t embed_dim = 768;
    std::size_t ffn_dim = 3072;
    std::size_t max_position = 512;
    std::size_t vocab_size = 30522;
    double dropout_rate = 0.1;

    // [pipeline]
    SetupKind setup = SetupKind::matched_aggregation;
    HeadKind head = HeadKind::cnn;
    std::vector<std::size_t> conv_widths = {2, 3, 4, 5};
    std::size_t filters_per_width = 100;
    std::optional<std::size_t> max_len;          // defaults per setup: 64 ma / 32 siamese
    std::optional<std::size_t> trainable_encoders;  // defaults to num_layers

    // [train]
    std::size_t epochs = 12;
    std::size_t batch_size = 8;
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 42;
    std::size_t min_freq = 1;

    // [data]
    bool strict_split = false;
    Precision precision = Precision::f32;

    std::size_t resolved_max_len() const {
        return max_len.value_or(default_max_len(setup));
    }

    std::size_t resolved_trainable_encoders() const {
        return trainable_encoders.value_or(num_layers);
    }

    ModelConfig to_model_config() const {
        ModelConfig cfg;
        cfg.encoder.num_layers = num_layers;
        cfg.encoder.num_heads = num_heads;
        cfg.encoder.embed_dim = embed_dim;
        cfg.encoder.ffn_dim = ffn_dim;
        cfg.encoder.max_position = max_position;
        cfg.encoder.vocab_size = vocab_size;
        cfg.encoder.dropout_rate = dropout_rate;
        cfg.setup = setup;
        cfg.head = head;
        cfg.conv_widths = conv_widths;
        cfg.filters_per_width = filters_per_width;
        cfg.max_len = resolved_max_len();
        return cfg;
    }

    TrainOptions to_train_options() const {
        TrainOptions opts;
        opts.epochs = epochs;
        opts.batch_size = batch_size;
        opts.adam.lr = lr;
        opts.adam.beta1 = beta1;
        opts.adam.beta2 = beta2;
        opts.adam.eps = adam_eps;
        opts.seed = seed;
        return opts;
    }

    void validate() const {
        to_model_config().validate();
        if (resolved_trainable_encoders() > num_layers) {
            throw UsageError("config: trainable_encoders " +
                             std::to_string(resolved_trainable_encoders()) +
                             " exceeds num_layers " + std::to_string(num_layers));
        }
        if (batch_size == 0) throw UsageError("config: batch_size must be positive");
        if (min_freq == 0) throw UsageError("config: min_freq must be positive");
        if (lr <= 0.0) throw UsageError("config: lr must be positive");
    }
};

// The small test/grad-check configuration.
inline void apply_tiny_preset(RunConfig& cfg) {
    cfg.num_layers = 2;
    cfg.num_heads = 2;
    cfg.embed_dim = 16;
    cfg.ffn_dim = 64;
    cfg.max_position = 64;
    cfg.vocab_size = 64;
    cfg.conv_widths = {2, 3};
    cfg.filters_per_width = 2;
    cfg.max_len.reset();
    cfg.trainable_encoders.reset();
}

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw UsageError("config: field '" + key + "' expects a boolean, got '" + v + "'");
}

inline std::size_t parse_size(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const auto r = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return static_cast<std::size_t>(r);
    } catch (...) {
        throw UsageError("config: field '" + key + "' expects a non-negative integer, got '" +
                         v + "'");
    }
}

inline double parse_double(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (...) {
        throw UsageError("config: field '" + key + "' expects a number, got '" + v + "'");
    }
}

}  // namespace detail

inline SetupKind parse_setup(const std::string& v) {
    if (v == "siamese") return SetupKind::siamese;
    if (v == "ma" || v == "matched_aggregation") return SetupKind::matched_aggregation;
    throw UsageError("config: field 'setup' must be siamese or ma, got '" + v + "'");
}

inline HeadKind parse_head(const std::string& v) {
    if (v == "cnn") return HeadKind::cnn;
    if (v == "mean" || v == "mean_pool") return HeadKind::mean_pool;
    throw UsageError("config: field 'head' must be cnn or mean, got '" + v + "'");
}

inline Precision parse_precision(const std::string& v) {
    if (v == "f32") return Precision::f32;
    if (v == "f64") return Precision::f64;
    throw UsageError("config: field 'precision' must be f32 or f64, got '" + v + "'");
}

// Applies one key=value setting; `section` may be empty for top-level keys.
inline void apply_config_entry(RunConfig& cfg, const std::string& section,
                               const std::string& key, const std::string& value) {
    const std::string qualified = section.empty() ? key : section + "." + key;
    if (section.empty() && key == "preset") {
        if (value == "tiny") {
            apply_tiny_preset(cfg);
        } else if (value == "base") {
            RunConfig fresh;
            fresh.seed = cfg.seed;
            cfg = fresh;
        } else {
            throw UsageError("config: unknown preset '" + value + "'");
        }
        return;
    }
    if (section == "model") {
        if (key == "num_layers") cfg.num_layers = detail::parse_size(value, qualified);
        else if (key == "num_heads") cfg.num_heads = detail::parse_size(value, qualified);
        else if (key == "embed_dim") cfg.embed_dim = detail::parse_size(value, qualified);
        else if (key == "ffn_dim") cfg.ffn_dim = detail::parse_size(value, qualified);
        else if (key == "max_position") cfg.max_position = detail::parse_size(value, qualified);
        else if (key == "vocab_size") cfg.vocab_size = detail::parse_size(value, qualified);
        else if (key == "dropout_rate") cfg.dropout_rate = detail::parse_double(value, qualified);
        else throw UsageError("config: unknown field '" + qualified + "'");
        return;
    }
    if (section == "pipeline") {
        if (key == "setup") cfg.setup = parse_setup(value);
        else if (key == "head") cfg.head = parse_head(value);
        else if (key == "max_len") cfg.max_len = detail::parse_size(value, qualified);
        else if (key == "trainable_encoders")
            cfg.trainable_encoders = detail::parse_size(value, qualified);
        else if (key == "filters_per_width")
            cfg.filters_per_width = detail::parse_size(value, qualified);
        else if (key == "conv_widths") {
            cfg.conv_widths.clear();
            std::istringstream ws(value);
            std::string item;
            while (std::getline(ws, item, ',')) {
                if (!item.empty()) cfg.conv_widths.push_back(detail::parse_size(item, qualified));
            }
            if (cfg.conv_widths.empty()) {
                throw UsageError("config: field 'pipeline.conv_widths' must list widths");
            }
        } else {
            throw UsageError("config: unknown field '" + qualified + "'");
        }
        return;
    }
    if (section == "train") {
        if (key == "epochs") cfg.epochs = detail::parse_size(value, qualified);
        else if (key == "batch_size") cfg.batch_size = detail::parse_size(value, qualified);
        else if (key == "lr") cfg.lr = detail::parse_double(value, qualified);
        else if (key == "beta1") cfg.beta1 = detail::parse_double(value, qualified);
        else if (key == "beta2") cfg.beta2 = detail::parse_double(value, qualified);
        else if (key == "adam_eps") cfg.adam_eps = detail::parse_double(value, qualified);
        else if (key == "seed") cfg.seed = detail::parse_size(value, qualified);
        else if (key == "min_freq") cfg.min_freq = detail::parse_size(value, qualified);
        else throw UsageError("config: unknown field '" + qualified + "'");
        return;
    }
    if (section == "data") {
        if (key == "strict_split") cfg.strict_split = detail::parse_bool(value, qualified);
        else if (key == "precision") cfg.precision = parse_precision(value);
        else throw UsageError("config: unknown field '" + qualified + "'");
        return;
    }
    throw UsageError("config: unknown section '" + section + "'");
}

inline RunConfig parse_run_config(std::istream& in, const std::string& origin) {
    RunConfig cfg;
    std::string line;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string trimmed = detail::trim_copy(line);
        if (trimmed.empty() || trimmed[0] == '#') continue;
        if (trimmed.front() == '[') {
            if (trimmed.back() != ']') {
                throw UsageError("config " + origin + ":" + std::to_string(line_no) +
                                 ": malformed section header '" + trimmed + "'");
            }
            section = trimmed.substr(1, trimmed.size() - 2);
            continue;
        }
        const std::size_t eq = trimmed.find('=');
        if (eq == std::string::npos) {
            throw UsageError("config " + origin + ":" + std::to_string(line_no) +
                             ": expected key=value, got '" + trimmed + "'");
        }
        const std::string key = detail::trim_copy(trimmed.substr(0, eq));
        const std::string value = detail::trim_copy(trimmed.substr(eq + 1));
        apply_config_entry(cfg, section, key, value);
    }
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("config: cannot read '" + path + "'");
    return parse_run_config(in, path);
}

}  // namespace qpi
