#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "qpi/errors.hpp"
#include "qpi/model.hpp"
#include "qpi/pipelines.hpp"

namespace qpi {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

// An ordered, immutable-after-load collection of question pairs.
struct Dataset {
    std::vector<QuestionPair> pairs;
    std::string split;                   // train / validation / test / (custom)
    std::size_t class_counts[2] = {0, 0};

    std::size_t size() const { return pairs.size(); }
};

namespace detail {

inline std::string lower_copy(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

inline std::string trim_copy(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find('\t', start);
        if (pos == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

}  // namespace detail

// Parses a tab-separated file with columns question1, question2, is_duplicate.
// A first line whose third column is the literal header name is skipped.
// Malformed rows are collected and reported together with their line numbers.
inline Dataset load_pairs_tsv(const std::string& path, const std::string& split_tag = "") {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("dataset: cannot read '" + path + "'");
    Dataset ds;
    ds.split = split_tag;
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> problems;
    while (std::getline(in, line)) {
        ++line_no;
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        std::vector<std::string> fields = detail::split_tabs(line);
        if (line_no == 1 && fields.size() == 3 &&
            detail::lower_copy(detail::trim_copy(fields[2])) == "is_duplicate") {
            continue;  // header
        }
        if (fields.size() != 3) {
            problems.push_back("line " + std::to_string(line_no) + ": expected 3 tab-separated " +
                               "columns, got " + std::to_string(fields.size()));
            continue;
        }
        const std::string label = detail::trim_copy(fields[2]);
        if (label != "0" && label != "1") {
            problems.push_back("line " + std::to_string(line_no) + ": label must be 0 or 1, got '" +
                               label + "'");
            continue;
        }
        QuestionPair pair;
        pair.question_a = fields[0];
        pair.question_b = fields[1];
        pair.label = label == "1" ? 1 : 0;
        ++ds.class_counts[*pair.label];
        ds.pairs.push_back(std::move(pair));
    }
    if (!problems.empty()) {
        std::string msg = "dataset '" + path + "': " + std::to_string(problems.size()) +
                          " malformed row(s):";
        const std::size_t shown = std::min<std::size_t>(problems.size(), 10);
        for (std::size_t i = 0; i < shown; ++i) msg += "\n  " + problems[i];
        if (shown < problems.size()) msg += "\n  ...";
        throw DataError(msg);
    }
    return ds;
}

struct StandardSplits {
    Dataset train;
    Dataset validation;
    Dataset test;
};

// Loads train.tsv / dev.tsv / test.tsv from a directory. With strict_split,
// validation and test must hold exactly 10000 pairs each.
inline StandardSplits load_standard_splits(const std::string& dir, bool strict_split) {
    StandardSplits s;
    const std::string train_path = dir + "/train.tsv";
    const std::string dev_path = dir + "/dev.tsv";
    const std::string test_path = dir + "/test.tsv";
    for (const auto& p : {train_path, dev_path, test_path}) {
        std::ifstream probe(p);
        if (!probe) throw DataError("splits: missing file '" + p + "'");
    }
    s.train = load_pairs_tsv(train_path, "train");
    s.validation = load_pairs_tsv(dev_path, "validation");
    s.test = load_pairs_tsv(test_path, "test");
    if (strict_split) {
        if (s.validation.size() != 10000) {
            throw DataError("splits: strict split expects 10000 validation pairs, got " +
                            std::to_string(s.validation.size()));
        }
        if (s.test.size() != 10000) {
            throw DataError("splits: strict split expects 10000 test pairs, got " +
                            std::to_string(s.test.size()));
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// checkpoint format
//
//   8-byte magic | u32 version | u32 tensor count
//   per tensor:  u32 name length | name | u32 rank | u32 dims... | f32 data
//   trailer:     u32 blob length | key=value text (config + metadata)
//
// Everything is little-endian; data is row-major 32-bit float.
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'Q', 'P', 'I', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline std::uint32_t read_u32(std::istream& in, const char* what) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw DataError(std::string("checkpoint: truncated while reading ") + what);
    return v;
}

struct RawTensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<float> data;
};

inline void write_checkpoint_raw(const std::string& path, const std::vector<RawTensor>& tensors,
                                 const std::string& blob) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("checkpoint: cannot write '" + path + "'");
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    write_u32(out, kCheckpointVersion);
    write_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        write_u32(out, static_cast<std::uint32_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        write_u32(out, static_cast<std::uint32_t>(t.shape.size()));
        for (std::size_t d : t.shape) write_u32(out, static_cast<std::uint32_t>(d));
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    }
    write_u32(out, static_cast<std::uint32_t>(blob.size()));
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw DataError("checkpoint: write failed for '" + path + "'");
}

struct RawCheckpoint {
    std::vector<RawTensor> tensors;
    std::string blob;
};

inline RawCheckpoint read_checkpoint_raw(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint: cannot read '" + path + "'");
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        throw DataError("checkpoint: bad magic in '" + path + "' (not a checkpoint file)");
    }
    const std::uint32_t version = read_u32(in, "version");
    if (version != kCheckpointVersion) {
        throw DataError("checkpoint: unsupported version " + std::to_string(version) +
                        " (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    const std::uint32_t count = read_u32(in, "tensor count");
    RawCheckpoint ck;
    ck.tensors.reserve(count);
    for (std::uint32_t t = 0; t < count; ++t) {
        RawTensor raw;
        const std::uint32_t name_len = read_u32(in, "tensor name length");
        raw.name.resize(name_len);
        in.read(raw.name.data(), name_len);
        if (!in) throw DataError("checkpoint: truncated while reading tensor name");
        const std::uint32_t rank = read_u32(in, "tensor rank");
        std::size_t numel = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            const std::uint32_t d = read_u32(in, "tensor dims");
            raw.shape.push_back(d);
            numel *= d;
        }
        raw.data.resize(numel);
        in.read(reinterpret_cast<char*>(raw.data.data()),
                static_cast<std::streamsize>(numel * sizeof(float)));
        if (!in) {
            throw DataError("checkpoint: truncated mid-tensor at '" + raw.name + "'");
        }
        ck.tensors.push_back(std::move(raw));
    }
    const std::uint32_t blob_len = read_u32(in, "config blob length");
    ck.blob.resize(blob_len);
    in.read(ck.blob.data(), blob_len);
    if (!in) throw DataError("checkpoint: truncated while reading config blob");
    return ck;
}

}  // namespace detail

inline std::string format_config_blob(const ModelConfig& cfg,
                                      const std::map<std::string, std::string>& meta) {
    std::ostringstream os;
    os << "model.num_layers=" << cfg.encoder.num_layers << "\n";
    os << "model.num_heads=" << cfg.encoder.num_heads << "\n";
    os << "model.embed_dim=" << cfg.encoder.embed_dim << "\n";
    os << "model.ffn_dim=" << cfg.encoder.ffn_dim << "\n";
    os << "model.max_position=" << cfg.encoder.max_position << "\n";
    os << "model.vocab_size=" << cfg.encoder.vocab_size << "\n";
    os << "model.dropout_rate=" << cfg.encoder.dropout_rate << "\n";
    os << "model.setup=" << setup_kind_name(cfg.setup) << "\n";
    os << "model.head=" << head_kind_name(cfg.head) << "\n";
    os << "model.conv_widths=";
    for (std::size_t i = 0; i < cfg.conv_widths.size(); ++i) {
        if (i) os << ",";
        os << cfg.conv_widths[i];
    }
    os << "\n";
    os << "model.filters_per_width=" << cfg.filters_per_width << "\n";
    os << "model.max_len=" << cfg.max_len << "\n";
    for (const auto& [k, v] : meta) os << "meta." << k << "=" << v << "\n";
    return os.str();
}

struct ParsedBlob {
    ModelConfig config;
    std::map<std::string, std::string> meta;
};

inline ParsedBlob parse_config_blob(const std::string& blob) {
    ParsedBlob out;
    std::istringstream is(blob);
    std::string line;
    auto to_size = [](const std::string& v, const std::string& key) -> std::size_t {
        try {
            return static_cast<std::size_t>(std::stoull(v));
        } catch (...) {
            throw DataError("checkpoint: bad numeric value '" + v + "' for " + key);
        }
    };
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw DataError("checkpoint: malformed config line '" + line + "'");
        }
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "model.num_layers") out.config.encoder.num_layers = to_size(value, key);
        else if (key == "model.num_heads") out.config.encoder.num_heads = to_size(value, key);
        else if (key == "model.embed_dim") out.config.encoder.embed_dim = to_size(value, key);
        else if (key == "model.ffn_dim") out.config.encoder.ffn_dim = to_size(value, key);
        else if (key == "model.max_position") out.config.encoder.max_position = to_size(value, key);
        else if (key == "model.vocab_size") out.config.encoder.vocab_size = to_size(value, key);
        else if (key == "model.dropout_rate") out.config.encoder.dropout_rate = std::stod(value);
        else if (key == "model.setup") {
            if (value == "siamese") out.config.setup = SetupKind::siamese;
            else if (value == "ma") out.config.setup = SetupKind::matched_aggregation;
            else throw DataError("checkpoint: unknown setup '" + value + "'");
        } else if (key == "model.head") {
            if (value == "cnn") out.config.head = HeadKind::cnn;
            else if (value == "mean") out.config.head = HeadKind::mean_pool;
            else throw DataError("checkpoint: unknown head '" + value + "'");
        } else if (key == "model.conv_widths") {
            out.config.conv_widths.clear();
            std::istringstream ws(value);
            std::string item;
            while (std::getline(ws, item, ',')) {
                if (!item.empty()) out.config.conv_widths.push_back(to_size(item, key));
            }
        } else if (key == "model.filters_per_width") {
            out.config.filters_per_width = to_size(value, key);
        } else if (key == "model.max_len") {
            out.config.max_len = to_size(value, key);
        } else if (key.rfind("meta.", 0) == 0) {
            out.meta[key.substr(5)] = value;
        } else {
            throw DataError("checkpoint: unknown config key '" + key + "'");
        }
    }
    return out;
}

// Serializes every registered parameter plus the config/metadata trailer.
template <typename T>
void save_checkpoint(const Model<T>& model, const std::map<std::string, std::string>& meta,
                     const std::string& path) {
    std::vector<detail::RawTensor> tensors;
    tensors.reserve(model.params().size());
    for (const auto& e : model.params().entries()) {
        detail::RawTensor raw;
        raw.name = e.name;
        raw.shape = e.tensor.shape();
        raw.data.resize(e.tensor.numel());
        const auto& values = e.tensor.values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            raw.data[i] = static_cast<float>(values[i]);
        }
        tensors.push_back(std::move(raw));
    }
    detail::write_checkpoint_raw(path, tensors, format_config_blob(model.config, meta));
}

template <typename T>
struct LoadedCheckpoint {
    Model<T> model;
    std::map<std::string, std::string> meta;
    std::vector<std::string> warnings;  // extra tensors present in the file
};

// Reads a checkpoint, validates every tensor against the embedded config and
// reconstructs the model. Missing tensors are an error; extras a warning.
template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
    detail::RawCheckpoint raw = detail::read_checkpoint_raw(path);
    ParsedBlob blob = parse_config_blob(raw.blob);
    LoadedCheckpoint<T> out{Model<T>::zeros(blob.config), std::move(blob.meta), {}};
    std::map<std::string, const detail::RawTensor*> by_name;
    for (const auto& t : raw.tensors) by_name[t.name] = &t;

    std::vector<std::string> missing;
    for (auto& e : out.model.params().entries()) {
        auto it = by_name.find(e.name);
        if (it == by_name.end()) {
            missing.push_back(e.name);
            continue;
        }
        const detail::RawTensor& t = *it->second;
        if (t.shape != e.tensor.shape()) {
            throw DataError("checkpoint: shape mismatch for '" + e.name + "': file has " +
                            detail::shape_str(t.shape) + ", config expects " +
                            detail::shape_str(e.tensor.shape()));
        }
        auto& values = e.tensor.values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            values[i] = static_cast<T>(t.data[i]);
        }
        by_name.erase(it);
    }
    if (!missing.empty()) {
        std::string msg = "checkpoint: missing tensors:";
        for (const auto& name : missing) msg += " " + name;
        throw DataError(msg);
    }
    for (const auto& [name, t] : by_name) {
        out.warnings.push_back("checkpoint: extra tensor '" + name + "' ignored");
    }
    return out;
}

}  // namespace qpi
