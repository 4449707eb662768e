#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "qpi/errors.hpp"

namespace qpi {

inline constexpr const char* kPadToken = "[PAD]";
inline constexpr const char* kUnkToken = "[UNK]";
inline constexpr const char* kClsToken = "[CLS]";
inline constexpr const char* kSepToken = "[SEP]";

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kClsId = 2;
inline constexpr int kSepId = 3;

inline constexpr std::size_t kMaxWordChars = 100;

// Token inventory with dense ids. The four special tokens always occupy
// ids 0..3 so that zero-initialized id buffers are valid padding.
class Vocab {
public:
    Vocab() {
        add(kPadToken);
        add(kUnkToken);
        add(kClsToken);
        add(kSepToken);
    }

    int add(const std::string& token) {
        auto it = token_to_id_.find(token);
        if (it != token_to_id_.end()) return it->second;
        const int id = static_cast<int>(id_to_token_.size());
        token_to_id_[token] = id;
        id_to_token_.push_back(token);
        return id;
    }

    bool contains(const std::string& token) const { return token_to_id_.count(token) != 0; }

    int id(const std::string& token) const {
        auto it = token_to_id_.find(token);
        return it == token_to_id_.end() ? kUnkId : it->second;
    }

    const std::string& token(int id) const { return id_to_token_.at(static_cast<std::size_t>(id)); }

    std::size_t size() const { return id_to_token_.size(); }

    const std::vector<std::string>& tokens() const { return id_to_token_; }

    // One token per line, line number = id. The first four lines must be the
    // special tokens in their fixed order.
    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw DataError("vocab: cannot write '" + path + "'");
        for (const auto& t : id_to_token_) out << t << "\n";
    }

    static Vocab load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw DataError("vocab: cannot read '" + path + "'");
        Vocab v;
        std::string line;
        std::size_t line_no = 0;
        const char* expected[4] = {kPadToken, kUnkToken, kClsToken, kSepToken};
        while (std::getline(in, line)) {
            while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
            if (line_no < 4) {
                if (line != expected[line_no]) {
                    throw DataError("vocab: line " + std::to_string(line_no + 1) + " must be " +
                                    expected[line_no] + ", got '" + line + "'");
                }
            } else {
                if (line.empty()) {
                    throw DataError("vocab: empty token at line " + std::to_string(line_no + 1));
                }
                if (v.contains(line)) {
                    throw DataError("vocab: duplicate token '" + line + "' at line " +
                                    std::to_string(line_no + 1));
                }
                v.add(line);
            }
            ++line_no;
        }
        if (line_no < 4) throw DataError("vocab: file '" + path + "' is missing special tokens");
        return v;
    }

private:
    std::unordered_map<std::string, int> token_to_id_;
    std::vector<std::string> id_to_token_;
};

// Token ids, attention mask and segment ids for one padded sequence.
struct EncodedInput {
    std::vector<int> ids;
    std::vector<bool> attention_mask;  // true exactly on non-[PAD] positions
    std::vector<int> segment_ids;      // 0/1; all 0 for single sequences

    std::size_t unpadded_len() const {
        std::size_t n = 0;
        for (bool b : attention_mask) n += b ? 1 : 0;
        return n;
    }
};

namespace detail {

inline bool is_word_punct(unsigned char c) { return std::ispunct(c) != 0; }

// Lowercases and splits on whitespace; punctuation marks become their own
// tokens.
inline std::vector<std::string> pre_tokenize(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            if (!cur.empty()) {
                words.push_back(cur);
                cur.clear();
            }
        } else if (is_word_punct(c)) {
            if (!cur.empty()) {
                words.push_back(cur);
                cur.clear();
            }
            words.emplace_back(1, static_cast<char>(std::tolower(c)));
        } else {
            cur.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

// Greedy longest-match subword split with "##" continuation. Returns false
// when the word has no decomposition.
inline bool wordpiece_split(const std::string& word, const Vocab& vocab,
                            std::vector<std::string>& out) {
    std::size_t start = 0;
    std::vector<std::string> pieces;
    while (start < word.size()) {
        std::size_t end = word.size();
        std::string found;
        while (start < end) {
            std::string piece = word.substr(start, end - start);
            if (start > 0) piece = "##" + piece;
            if (vocab.contains(piece)) {
                found = std::move(piece);
                break;
            }
            --end;
        }
        if (found.empty()) return false;
        pieces.push_back(std::move(found));
        start = end;
    }
    out.insert(out.end(), pieces.begin(), pieces.end());
    return true;
}

}  // namespace detail

// Lowercase, split off punctuation, then decompose each word by greedy
// longest-match against the vocabulary. Words longer than kMaxWordChars or
// with no decomposition map to [UNK].
inline std::vector<std::string> tokenize(const std::string& text, const Vocab& vocab) {
    std::vector<std::string> out;
    for (const auto& word : detail::pre_tokenize(text)) {
        if (word.size() > kMaxWordChars || !detail::wordpiece_split(word, vocab, out)) {
            out.push_back(kUnkToken);
        }
    }
    return out;
}

// Builds a whole-word vocabulary from a text corpus: every pre-tokenized
// token with frequency >= min_freq, specials first, then descending
// frequency with lexicographic tie-break.
template <typename Iterable>
Vocab build_vocab(const Iterable& corpus, std::size_t min_freq) {
    if (min_freq == 0) throw UsageError("build_vocab: min_freq must be positive");
    std::unordered_map<std::string, std::size_t> freq;
    std::size_t total = 0;
    for (const auto& text : corpus) {
        for (const auto& w : detail::pre_tokenize(text)) {
            ++freq[w];
            ++total;
        }
    }
    if (total == 0) throw UsageError("build_vocab: empty corpus");
    std::vector<std::pair<std::string, std::size_t>> items(freq.begin(), freq.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    Vocab v;
    for (const auto& [token, count] : items) {
        if (count >= min_freq) v.add(token);
    }
    return v;
}

// [CLS] tokens [SEP], truncated to max_len with [SEP] always retained,
// right-padded; segment ids all 0.
inline EncodedInput encode_single(const std::vector<std::string>& tokens, const Vocab& vocab,
                                  std::size_t max_len) {
    if (max_len < 3) throw UsageError("encode_single: max_len must be >= 3");
    const std::size_t keep = std::min(tokens.size(), max_len - 2);
    EncodedInput enc;
    enc.ids.reserve(max_len);
    enc.ids.push_back(kClsId);
    for (std::size_t i = 0; i < keep; ++i) enc.ids.push_back(vocab.id(tokens[i]));
    enc.ids.push_back(kSepId);
    const std::size_t used = enc.ids.size();
    enc.ids.resize(max_len, kPadId);
    enc.attention_mask.assign(max_len, false);
    for (std::size_t i = 0; i < used; ++i) enc.attention_mask[i] = true;
    enc.segment_ids.assign(max_len, 0);
    return enc;
}

// [CLS] A [SEP] B [SEP] packed pair. Over length, the longer side loses one
// token at a time (ties truncate B). Segment ids are 0 through the first
// [SEP] inclusive and 1 on B and its trailing [SEP]; padding is segment 0.
inline EncodedInput encode_pair(const std::vector<std::string>& tokens_a,
                                const std::vector<std::string>& tokens_b, const Vocab& vocab,
                                std::size_t max_len) {
    if (max_len < 5) throw UsageError("encode_pair: max_len must be >= 5");
    std::size_t len_a = tokens_a.size();
    std::size_t len_b = tokens_b.size();
    while (len_a + len_b + 3 > max_len) {
        if (len_a > len_b) {
            --len_a;
        } else {
            --len_b;
        }
    }
    EncodedInput enc;
    enc.ids.reserve(max_len);
    enc.segment_ids.reserve(max_len);
    enc.ids.push_back(kClsId);
    enc.segment_ids.push_back(0);
    for (std::size_t i = 0; i < len_a; ++i) {
        enc.ids.push_back(vocab.id(tokens_a[i]));
        enc.segment_ids.push_back(0);
    }
    enc.ids.push_back(kSepId);
    enc.segment_ids.push_back(0);
    for (std::size_t i = 0; i < len_b; ++i) {
        enc.ids.push_back(vocab.id(tokens_b[i]));
        enc.segment_ids.push_back(1);
    }
    enc.ids.push_back(kSepId);
    enc.segment_ids.push_back(1);
    const std::size_t used = enc.ids.size();
    enc.ids.resize(max_len, kPadId);
    enc.segment_ids.resize(max_len, 0);
    enc.attention_mask.assign(max_len, false);
    for (std::size_t i = 0; i < used; ++i) enc.attention_mask[i] = true;
    return enc;
}

}  // namespace qpi
