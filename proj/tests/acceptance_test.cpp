// Acceptance suite: one test per criterion, each printing a single
// [ACCEPTANCE] line. Run via ctest or directly:
//   ./acceptance_test --gtest_color=no
//
// Criterion 10 is informational and never fails; it reports the two setups'
// test accuracies side by side on a synthetic desk-scale task.

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "qpi/qpi.hpp"

using qpi::Dataset;
using qpi::HeadKind;
using qpi::Model;
using qpi::QuestionPair;
using qpi::SetupKind;
using qpi::Tensor;
using qpi::Vocab;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void announce(int criterion, const std::string& name, bool pass, const std::string& detail) {
    std::printf("[ACCEPTANCE] C%-2d %-34s %s%s%s\n", criterion, name.c_str(),
                pass ? "PASS" : "FAIL", detail.empty() ? "" : " — ", detail.c_str());
    std::fflush(stdout);
}

Vocab words_vocab(const std::vector<std::string>& words) {
    Vocab v;
    for (const auto& w : words) v.add(w);
    return v;
}

// Separable toy task shared by criteria 4: duplicates share the marker word.
Dataset separable_dataset(std::size_t n_pairs, qpi::Rng& rng) {
    const std::vector<std::string> fillers = {"what", "how", "why", "when", "which"};
    Dataset ds;
    for (std::size_t i = 0; i < n_pairs; ++i) {
        QuestionPair pair;
        const bool dup = i % 2 == 0;
        pair.question_a = fillers[rng.uniform_index(fillers.size())] + " twin question here";
        pair.question_b = fillers[rng.uniform_index(fillers.size())] +
                          (dup ? " twin question here" : " solo question here");
        pair.label = dup ? 1 : 0;
        ++ds.class_counts[*pair.label];
        ds.pairs.push_back(pair);
    }
    return ds;
}

Vocab separable_vocab() {
    std::vector<std::string> corpus = {"what how why when which twin solo question here"};
    return qpi::build_vocab(corpus, 1);
}

// ---------------------------------------------------------------------------
// 1. parameter-count goldens
// ---------------------------------------------------------------------------

TEST(Acceptance, C1_ParameterCountGoldens) {
    const auto t0 = std::chrono::steady_clock::now();
    struct Golden {
        HeadKind head;
        std::size_t k;
        double target;
    };
    const std::vector<Golden> goldens = {
        {HeadKind::cnn, 2, 16e6},       {HeadKind::cnn, 4, 30e6},
        {HeadKind::cnn, 12, 110e6},     {HeadKind::mean_pool, 4, 29e6},
        {HeadKind::mean_pool, 12, 109e6},
    };
    bool all = true;
    std::string detail;
    for (const auto& g : goldens) {
        const qpi::ModelConfig cfg = qpi::base_config(SetupKind::matched_aggregation, g.head);
        const std::size_t count = qpi::count_trainable_params(cfg, g.k);
        const double rel = std::abs(static_cast<double>(count) - g.target) / g.target;
        const bool ok = rel <= 0.03;
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s k=%zu: %zu vs %.0fM (%.2f%%) %s; ",
                      qpi::head_kind_name(g.head), g.k, count, g.target / 1e6, rel * 100.0,
                      ok ? "ok" : "OUT OF TOLERANCE");
        detail += buf;
        EXPECT_TRUE(ok) << buf;
        all = all && ok;
    }
    const double elapsed = seconds_since(t0);
    const bool fast = elapsed < 1.0;
    EXPECT_TRUE(fast) << elapsed;
    announce(1, "parameter-count goldens", all && fast, detail);
}

// ---------------------------------------------------------------------------
// 2. gradient integrity, both pipelines
// ---------------------------------------------------------------------------

TEST(Acceptance, C2_GradientIntegrityBothPipelines) {
    const auto t0 = std::chrono::steady_clock::now();
    Vocab vocab = words_vocab({"how", "do", "i", "learn", "to", "play", "chess", "fast",
                               "what", "is", "the", "best", "way", "of", "learning", "?"});
    const std::vector<QuestionPair> pairs = {
        {"how do i learn to play chess fast?", "what is the best way of learning chess?", 1},
        {"what is the best way to play?", "how do i learn the way of the chess?", 0},
    };
    bool all = true;
    std::string detail;
    for (const SetupKind setup : {SetupKind::siamese, SetupKind::matched_aggregation}) {
        qpi::ModelConfig cfg = qpi::tiny_config(setup, HeadKind::cnn);
        cfg.encoder.vocab_size = vocab.size();
        cfg.encoder.dropout_rate = 0.0;
        auto model = Model<double>::initialized(cfg, 3);
        model.set_train_mode(false);
        auto loss_fn = [&]() {
            std::vector<Tensor<double>> probs;
            std::vector<int> labels;
            for (const auto& pair : pairs) {
                probs.push_back(qpi::pipeline_forward(pair, model, vocab));
                labels.push_back(*pair.label);
            }
            return qpi::batch_cross_entropy(probs, labels);
        };
        const auto report = qpi::finite_diff_check<double>(loss_fn, model.params(), 1e-5, 1e-4);
        EXPECT_TRUE(report.pass) << qpi::setup_kind_name(setup) << " worst "
                                 << report.worst().name << " " << report.worst().max_rel_error;
        char buf[120];
        std::snprintf(buf, sizeof(buf), "%s: %zu params, worst %.2e; ",
                      qpi::setup_kind_name(setup), report.rows.size(),
                      report.worst().max_rel_error);
        detail += buf;
        all = all && report.pass;
    }
    const double elapsed = seconds_since(t0);
    const bool fast = elapsed < 120.0;
    EXPECT_TRUE(fast) << elapsed;
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.0fs", elapsed);
    announce(2, "gradient integrity (f64, 1e-4)", all && fast, detail + buf);
}

// ---------------------------------------------------------------------------
// 3. attention / masking suite
// ---------------------------------------------------------------------------

TEST(Acceptance, C3_AttentionMaskingAndPaddingInvariance) {
    qpi::Rng rng(31);
    bool softmax_ok = true, mass_ok = true, pad_ok = true;
    double worst_pad = 0.0, worst_mass = 0.0;

    Vocab vocab = separable_vocab();
    qpi::ModelConfig cfg = qpi::tiny_config(SetupKind::matched_aggregation, HeadKind::cnn);
    cfg.encoder.vocab_size = vocab.size();
    auto model = Model<double>::initialized(cfg, 17);
    model.set_train_mode(false);

    for (int rep = 0; rep < 100; ++rep) {
        // softmax row sums on random inputs in [-50, 50]
        Tensor<double> x({4, 6});
        for (auto& v : x.values()) v = (rng.uniform() * 2.0 - 1.0) * 50.0;
        Tensor<double> sm = qpi::softmax_rows(x);
        for (std::size_t i = 0; i < 4; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < 6; ++j) {
                sum += sm.at(i, j);
                softmax_ok = softmax_ok && sm.at(i, j) >= 0.0;
            }
            softmax_ok = softmax_ok && std::abs(sum - 1.0) <= 1e-6;
        }

        // masked-position attention mass via one-hot value probes
        const std::size_t n = 5;
        Tensor<double> q({n, 3}), k({n, 3});
        for (auto& v : q.values()) v = rng.normal() * 2.0;
        for (auto& v : k.values()) v = rng.normal() * 2.0;
        std::vector<bool> mask(n, true);
        mask[rng.uniform_index(n - 1) + 1] = false;
        for (std::size_t probe = 0; probe < n; ++probe) {
            if (mask[probe]) continue;
            Tensor<double> v({n, 1});
            v.at(probe, 0) = 1.0;
            Tensor<double> out = qpi::scaled_dot_product_attention(q, k, v, mask);
            for (std::size_t i = 0; i < n; ++i) {
                worst_mass = std::max(worst_mass, std::abs(out.at(i, 0)));
                mass_ok = mass_ok && std::abs(out.at(i, 0)) <= 1e-9;
            }
        }

        // padding invariance of encoder hidden states and both heads
        const std::size_t real = 4 + rng.uniform_index(5);
        std::vector<int> ids(real);
        for (auto& id : ids) id = 4 + static_cast<int>(rng.uniform_index(vocab.size() - 4));
        qpi::EncodedInput short_in, long_in;
        short_in.ids = ids;
        short_in.attention_mask.assign(real, true);
        short_in.segment_ids.assign(real, 0);
        long_in = short_in;
        long_in.ids.resize(real + 6, qpi::kPadId);
        long_in.attention_mask.resize(real + 6, false);
        long_in.segment_ids.resize(real + 6, 0);

        Tensor<double> h_short = model.encode(short_in);
        Tensor<double> h_long = model.encode(long_in);
        for (std::size_t i = 0; i < real; ++i) {
            for (std::size_t j = 0; j < cfg.encoder.embed_dim; ++j) {
                const double drift = std::abs(h_short.at(i, j) - h_long.at(i, j));
                worst_pad = std::max(worst_pad, drift);
                pad_ok = pad_ok && drift <= 1e-5;
            }
        }
        auto cnn_short = model.condense(h_short, short_in.attention_mask);
        auto cnn_long = model.condense(h_long, long_in.attention_mask);
        for (std::size_t i = 0; i < cnn_short.values.numel(); ++i) {
            const double drift = std::abs(cnn_short.values.at(i) - cnn_long.values.at(i));
            worst_pad = std::max(worst_pad, drift);
            pad_ok = pad_ok && drift <= 1e-5;
        }
        auto mp_short = qpi::mean_pool(h_short, short_in.attention_mask);
        auto mp_long = qpi::mean_pool(h_long, long_in.attention_mask);
        for (std::size_t i = 0; i < mp_short.values.numel(); ++i) {
            const double drift = std::abs(mp_short.values.at(i) - mp_long.values.at(i));
            worst_pad = std::max(worst_pad, drift);
            pad_ok = pad_ok && drift <= 1e-5;
        }
    }
    EXPECT_TRUE(softmax_ok);
    EXPECT_TRUE(mass_ok) << worst_mass;
    EXPECT_TRUE(pad_ok) << worst_pad;
    char buf[120];
    std::snprintf(buf, sizeof(buf), "100 cases; masked mass <= %.1e, padding drift <= %.1e",
                  worst_mass, worst_pad);
    announce(3, "attention/masking suite", softmax_ok && mass_ok && pad_ok, buf);
}

// ---------------------------------------------------------------------------
// 4. overfit sanity
// ---------------------------------------------------------------------------

TEST(Acceptance, C4_OverfitThirtyTwoPairs) {
    Vocab vocab = separable_vocab();
    bool all = true;
    std::string detail;
    for (const SetupKind setup : {SetupKind::siamese, SetupKind::matched_aggregation}) {
        const auto t0 = std::chrono::steady_clock::now();
        qpi::ModelConfig cfg = qpi::tiny_config(setup, HeadKind::cnn);
        cfg.encoder.vocab_size = vocab.size();
        auto model = Model<double>::initialized(cfg, 23);
        qpi::Rng rng(29);
        Dataset ds = separable_dataset(32, rng);
        qpi::TrainOptions opts;
        opts.epochs = 200;
        opts.batch_size = 8;
        opts.adam.lr = 5e-3;
        opts.seed = 37;
        const auto history = qpi::train(model, vocab, ds, ds, opts);
        std::size_t reached = 0;
        for (const auto& rec : history.epochs) {
            if (rec.val_accuracy == 1.0) {
                reached = rec.epoch;
                break;
            }
        }
        const double elapsed = seconds_since(t0);
        const bool ok = reached > 0 && reached <= 200 && elapsed < 60.0;
        EXPECT_TRUE(ok) << qpi::setup_kind_name(setup) << " reached=" << reached
                        << " elapsed=" << elapsed;
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%s: 100%% at epoch %zu in %.0fs; ",
                      qpi::setup_kind_name(setup), reached, elapsed);
        detail += buf;
        all = all && ok;
    }
    announce(4, "overfit sanity (32 pairs)", all, detail);
}

// ---------------------------------------------------------------------------
// 5. siamese weight sharing
// ---------------------------------------------------------------------------

TEST(Acceptance, C5_SiameseWeightSharingBitwise) {
    const std::vector<std::string> words = {"how",  "what", "why",   "learn", "play",
                                            "best", "way",  "chess", "piano", "code",
                                            "fast", "slow", "good",  "great", "?"};
    Vocab vocab = words_vocab(words);
    qpi::ModelConfig cfg = qpi::tiny_config(SetupKind::siamese, HeadKind::cnn);
    cfg.encoder.vocab_size = vocab.size();
    auto model = Model<double>::initialized(cfg, 41);
    model.set_train_mode(false);
    qpi::Rng rng(43);
    bool all = true;
    for (int rep = 0; rep < 50; ++rep) {
        auto random_question = [&]() {
            std::string q;
            const std::size_t len = 3 + rng.uniform_index(6);
            for (std::size_t i = 0; i < len; ++i) {
                if (i) q += " ";
                q += words[rng.uniform_index(words.size())];
            }
            return q;
        };
        const std::string q = random_question();
        const std::string other = random_question();
        auto in_slot_a = qpi::siamese_parts(QuestionPair{q, other, 0}, model, vocab);
        auto in_slot_b = qpi::siamese_parts(QuestionPair{other, q, 0}, model, vocab);
        all = all && in_slot_a.h_a.values() == in_slot_b.h_b.values();
    }
    EXPECT_TRUE(all);
    announce(5, "siamese weight sharing (bitwise)", all, "50 random questions");
}

// ---------------------------------------------------------------------------
// 6. sampler balance
// ---------------------------------------------------------------------------

TEST(Acceptance, C6_WeightedSamplerBalance) {
    std::vector<int> labels;
    for (int i = 0; i < 63000; ++i) labels.push_back(0);
    for (int i = 0; i < 37000; ++i) labels.push_back(1);
    const auto idx = qpi::weighted_sample_indices(labels, 100000, 4242u);
    double pos = 0.0;
    for (auto i : idx) pos += labels[i];
    const double frac = pos / 100000.0;
    const bool ok = std::abs(frac - 0.5) <= 0.02;
    EXPECT_TRUE(ok) << frac;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "63/37 labels -> %.4f positive", frac);
    announce(6, "weighted sampler balance", ok, buf);
}

// ---------------------------------------------------------------------------
// 7. checkpoint round-trip
// ---------------------------------------------------------------------------

TEST(Acceptance, C7_CheckpointRoundTrip) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "qpi_acceptance_ckpt";
    fs::create_directories(dir);
    qpi::Rng rng(47);
    bool all = true;
    std::string detail;

    auto roundtrip = [&](const qpi::ModelConfig& cfg, std::uint64_t seed,
                         const std::string& tag) {
        const std::string path = (dir / (tag + ".qpt")).string();
        bool identical = true;
        {
            auto model = Model<float>::initialized(cfg, seed);
            qpi::save_checkpoint(model, {{"seed", std::to_string(seed)}}, path);
            auto loaded = qpi::load_checkpoint<float>(path);
            for (std::size_t i = 0; i < model.params().size(); ++i) {
                identical = identical && model.params().entries()[i].tensor.values() ==
                                             loaded.model.params().entries()[i].tensor.values();
            }
        }
        fs::remove(path);
        return identical;
    };

    // nine random small configs
    for (int rep = 0; rep < 9; ++rep) {
        qpi::ModelConfig cfg;
        cfg.encoder.num_layers = rng.uniform_index(3);
        cfg.encoder.num_heads = 1 + rng.uniform_index(3);
        cfg.encoder.embed_dim = cfg.encoder.num_heads * (2 + rng.uniform_index(5));
        cfg.encoder.ffn_dim = 4 + rng.uniform_index(28);
        cfg.encoder.max_position = 48;
        cfg.encoder.vocab_size = 8 + rng.uniform_index(64);
        cfg.setup = rep % 2 ? SetupKind::siamese : SetupKind::matched_aggregation;
        cfg.head = rep % 3 ? HeadKind::cnn : HeadKind::mean_pool;
        cfg.conv_widths = rep % 2 ? std::vector<std::size_t>{2, 3}
                                  : std::vector<std::size_t>{2, 4, 5};
        cfg.filters_per_width = 1 + rng.uniform_index(4);
        cfg.max_len = 16;
        const bool ok = roundtrip(cfg, 1000 + rep, "rand" + std::to_string(rep));
        all = all && ok;
    }
    detail += "9 random configs";

    // full-scale shapes (110M parameters)
    {
        const qpi::ModelConfig cfg =
            qpi::base_config(SetupKind::matched_aggregation, HeadKind::cnn);
        const auto t0 = std::chrono::steady_clock::now();
        const bool ok = roundtrip(cfg, 4711, "base");
        char buf[64];
        std::snprintf(buf, sizeof(buf), " + base-scale shapes (%.0fs)", seconds_since(t0));
        detail += buf;
        all = all && ok;
    }

    // error cases: truncation and config/tensor shape mismatch
    {
        const qpi::ModelConfig cfg = qpi::tiny_config(SetupKind::siamese, HeadKind::cnn);
        auto model = Model<float>::initialized(cfg, 7);
        const std::string full = (dir / "full.qpt").string();
        qpi::save_checkpoint(model, {}, full);
        std::ifstream in(full, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
        in.close();
        const std::string cut = (dir / "cut.qpt").string();
        std::ofstream(cut, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
        bool truncated_detected = false;
        try {
            qpi::load_checkpoint<float>(cut);
        } catch (const qpi::DataError& e) {
            truncated_detected = std::string(e.what()).find("truncated") != std::string::npos;
        }

        std::vector<qpi::detail::RawTensor> tensors;
        for (const auto& e : model.params().entries()) {
            qpi::detail::RawTensor raw;
            raw.name = e.name;
            raw.shape = e.tensor.shape();
            raw.data.assign(e.tensor.values().begin(), e.tensor.values().end());
            tensors.push_back(std::move(raw));
        }
        qpi::ModelConfig lying = cfg;
        lying.encoder.embed_dim = 8;
        lying.encoder.ffn_dim = 32;
        const std::string bad = (dir / "bad.qpt").string();
        qpi::detail::write_checkpoint_raw(bad, tensors, qpi::format_config_blob(lying, {}));
        bool mismatch_detected = false;
        try {
            qpi::load_checkpoint<float>(bad);
        } catch (const qpi::DataError& e) {
            mismatch_detected =
                std::string(e.what()).find("shape mismatch") != std::string::npos;
        }
        EXPECT_TRUE(truncated_detected);
        EXPECT_TRUE(mismatch_detected);
        all = all && truncated_detected && mismatch_detected;
        detail += ", truncation + shape errors detected";
    }
    fs::remove_all(dir);
    EXPECT_TRUE(all);
    announce(7, "checkpoint round-trip", all, detail);
}

// ---------------------------------------------------------------------------
// 8. oracle equivalences
// ---------------------------------------------------------------------------

TEST(Acceptance, C8_OracleEquivalences) {
    qpi::Rng rng(53);
    bool conv_ok = true, max_ok = true, tok_ok = true, mm_ok = true;

    for (int rep = 0; rep < 40; ++rep) {
        // conv vs windowed hand-sum
        const std::size_t n = 5 + rng.uniform_index(8);
        const std::size_t g = 2 + rng.uniform_index(3);
        const std::size_t d = 1 + rng.uniform_index(6);
        Tensor<double> x({n, d}), w({g, d}), b({1});
        for (auto& v : x.values()) v = rng.normal();
        for (auto& v : w.values()) v = rng.normal();
        b.at(0) = rng.normal();
        oracle::Mat ox(n, std::vector<double>(d)), ow(g, std::vector<double>(d));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) ox[i][j] = x.at(i, j);
        for (std::size_t i = 0; i < g; ++i)
            for (std::size_t j = 0; j < d; ++j) ow[i][j] = w.at(i, j);
        Tensor<double> e = qpi::conv_feature_map(x, w, b);
        const auto oe = oracle::conv_relu_naive(ox, ow, b.at(0));
        for (std::size_t i = 0; i < oe.size(); ++i)
            conv_ok = conv_ok && std::abs(e.at(i) - oe[i]) <= 1e-10;

        // max-over-time vs sorting
        max_ok = max_ok && qpi::max_over_time(e).item() == oracle::max_by_sorting(e.values());

        // matmul vs triple loop on 8x8
        Tensor<double> a8({8, 8}), b8({8, 8});
        for (auto& v : a8.values()) v = rng.normal();
        for (auto& v : b8.values()) v = rng.normal();
        oracle::Mat oa(8, std::vector<double>(8)), ob(8, std::vector<double>(8));
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j) {
                oa[i][j] = a8.at(i, j);
                ob[i][j] = b8.at(i, j);
            }
        Tensor<double> z = qpi::matmul(a8, b8);
        const auto oz = oracle::matmul_naive(oa, ob);
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j) mm_ok = mm_ok && std::abs(z.at(i, j) - oz[i][j]) <= 1e-10;
    }

    // tokenizer greedy vs DP on random vocabularies of <= 100 entries
    const std::string alphabet = "abcd";
    for (int rep = 0; rep < 150; ++rep) {
        Vocab v;
        const int entries = 3 + static_cast<int>(rng.uniform_index(95));
        for (int i = 0; i < entries; ++i) {
            std::string piece;
            const std::size_t len = 1 + rng.uniform_index(4);
            for (std::size_t c = 0; c < len; ++c)
                piece.push_back(alphabet[rng.uniform_index(alphabet.size())]);
            if (rng.uniform() < 0.5) piece = "##" + piece;
            v.add(piece);
        }
        std::string word;
        const std::size_t word_len = 1 + rng.uniform_index(10);
        for (std::size_t c = 0; c < word_len; ++c)
            word.push_back(alphabet[rng.uniform_index(alphabet.size())]);
        const auto greedy = qpi::tokenize(word, v);
        const auto dp =
            oracle::wordpiece_dp(word, [&](const std::string& p) { return v.contains(p); });
        if (dp.empty()) {
            tok_ok = tok_ok && greedy == std::vector<std::string>{qpi::kUnkToken};
        } else {
            tok_ok = tok_ok && greedy == dp;
        }
    }

    const bool all = conv_ok && max_ok && tok_ok && mm_ok;
    EXPECT_TRUE(conv_ok);
    EXPECT_TRUE(max_ok);
    EXPECT_TRUE(tok_ok);
    EXPECT_TRUE(mm_ok);
    announce(8, "oracle equivalences", all,
             "conv/hand-sum, max/sort, greedy/DP, matmul/triple-loop");
}

// ---------------------------------------------------------------------------
// 9. metrics arithmetic
// ---------------------------------------------------------------------------

TEST(Acceptance, C9_MetricsArithmetic) {
    std::vector<int> labels, preds;
    for (int i = 0; i < 3; ++i) { labels.push_back(1); preds.push_back(1); }
    for (int i = 0; i < 1; ++i) { labels.push_back(0); preds.push_back(1); }
    for (int i = 0; i < 2; ++i) { labels.push_back(1); preds.push_back(0); }
    for (int i = 0; i < 4; ++i) { labels.push_back(0); preds.push_back(0); }
    const auto res = qpi::metrics_from_predictions(preds, labels);
    const bool metrics_ok =
        std::abs(res.accuracy - 0.7) < 1e-12 && std::abs(res.f1 - 0.6667) <= 1e-4;

    const auto overlap = qpi::error_overlap({0, 0, 0, 0}, {1, 1, 0, 0}, {1, 1, 1, 0});
    const bool overlap_ok = overlap.applicable && overlap.errors_a == 3 &&
                            overlap.fixed_by_b == 2 &&
                            overlap.fraction == 2.0 / 3.0;
    EXPECT_TRUE(metrics_ok) << res.accuracy << " " << res.f1;
    EXPECT_TRUE(overlap_ok);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "acc %.4f, F1 %.4f, overlap %.4f", res.accuracy, res.f1,
                  overlap.fraction);
    announce(9, "metrics arithmetic", metrics_ok && overlap_ok, buf);
}

// ---------------------------------------------------------------------------
// 10. desk-scale directional experiment (informational)
// ---------------------------------------------------------------------------

// Paraphrase-style synthetic task: a pair is a duplicate when both questions
// ask the same intent about the same subject through different phrasings.
Dataset directional_dataset(std::size_t n_pairs, qpi::Rng& rng) {
    static const std::vector<std::string> subjects = {
        "chess",  "piano",  "python", "guitar",  "cooking", "drawing", "running",
        "french", "german", "poker",  "sailing", "skiing",  "algebra", "juggling"};
    static const std::vector<std::vector<std::string>> intents = {
        {"how do i learn SUBJ quickly", "what is the fastest way to learn SUBJ",
         "how can i pick up SUBJ fast"},
        {"why is SUBJ so hard", "what makes SUBJ difficult", "why do people find SUBJ hard"},
        {"is SUBJ worth learning", "should i spend time on SUBJ",
         "does learning SUBJ pay off"},
        {"who is the best at SUBJ", "which person is greatest at SUBJ",
         "who has mastered SUBJ"},
    };
    auto make = [&](const std::string& subject, std::size_t intent, std::size_t phrasing) {
        std::string q = intents[intent][phrasing % intents[intent].size()];
        const std::string key = "SUBJ";
        q.replace(q.find(key), key.size(), subject);
        return q + "?";
    };
    Dataset ds;
    for (std::size_t i = 0; i < n_pairs; ++i) {
        const std::string subject = subjects[rng.uniform_index(subjects.size())];
        const std::size_t intent = rng.uniform_index(intents.size());
        QuestionPair pair;
        const double coin = rng.uniform();
        if (coin < 0.5) {
            // duplicate: same subject and intent, different phrasing
            const std::size_t p = rng.uniform_index(3);
            pair.question_a = make(subject, intent, p);
            pair.question_b = make(subject, intent, p + 1 + rng.uniform_index(2));
            pair.label = 1;
        } else if (coin < 0.75) {
            // same intent, different subject
            std::string other = subjects[rng.uniform_index(subjects.size())];
            while (other == subject) other = subjects[rng.uniform_index(subjects.size())];
            pair.question_a = make(subject, intent, rng.uniform_index(3));
            pair.question_b = make(other, intent, rng.uniform_index(3));
            pair.label = 0;
        } else {
            // same subject, different intent
            std::size_t other = rng.uniform_index(intents.size());
            while (other == intent) other = rng.uniform_index(intents.size());
            pair.question_a = make(subject, intent, rng.uniform_index(3));
            pair.question_b = make(subject, other, rng.uniform_index(3));
            pair.label = 0;
        }
        ++ds.class_counts[*pair.label];
        ds.pairs.push_back(pair);
    }
    return ds;
}

TEST(Acceptance, C10_DeskScaleDirectionalExperiment) {
    qpi::Rng rng(59);
    Dataset train_set = directional_dataset(10000, rng);
    Dataset val_set = directional_dataset(500, rng);
    Dataset test_set = directional_dataset(1000, rng);

    std::vector<std::string> corpus;
    for (const auto& p : train_set.pairs) {
        corpus.push_back(p.question_a);
        corpus.push_back(p.question_b);
    }
    Vocab vocab = qpi::build_vocab(corpus, 1);

    std::string detail;
    double acc[2] = {0.0, 0.0};
    int slot = 0;
    for (const SetupKind setup : {SetupKind::siamese, SetupKind::matched_aggregation}) {
        const auto t0 = std::chrono::steady_clock::now();
        qpi::ModelConfig cfg = qpi::tiny_config(setup, HeadKind::cnn);
        cfg.encoder.vocab_size = vocab.size();
        auto model = Model<float>::initialized(cfg, 61);
        qpi::TrainOptions opts;
        opts.epochs = 2;
        opts.batch_size = 8;
        opts.adam.lr = 1e-3;
        opts.seed = 67;
        (void)qpi::train(model, vocab, train_set, val_set, opts);
        const auto res = qpi::evaluate(model, vocab, test_set);
        acc[slot++] = res.accuracy;
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%s: test acc %.4f (%.0fs); ",
                      qpi::setup_kind_name(setup), res.accuracy, seconds_since(t0));
        detail += buf;
    }
    detail += acc[1] > acc[0] ? "matched aggregation ahead, as word-level cross-attention predicts"
                              : "siamese ahead on this synthetic task (informational only)";
    // informational: reported, never failing
    announce(10, "desk-scale directional experiment", true, detail);
    SUCCEED();
}

}  // namespace
