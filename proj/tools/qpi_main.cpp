// Command-line front end: train, evaluate, predict, parameter counting,
// gradient checking and error-overlap analysis for the question-paraphrase
// models.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "qpi/qpi.hpp"

using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct Overrides {
    std::optional<std::string> config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> setup;
    std::optional<std::string> head;
    std::optional<std::size_t> trainable_encoders;
    bool strict_split = false;
    std::optional<std::string> precision;
    std::optional<std::string> preset;
};

qpi::RunConfig resolve_config(const Overrides& ov) {
    qpi::RunConfig rc;
    if (ov.config_path) rc = qpi::load_run_config(*ov.config_path);
    if (ov.preset) qpi::apply_config_entry(rc, "", "preset", *ov.preset);
    if (ov.seed) rc.seed = *ov.seed;
    if (ov.setup) rc.setup = qpi::parse_setup(*ov.setup);
    if (ov.head) rc.head = qpi::parse_head(*ov.head);
    if (ov.trainable_encoders) rc.trainable_encoders = *ov.trainable_encoders;
    if (ov.strict_split) rc.strict_split = true;
    if (ov.precision) rc.precision = qpi::parse_precision(*ov.precision);
    rc.validate();
    return rc;
}

void add_override_flags(CLI::App* cmd, Overrides& ov) {
    cmd->add_option("--config", ov.config_path, "key=value config file");
    cmd->add_option("--seed", ov.seed, "master seed for init, sampling and dropout");
    cmd->add_option("--setup", ov.setup, "inference setup: siamese | ma");
    cmd->add_option("--head", ov.head, "condenser head: cnn | mean");
    cmd->add_option("--trainable-encoders", ov.trainable_encoders,
                    "number of top encoder layers to fine-tune");
    cmd->add_flag("--strict-split", ov.strict_split,
                  "require 10000-pair validation and test splits");
    cmd->add_option("--precision", ov.precision, "compute precision: f32 | f64");
    cmd->add_option("--preset", ov.preset, "config preset: base | tiny");
}

std::vector<std::string> question_corpus(const qpi::Dataset& ds) {
    std::vector<std::string> corpus;
    corpus.reserve(ds.pairs.size() * 2);
    for (const auto& p : ds.pairs) {
        corpus.push_back(p.question_a);
        corpus.push_back(p.question_b);
    }
    return corpus;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

template <typename T>
int run_train(const qpi::RunConfig& rc, const std::string& data_dir, const std::string& out_dir) {
    const auto splits = qpi::load_standard_splits(data_dir, rc.strict_split);
    const qpi::Vocab vocab = qpi::build_vocab(question_corpus(splits.train), rc.min_freq);
    std::printf("vocab: %zu tokens (min_freq=%zu)\n", vocab.size(), rc.min_freq);

    qpi::ModelConfig mc = rc.to_model_config();
    mc.encoder.vocab_size = vocab.size();
    mc.validate();

    std::filesystem::create_directories(out_dir);
    vocab.save(out_dir + "/vocab.txt");

    auto model = qpi::Model<T>::initialized(mc, rc.seed);
    model.set_trainable_encoders(rc.resolved_trainable_encoders());
    std::printf("model: %s setup, %s head, %zu/%zu trainable encoders, %zu trainable params\n",
                qpi::setup_kind_name(mc.setup), qpi::head_kind_name(mc.head),
                model.trainable_encoders(), mc.encoder.num_layers, model.count_trainable());

    const qpi::TrainHistory history =
        qpi::train(model, vocab, splits.train, splits.validation, rc.to_train_options());

    std::ofstream hist(out_dir + "/history.jsonl");
    for (const auto& rec : history.epochs) {
        // wall time stays off the record so reruns with one seed are bitwise equal
        json j = {{"epoch", rec.epoch},
                  {"train_loss", rec.train_loss},
                  {"val_accuracy", rec.val_accuracy},
                  {"val_f1", rec.val_f1}};
        hist << j.dump() << "\n";
        std::printf("epoch %zu: loss %.6f, val acc %.4f, val F1 %.4f (%.1fs)\n", rec.epoch,
                    rec.train_loss, rec.val_accuracy, rec.val_f1, rec.wall_time_s);
    }
    hist.close();

    const qpi::EvalResult test = qpi::evaluate(model, vocab, splits.test);
    std::printf("best epoch %zu (val acc %.4f); test acc %.4f, test F1 %.4f\n",
                history.best_epoch, history.best_val_accuracy, test.accuracy, test.f1);

    double best_val_f1 = 0.0;
    for (const auto& rec : history.epochs) {
        if (rec.epoch == history.best_epoch) best_val_f1 = rec.val_f1;
    }
    std::map<std::string, std::string> meta = {
        {"seed", std::to_string(history.seed)},
        {"epoch", std::to_string(history.best_epoch)},
        {"val_accuracy", std::to_string(history.best_val_accuracy)},
        {"val_f1", std::to_string(best_val_f1)},
    };
    qpi::save_checkpoint(model, meta, out_dir + "/checkpoint.qpt");

    json summary = {{"seed", history.seed},
                    {"epochs", history.epochs.size()},
                    {"best_epoch", history.best_epoch},
                    {"best_val_accuracy", history.best_val_accuracy},
                    {"best_val_f1", best_val_f1},
                    {"test_accuracy", test.accuracy},
                    {"test_f1", test.f1},
                    {"trainable_params", model.count_trainable()},
                    {"setup", qpi::setup_kind_name(mc.setup)},
                    {"head", qpi::head_kind_name(mc.head)},
                    {"trainable_encoders", model.trainable_encoders()}};
    std::ofstream(out_dir + "/summary.json") << summary.dump(2) << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

template <typename T>
int run_eval(const std::string& ckpt_path, const std::string& vocab_path,
             const std::string& data_path, const std::optional<std::string>& out_path) {
    auto loaded = qpi::load_checkpoint<T>(ckpt_path);
    for (const auto& w : loaded.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    const qpi::Vocab vocab = qpi::Vocab::load(vocab_path);
    if (vocab.size() != loaded.model.config.encoder.vocab_size) {
        throw qpi::DataError("eval: vocab has " + std::to_string(vocab.size()) +
                             " tokens but checkpoint expects " +
                             std::to_string(loaded.model.config.encoder.vocab_size));
    }
    const qpi::Dataset ds = qpi::load_pairs_tsv(data_path);
    const qpi::EvalResult res = qpi::evaluate(loaded.model, vocab, ds);
    std::printf("accuracy=%.4f f1=%.4f (tp=%zu fp=%zu fn=%zu tn=%zu)\n", res.accuracy, res.f1,
                res.tp, res.fp, res.fn, res.tn);
    if (out_path) {
        std::ofstream out(*out_path);
        for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
            json j = {{"index", i},
                      {"label", *ds.pairs[i].label},
                      {"prediction", res.predictions[i]},
                      {"prob_duplicate", res.prob_duplicate[i]}};
            out << j.dump() << "\n";
        }
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

template <typename T>
int run_predict(const std::string& ckpt_path, const std::string& vocab_path,
                const std::string& question_a, const std::string& question_b) {
    auto loaded = qpi::load_checkpoint<T>(ckpt_path);
    const qpi::Vocab vocab = qpi::Vocab::load(vocab_path);
    if (vocab.size() != loaded.model.config.encoder.vocab_size) {
        throw qpi::DataError("predict: vocab size does not match checkpoint");
    }
    const qpi::Prediction p =
        qpi::predict(qpi::QuestionPair{question_a, question_b, std::nullopt}, loaded.model,
                     vocab);
    std::printf("label=%d confidence=%.4f prob_duplicate=%.4f\n", p.label, p.confidence,
                p.prob_duplicate);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// params
// ---------------------------------------------------------------------------

int run_params(const qpi::RunConfig& rc) {
    const qpi::ModelConfig mc = rc.to_model_config();
    std::printf("%-4s %16s\n", "k", "trainable");
    for (std::size_t k = 0; k <= mc.encoder.num_layers; ++k) {
        std::printf("%-4zu %16zu\n", k, qpi::count_trainable_params(mc, k));
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

int run_gradcheck(const qpi::RunConfig& rc, double step, double tol, bool corrupt) {
    if (rc.embed_dim > 16) {
        throw qpi::UsageError("gradcheck: requires a tiny config (embed_dim <= 16), got " +
                              std::to_string(rc.embed_dim));
    }
    qpi::debug::corrupt_relu_backward = corrupt;
    // Gradient checking always runs in double precision; central differences
    // drown in rounding noise in float.
    qpi::Vocab vocab;
    for (const char* w : {"how", "do", "i", "learn", "to", "play", "chess", "fast", "what",
                          "is", "the", "best", "way", "of", "learning", "?"}) {
        vocab.add(w);
    }
    const std::vector<qpi::QuestionPair> pairs = {
        {"how do i learn to play chess fast?", "what is the best way of learning chess?", 1},
        {"what is the best way to play?", "how do i learn the way of the chess?", 0},
    };

    bool all_pass = true;
    for (const qpi::SetupKind setup :
         {qpi::SetupKind::siamese, qpi::SetupKind::matched_aggregation}) {
        qpi::RunConfig setup_rc = rc;
        setup_rc.setup = setup;
        qpi::ModelConfig mc = setup_rc.to_model_config();
        mc.encoder.vocab_size = vocab.size();
        mc.encoder.dropout_rate = 0.0;  // f must be deterministic
        auto model = qpi::Model<double>::initialized(mc, rc.seed);
        model.set_trainable_encoders(mc.encoder.num_layers);
        model.set_train_mode(false);

        auto loss_fn = [&]() {
            std::vector<qpi::Tensor<double>> probs;
            std::vector<int> labels;
            for (const auto& pair : pairs) {
                probs.push_back(qpi::pipeline_forward(pair, model, vocab));
                labels.push_back(*pair.label);
            }
            return qpi::batch_cross_entropy(probs, labels);
        };
        const qpi::GradCheckReport report =
            qpi::finite_diff_check<double>(loss_fn, model.params(), step, tol);
        std::printf("[%s] %zu parameters, tol %.1e\n", qpi::setup_kind_name(setup),
                    report.rows.size(), tol);
        for (const auto& row : report.rows) {
            std::printf("  %-48s %10.3e %s\n", row.name.c_str(), row.max_rel_error,
                        row.pass ? "ok" : "FAIL");
        }
        const auto& worst = report.worst();
        std::printf("[%s] worst: %s (%.3e) -> %s\n", qpi::setup_kind_name(setup),
                    worst.name.c_str(), worst.max_rel_error, report.pass ? "PASS" : "FAIL");
        all_pass = all_pass && report.pass;
    }
    qpi::debug::corrupt_relu_backward = false;
    if (!all_pass) {
        std::fprintf(stderr, "gradcheck: tolerance breach\n");
        return kExitNumeric;
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// overlap
// ---------------------------------------------------------------------------

struct PredFile {
    std::vector<int> labels;
    std::vector<int> predictions;
};

PredFile load_predictions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw qpi::DataError("overlap: cannot read '" + path + "'");
    PredFile pf;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            json j = json::parse(line);
            pf.labels.push_back(j.at("label").get<int>());
            pf.predictions.push_back(j.at("prediction").get<int>());
        } catch (const json::exception& e) {
            throw qpi::DataError("overlap: '" + path + "' line " + std::to_string(line_no) +
                                 ": " + e.what());
        }
    }
    return pf;
}

int run_overlap(const std::string& path_a, const std::string& path_b) {
    const PredFile a = load_predictions(path_a);
    const PredFile b = load_predictions(path_b);
    if (a.labels != b.labels) {
        throw qpi::DataError("overlap: prediction files disagree on labels or ordering");
    }
    const auto ab = qpi::error_overlap(a.predictions, b.predictions, a.labels);
    const auto ba = qpi::error_overlap(b.predictions, a.predictions, a.labels);
    auto print_one = [](const char* tag, const qpi::OverlapResult& r) {
        if (r.applicable) {
            std::printf("%s: %.4f (%zu of %zu errors fixed)\n", tag, r.fraction, r.fixed_by_b,
                        r.errors_a);
        } else {
            std::printf("%s: not applicable (no errors)\n", tag);
        }
    };
    print_one("errors of A fixed by B", ab);
    print_one("errors of B fixed by A", ba);
    return kExitOk;
}

template <typename Fn>
int guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const qpi::NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return kExitNumeric;
    } catch (const qpi::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const qpi::UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"question paraphrase identification: transformer encoder + CNN"};
    app.require_subcommand(1);

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model on standard splits");
    Overrides train_ov;
    std::string data_dir, out_dir;
    add_override_flags(train_cmd, train_ov);
    train_cmd->add_option("--data-dir", data_dir, "directory with train/dev/test.tsv")
        ->required();
    train_cmd->add_option("--out", out_dir, "output directory")->required();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    std::string eval_ckpt, eval_vocab, eval_data;
    std::optional<std::string> eval_out;
    std::string eval_precision = "f32";
    eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--vocab", eval_vocab, "vocabulary file")->required();
    eval_cmd->add_option("--data", eval_data, "tsv dataset file")->required();
    eval_cmd->add_option("--out", eval_out, "per-example predictions file (jsonl)");
    eval_cmd->add_option("--precision", eval_precision, "f32 | f64");

    // predict
    auto* pred_cmd = app.add_subcommand("predict", "classify one question pair");
    std::string pred_ckpt, pred_vocab, pred_a, pred_b;
    std::string pred_precision = "f32";
    pred_cmd->add_option("--checkpoint", pred_ckpt, "checkpoint file")->required();
    pred_cmd->add_option("--vocab", pred_vocab, "vocabulary file")->required();
    pred_cmd->add_option("question_a", pred_a, "first question")->required();
    pred_cmd->add_option("question_b", pred_b, "second question")->required();
    pred_cmd->add_option("--precision", pred_precision, "f32 | f64");

    // params
    auto* params_cmd = app.add_subcommand("params", "trainable-parameter counts per k");
    Overrides params_ov;
    add_override_flags(params_cmd, params_ov);

    // gradcheck
    auto* gc_cmd =
        app.add_subcommand("gradcheck", "verify analytic gradients against finite differences");
    Overrides gc_ov;
    double gc_tol = 1e-4, gc_step = 1e-5;
    bool gc_corrupt = false;
    add_override_flags(gc_cmd, gc_ov);
    gc_cmd->add_option("--tol", gc_tol, "relative-error tolerance");
    gc_cmd->add_option("--step", gc_step, "central-difference step h");
    gc_cmd->add_flag("--corrupt-backward", gc_corrupt,
                     "deliberately corrupt a backward rule (negative control)");

    // overlap
    auto* ov_cmd = app.add_subcommand("overlap", "error overlap between two prediction files");
    std::string ov_a, ov_b;
    ov_cmd->add_option("--preds-a", ov_a, "predictions jsonl of system A")->required();
    ov_cmd->add_option("--preds-b", ov_b, "predictions jsonl of system B")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    if (train_cmd->parsed()) {
        return guarded([&]() {
            const qpi::RunConfig rc = resolve_config(train_ov);
            return rc.precision == qpi::Precision::f64 ? run_train<double>(rc, data_dir, out_dir)
                                                       : run_train<float>(rc, data_dir, out_dir);
        });
    }
    if (eval_cmd->parsed()) {
        return guarded([&]() {
            return qpi::parse_precision(eval_precision) == qpi::Precision::f64
                       ? run_eval<double>(eval_ckpt, eval_vocab, eval_data, eval_out)
                       : run_eval<float>(eval_ckpt, eval_vocab, eval_data, eval_out);
        });
    }
    if (pred_cmd->parsed()) {
        return guarded([&]() {
            return qpi::parse_precision(pred_precision) == qpi::Precision::f64
                       ? run_predict<double>(pred_ckpt, pred_vocab, pred_a, pred_b)
                       : run_predict<float>(pred_ckpt, pred_vocab, pred_a, pred_b);
        });
    }
    if (params_cmd->parsed()) {
        return guarded([&]() { return run_params(resolve_config(params_ov)); });
    }
    if (gc_cmd->parsed()) {
        return guarded([&]() {
            if (!gc_ov.config_path && !gc_ov.preset) gc_ov.preset = "tiny";
            return run_gradcheck(resolve_config(gc_ov), gc_step, gc_tol, gc_corrupt);
        });
    }
    if (ov_cmd->parsed()) {
        return guarded([&]() { return run_overlap(ov_a, ov_b); });
    }
    return kExitUsage;
}
