#include <gtest/gtest.h>

#include <string>
#include <vector>

#include "qpi/grad_check.hpp"
#include "qpi/pipelines.hpp"
#include "qpi/training.hpp"

using qpi::HeadKind;
using qpi::Model;
using qpi::QuestionPair;
using qpi::SetupKind;
using qpi::Tensor;
using qpi::Vocab;

namespace {

Vocab test_vocab() {
    Vocab v;
    for (const char* w : {"how", "can", "i", "be", "a", "good", "geologist", "?", "what",
                          "should", "do", "to", "great", "are", "some", "rap", "songs",
                          "dance", "best", "of", "the", "improve", "my", "skills"}) {
        v.add(w);
    }
    return v;
}

qpi::ModelConfig tiny(SetupKind setup, HeadKind head = HeadKind::cnn) {
    return qpi::tiny_config(setup, head);
}

TEST(Siamese, IdenticalQuestionsGiveIdenticalCondensedVectors) {
    Vocab vocab = test_vocab();
    auto model = Model<double>::initialized(tiny(SetupKind::siamese), 11);
    QuestionPair pair{"how can i be a good geologist?", "how can i be a good geologist?", 1};
    auto parts = qpi::siamese_parts(pair, model, vocab);
    EXPECT_EQ(parts.h_a.values(), parts.h_b.values());
}

TEST(Siamese, CondensedVectorIndependentOfSlot) {
    Vocab vocab = test_vocab();
    auto model = Model<double>::initialized(tiny(SetupKind::siamese), 12);
    const std::string q = "what are some good rap songs?";
    auto as_a = qpi::siamese_parts(QuestionPair{q, "how can i dance?", 0}, model, vocab);
    auto as_b = qpi::siamese_parts(QuestionPair{"how can i dance?", q, 0}, model, vocab);
    // bitwise: same parameters, same code path
    EXPECT_EQ(as_a.h_a.values(), as_b.h_b.values());
}

TEST(Siamese, SwappingQuestionsSwapsClassifierInputHalves) {
    Vocab vocab = test_vocab();
    auto model = Model<double>::initialized(tiny(SetupKind::siamese), 13);
    QuestionPair ab{"how can i be a good geologist?", "what are some rap songs?", 0};
    QuestionPair ba{"what are some rap songs?", "how can i be a good geologist?", 0};
    auto pab = qpi::siamese_parts(ab, model, vocab);
    auto pba = qpi::siamese_parts(ba, model, vocab);
    EXPECT_EQ(pab.h_a.values(), pba.h_b.values());
    EXPECT_EQ(pab.h_b.values(), pba.h_a.values());
}

TEST(Siamese, RejectsWrongSetup) {
    Vocab vocab = test_vocab();
    auto model = Model<double>::initialized(tiny(SetupKind::matched_aggregation), 14);
    EXPECT_THROW(qpi::siamese_forward(QuestionPair{"a", "b", 0}, model, vocab),
                 qpi::UsageError);
}

TEST(Siamese, TooShortQuestionForFiltersIsError) {
    Vocab vocab = test_vocab();
    auto model = Model<double>::initialized(tiny(SetupKind::siamese), 15);
    // "" tokenizes to nothing -> [CLS][SEP] has unpadded length 2 < width 3
    EXPECT_THROW(qpi::siamese_forward(QuestionPair{"", "how are songs?", 0}, model, vocab),
                 qpi::UsageError);
}

TEST(MatchedAggregation, SingleEncoderPassPerPair) {
    Vocab vocab = test_vocab();
    auto ma = Model<double>::initialized(tiny(SetupKind::matched_aggregation), 16);
    auto si = Model<double>::initialized(tiny(SetupKind::siamese), 16);
    QuestionPair pair{"what are the best rap songs?", "what are some rap songs?", 0};
    ma.reset_encode_invocations();
    si.reset_encode_invocations();
    (void)qpi::matched_aggregation_forward(pair, ma, vocab);
    (void)qpi::siamese_forward(pair, si, vocab);
    EXPECT_EQ(ma.encode_invocations(), 1u);
    EXPECT_EQ(si.encode_invocations(), 2u);
}

TEST(MatchedAggregation, DegenerateIdenticalPairRuns) {
    Vocab vocab = test_vocab();
    auto model = Model<double>::initialized(tiny(SetupKind::matched_aggregation), 17);
    QuestionPair pair{"how can i improve my skills?", "how can i improve my skills?",
                      std::nullopt};
    Tensor<double> probs = qpi::matched_aggregation_forward(pair, model, vocab);
    EXPECT_NEAR(probs.at(0) + probs.at(1), 1.0, 1e-9);
}

TEST(Pipelines, ProbabilityPairsSumToOne) {
    Vocab vocab = test_vocab();
    for (SetupKind setup : {SetupKind::siamese, SetupKind::matched_aggregation}) {
        for (HeadKind head : {HeadKind::cnn, HeadKind::mean_pool}) {
            auto model = Model<double>::initialized(tiny(setup, head), 18);
            QuestionPair pair{"what are some good rap songs to dance to?",
                              "what are some of the best rap songs?", 0};
            Tensor<double> probs = qpi::pipeline_forward(pair, model, vocab);
            EXPECT_NEAR(probs.at(0) + probs.at(1), 1.0, 1e-6);
        }
    }
}

TEST(Predict, DeterministicAndTieBreaksToZero) {
    Vocab vocab = test_vocab();
    auto model = Model<double>::initialized(tiny(SetupKind::matched_aggregation), 19);
    model.set_train_mode(true);  // predict must ignore train mode
    QuestionPair pair{"how can i be a good geologist?",
                      "what should i do to be a great geologist?", 1};
    qpi::Prediction p1 = qpi::predict(pair, model, vocab);
    qpi::Prediction p2 = qpi::predict(pair, model, vocab);
    EXPECT_EQ(p1.label, p2.label);
    EXPECT_EQ(p1.confidence, p2.confidence);
    EXPECT_TRUE(model.train_mode());  // restored

    // zeroed classifier -> exact tie -> label 0 with confidence 0.5
    auto& cls_w = model.params().tensor("classifier.weight");
    std::fill(cls_w.values().begin(), cls_w.values().end(), 0.0);
    auto& cls_b = model.params().tensor("classifier.bias");
    std::fill(cls_b.values().begin(), cls_b.values().end(), 0.0);
    qpi::Prediction tie = qpi::predict(pair, model, vocab);
    EXPECT_EQ(tie.label, 0);
    EXPECT_NEAR(tie.confidence, 0.5, 1e-12);
}

TEST(Pipelines, GradientFlowsToEveryTrainableParameter) {
    Vocab vocab = test_vocab();
    for (SetupKind setup : {SetupKind::siamese, SetupKind::matched_aggregation}) {
        auto model = Model<double>::initialized(tiny(setup), 20);
        model.set_train_mode(false);
        std::vector<QuestionPair> batch = {
            {"how can i be a good geologist?", "what should i do to be a great geologist?", 1},
            {"what are some good rap songs to dance to?", "what are some of the best rap songs?",
             0},
        };
        std::vector<Tensor<double>> probs;
        std::vector<int> labels;
        for (const auto& pair : batch) {
            probs.push_back(qpi::pipeline_forward(pair, model, vocab));
            labels.push_back(*pair.label);
        }
        qpi::backward(qpi::batch_cross_entropy(probs, labels));
        for (const auto& e : model.params().entries()) {
            ASSERT_TRUE(e.tensor.has_grad()) << e.name;
            bool nonzero = false;
            for (double g : e.tensor.grad()) nonzero = nonzero || g != 0.0;
            EXPECT_TRUE(nonzero) << "no gradient signal in " << e.name << " ("
                                 << qpi::setup_kind_name(setup) << ")";
        }
        model.params().zero_grads();
    }
}

TEST(Pipelines, FullModelGradientCheckBothSetups) {
    Vocab vocab = test_vocab();
    for (SetupKind setup : {SetupKind::siamese, SetupKind::matched_aggregation}) {
        qpi::ModelConfig cfg = tiny(setup);
        cfg.encoder.num_layers = 1;  // keep the finite-difference sweep fast here;
                                     // the full tiny config runs in the acceptance suite
        auto model = Model<double>::initialized(cfg, 21);
        model.set_train_mode(false);
        QuestionPair pair{"how can i be a good geologist?",
                          "what should i do to be a great geologist?", 1};
        auto loss_fn = [&]() {
            return qpi::cross_entropy(qpi::pipeline_forward(pair, model, vocab), 1);
        };
        auto report = qpi::finite_diff_check<double>(loss_fn, model.params(), 1e-5, 1e-4);
        EXPECT_TRUE(report.pass)
            << qpi::setup_kind_name(setup) << ": " << report.worst().name << " err "
            << report.worst().max_rel_error;
        // every registered parameter appears in the report
        EXPECT_EQ(report.rows.size(), model.params().size());
    }
}

}  // namespace
