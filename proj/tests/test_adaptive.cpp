#include <gtest/gtest.h>

#include "support.hpp"

using namespace conceptforge;

namespace {

ConstraintSet pet_constraints(std::vector<std::string> negatives = {}) {
    ConstraintSet c;
    c.positives = {"pet"};
    c.negatives = std::move(negatives);
    return c;
}

} // namespace

TEST(UpdateConstraints, AppendsNewWord) {
    NegativeHistory h;
    auto c = pet_constraints({"cat"});
    EXPECT_TRUE(update_constraints(h, c, "dog", 250, 20));
    EXPECT_EQ(c.negatives, (std::vector<std::string>{"cat", "dog"}));
    ASSERT_EQ(h.entries.size(), 1u);
    EXPECT_EQ(h.entries[0].step, 250u);
    EXPECT_EQ(h.entries[0].word, "dog");
}

TEST(UpdateConstraints, DuplicateIsANoOp) {
    NegativeHistory h;
    auto c = pet_constraints({"cat"});
    EXPECT_FALSE(update_constraints(h, c, "cat", 250, 20));
    EXPECT_FALSE(update_constraints(h, c, "CAT ", 500, 20));
    EXPECT_EQ(c.negatives, (std::vector<std::string>{"cat"}));
    EXPECT_TRUE(h.entries.empty());
}

TEST(UpdateConstraints, RespectsLimit) {
    NegativeHistory h;
    auto c = pet_constraints({"cat", "dog"});
    EXPECT_FALSE(update_constraints(h, c, "parrot", 250, 2));
    EXPECT_TRUE(update_constraints(h, c, "parrot", 250, 3));
}

TEST(UpdateConstraints, ScriptedStyleSequence) {
    NegativeHistory h;
    ConstraintSet c;
    c.positives = {"painting"};
    const std::vector<std::string> answers{"oil painting", "colorful abstract", "black and white"};
    for (std::size_t i = 0; i < answers.size(); ++i) update_constraints(h, c, answers[i], 250 * (i + 1), 20);
    EXPECT_EQ(c.negatives, answers);
    EXPECT_EQ(h.words(), answers);
}

TEST(ProposeNegative, ScriptedAnswerIsReturned) {
    auto b = make_stub_backends();
    auto vqa = std::make_shared<ScriptedVqa>(std::vector<std::string>{"cat"});
    b.vqa = vqa;
    const auto t = init_token(b, "pet", 0.02, 0);
    const auto p = propose_negative(b, t, "pet", 5);
    ASSERT_TRUE(p.word);
    EXPECT_EQ(*p.word, "cat");
    EXPECT_EQ(p.prompt, "A photo of a S_*");
    EXPECT_EQ(vqa->last_question(), "What kind of pet is in this photo");
    ASSERT_TRUE(p.image);
}

TEST(ProposeNegative, SelfCategoryAndEmptyAnswersRejected) {
    auto b = make_stub_backends();
    b.vqa = std::make_shared<ScriptedVqa>(std::vector<std::string>{"Pet", ""});
    const auto t = init_token(b, "pet", 0.02, 0);
    EXPECT_FALSE(propose_negative(b, t, "pet", 1).word);
    const auto p = propose_negative(b, t, "pet", 2);
    EXPECT_FALSE(p.word);
    EXPECT_EQ(p.note, "empty answer");
}

TEST(ProposeNegative, BackendFailureBecomesWarning) {
    struct Broken final : VqaModel {
        std::string answer(const GeneratedImage&, const std::string&) const override { throw BackendError("vqa down"); }
    };
    auto b = make_stub_backends();
    b.vqa = std::make_shared<Broken>();
    const auto p = propose_negative(b, init_token(b, "pet", 0.02, 0), "pet", 1);
    EXPECT_FALSE(p.word);
    EXPECT_NE(p.note.find("vqa down"), std::string::npos);
}

TEST(ProposeNegative, StubAnswerIsNearestWordToRenderedEmbedding) {
    const auto b = make_stub_backends();
    const auto stub = stub_of(b);
    for (int k = 0; k < 10; ++k) {
        const auto t = init_token(b, k % 2 ? "pet" : "fruit", 0.3, k);
        const std::string category = t.category;
        const auto p = propose_negative(b, t, category, mix_seed(3, k));
        ASSERT_TRUE(p.image);
        // independent rendering of the same pipeline
        const auto text = b.text->encode_with_token("A photo of a {}", t.embedding);
        const auto out = prior_sample(b, text, mix_seed(3, k));
        std::string best;
        double best_score = -2.0;
        for (const auto& w : stub->vocabulary()) {
            if (w == category) continue;
            const double s = cftest::plain_dot(stub->word_vector(w), out.values);
            if (s > best_score) best_score = s, best = w;
        }
        ASSERT_TRUE(p.word) << p.note;
        EXPECT_EQ(*p.word, best);
    }
}

TEST(AdaptiveSegment, WritesSegmentImage) {
    const auto b = make_stub_backends();
    const auto dir = cftest::fresh_dir("segments");
    AdaptiveOptions opt;
    opt.image_dir = dir / "segments";
    NegativeHistory h;
    auto c = pet_constraints({"cat"});
    adaptive_segment(b, init_token(b, "pet", 0.3, 4), "pet", 250, 9, opt, h, c);
    EXPECT_TRUE(std::filesystem::exists(dir / "segments" / "250_a_photo_of_a_s.png"));
}

TEST(AdaptiveRun, SeedsDiscoverDifferentNegatives) {
    // stub nearest-word oracle; at least one of 5 seed pairs must disagree
    const auto b = make_stub_backends();
    TrainingConfig c;
    c.total_steps = 300;
    c.segment_length = 50;
    c.learning_rate = 0.01;
    c.init_sigma = 0.3;
    c.n_template_samples = 4;
    RunSpec spec;
    spec.category = "pet";
    spec.initial_negatives = {"cat", "dog"};
    int differing = 0;
    for (std::uint64_t pair = 0; pair < 5; ++pair) {
        c.seed = 2 * pair;
        const auto a = run(b, c, spec).history.words();
        c.seed = 2 * pair + 1;
        const auto d = run(b, c, spec).history.words();
        if (a != d) ++differing;
    }
    EXPECT_GE(differing, 1);
}

TEST(AdaptiveRun, HistoryInvariants) {
    const auto b = make_stub_backends();
    TrainingConfig c;
    c.total_steps = 200;
    c.segment_length = 25;
    c.learning_rate = 0.01;
    c.init_sigma = 0.2;
    RunSpec spec;
    spec.category = "pet";
    spec.initial_negatives = {"cat"};
    const auto art = run(b, c, spec);
    std::set<std::string> seen;
    std::size_t last_step = 0;
    for (const auto& e : art.history.entries) {
        EXPECT_TRUE(seen.insert(e.word).second) << e.word;
        EXPECT_GE(e.step, last_step);
        last_step = e.step;
        EXPECT_NE(e.word, "pet");
    }
    EXPECT_EQ(art.queries, 8u);
}
