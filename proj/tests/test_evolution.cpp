#include <gtest/gtest.h>

#include "support.hpp"

using namespace conceptforge;

namespace {

// A learned concept whose token is exactly a vocabulary word.
ConceptArtifact word_concept(const Backends& b, const std::string& word) {
    ConceptArtifact a;
    a.id = word;
    a.token.embedding = b.text->token_embedding(word);
    a.token.category = word;
    return a;
}

TrainingConfig mix_config(std::size_t steps = 600) {
    TrainingConfig c;
    c.total_steps = steps;
    c.learning_rate = 0.01;
    c.n_template_samples = 1;
    return c;
}

Vec prior_output(const Backends& b, const Vec& token, const std::string& tmpl = "{}") {
    return prior_sample(b, b.text->encode_with_token(tmpl, token), 0).values;
}

} // namespace

TEST(ImageConstraints, CountsAndTags) {
    const auto b = make_stub_backends();
    MixSpec spec;
    spec.parents = {{"cat", word_concept(b, "cat"), {}}, {"dog", word_concept(b, "dog"), {}}};
    const auto tagged = build_image_constraints(b, spec, 1);
    ASSERT_EQ(tagged.size(), 8u);
    for (std::size_t i = 0; i < 8; ++i) {
        EXPECT_EQ(tagged[i].parent, i / 4);
        EXPECT_NEAR(norm(tagged[i].embedding.values), 1.0, 1e-9);
    }
    const auto w = embedding_weights(spec, tagged);
    for (double x : w) EXPECT_NEAR(x, 0.125, 1e-15);
}

TEST(ImageConstraints, RealImageParentFromPng) {
    const auto b = make_stub_backends();
    const auto dir = cftest::fresh_dir("realimg");
    write_png(dir / "a.png", decode_image(b, prior_sample(b, encode_text(b, "A photo of a rose"), 1), 1));
    MixSpec spec;
    spec.parents = {{"rose", std::nullopt, {read_png(dir / "a.png")}}};
    const auto tagged = build_image_constraints(b, spec, 0);
    ASSERT_EQ(tagged.size(), 1u);
    EXPECT_NEAR(norm(tagged[0].embedding.values), 1.0, 1e-9);
}

TEST(ImageConstraints, NoiselessEmbeddingsEqualParentPriorOutput) {
    const auto b = make_stub_backends(cftest::noiseless_stub({"A photo of a {}"}));
    MixSpec spec;
    spec.parents = {{"cat", word_concept(b, "cat"), {}}};
    const Vec expected = prior_output(b, spec.parents[0].learned->token.embedding, "A photo of a {}");
    for (const auto& t : build_image_constraints(b, spec, 3)) EXPECT_GE(cosine(t.embedding.values, expected), 1.0 - 1e-8);
}

TEST(MixSpec, Validation) {
    MixSpec spec;
    EXPECT_THROW(spec.validate(), ConfigError);
    spec.parents = {{"x", std::nullopt, {}}};
    EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(MixConcepts, SingleParentRecovered) {
    const auto b = make_stub_backends(cftest::noiseless_stub());
    MixSpec spec;
    spec.render_template = "{}";
    spec.parents = {{"rose", word_concept(b, "rose"), {}}};
    spec.init_word = "cactus";
    const auto art = mix_concepts(b, spec, mix_config(), PromptTemplateBank({"{}"}));
    const Vec parent = prior_output(b, spec.parents[0].learned->token.embedding);
    EXPECT_GE(cosine(prior_output(b, art.token.embedding), parent), 0.95);
    EXPECT_LE(art.losses.back(), 0.05);
    ASSERT_EQ(art.parents.size(), 1u);
    EXPECT_EQ(art.parents[0].id, "rose");
}

TEST(MixConcepts, TwoOrthogonalParentsLandOnCentroid) {
    const auto b = make_stub_backends(cftest::noiseless_stub());
    MixSpec spec;
    spec.render_template = "{}";
    spec.parents = {{"cat", word_concept(b, "cat"), {}}, {"dog", word_concept(b, "dog"), {}}};
    const auto art = mix_concepts(b, spec, mix_config(), PromptTemplateBank({"{}"}));
    const auto stub = stub_of(b);
    Vec mid = stub->word_vector("cat");
    axpy(1.0, stub->word_vector("dog"), mid);
    EXPECT_GE(cosine(prior_output(b, art.token.embedding), cftest::unit(mid)), 0.95);
}

TEST(MixConcepts, DegenerateWeightsIgnoreSecondParent) {
    const auto b = make_stub_backends(cftest::noiseless_stub());
    MixSpec spec;
    spec.render_template = "{}";
    spec.parents = {{"cat", word_concept(b, "cat"), {}}, {"dog", word_concept(b, "dog"), {}}};
    spec.weights = std::vector<double>{1.0, 0.0};
    spec.init_word = "dog";
    const auto art = mix_concepts(b, spec, mix_config(), PromptTemplateBank({"{}"}));
    EXPECT_GE(cosine(prior_output(b, art.token.embedding), stub_of(b)->word_vector("cat")), 0.95);
}

TEST(MixConcepts, UniformWeightsArePermutationInvariant) {
    // noiseless prior: parent images do not depend on their seed slot, so both orders see the same set
    const auto b = make_stub_backends(cftest::noiseless_stub({"A photo of a {}"}));
    const PromptTemplateBank bank({"A photo of a {}"});
    MixSpec ab, ba;
    ab.parents = {{"cat", word_concept(b, "cat"), {}}, {"dog", word_concept(b, "dog"), {}}};
    ba.parents = {ab.parents[1], ab.parents[0]};
    ab.init_word = ba.init_word = "pet";
    const auto l1 = mix_concepts(b, ab, mix_config(400), bank).losses.back();
    const auto l2 = mix_concepts(b, ba, mix_config(400), bank).losses.back();
    EXPECT_NEAR(l1, l2, 1e-3);
}

TEST(EvolutionTree, GenerationArithmetic) {
    EvolutionTree tree;
    tree.add_root({"a", {}, {}, 0, "", "", std::nullopt, {}});
    tree.add_root({"b", {}, {}, 0, "", "", std::nullopt, {}});
    EXPECT_EQ(tree.add_child({"ab", {"a", "b"}, {0.5, 0.5}, 0, "", "", std::nullopt, {}}).generation, 1u);
    tree.add_root({"c", {}, {}, 0, "", "", std::nullopt, {}});
    EXPECT_EQ(tree.add_child({"abc", {"ab", "c"}, {0.5, 0.5}, 0, "", "", std::nullopt, {}}).generation, 2u);
    EXPECT_THROW(tree.add_child({"x", {"nope"}, {1.0}, 0, "", "", std::nullopt, {}}), ConfigError);
    EXPECT_THROW(tree.add_child({"ab", {"a"}, {1.0}, 0, "", "", std::nullopt, {}}), ConfigError);
    EXPECT_THROW(tree.add_child({"self", {"self"}, {1.0}, 0, "", "", std::nullopt, {}}), ConfigError);
}

TEST(EvolutionTree, JsonRoundTripAndCycleRejection) {
    EvolutionTree tree;
    tree.add_root({"a", {}, {}, 0, "runs/a", "", std::nullopt, {}});
    tree.add_root({"b", {}, {}, 0, "", "photos/b", std::nullopt, {}});
    tree.add_child({"ab", {"a", "b"}, {0.3, 0.7}, 0, "runs/ab", "", std::nullopt, {}});
    const auto j = tree.to_json();
    const auto back = EvolutionTree::from_json(j);
    EXPECT_EQ(back.to_json(), j);
    EXPECT_EQ(back.find("ab")->weights, (std::vector<double>{0.3, 0.7}));

    auto cyclic = j;
    // make "a" a child of "ab"
    for (auto& n : cyclic["nodes"])
        if (n["id"] == "a") {
            n["parents"] = {"ab"};
            n["weights"] = {1.0};
            n["generation"] = 2;
        }
    EXPECT_THROW(EvolutionTree::from_json(cyclic), ConfigError);

    auto wrong_gen = j;
    for (auto& n : wrong_gen["nodes"])
        if (n["id"] == "ab") n["generation"] = 5;
    EXPECT_THROW(EvolutionTree::from_json(wrong_gen), ConfigError);
}

TEST(EvolveGeneration, FourRootsThreePairingsGiveSevenNodes) {
    const auto b = make_stub_backends();
    EvolutionTree tree;
    for (const auto* w : {"cat", "parrot", "rose", "lobster"}) {
        EvolutionNode n;
        n.id = w;
        n.learned = word_concept(b, w);
        tree.add_root(std::move(n));
    }
    auto c = mix_config(40);
    EvolveSettings settings;
    settings.threads = 2;
    const auto g1 = evolve_generation(b, tree, {{{"cat", "parrot"}, std::nullopt, "cat+parrot"}, {{"rose", "lobster"}, std::nullopt, ""}},
                                      c, settings);
    EXPECT_EQ(g1, (std::vector<std::string>{"cat+parrot", "rose+lobster"}));
    const auto g2 = evolve_generation(b, tree, {{{"cat+parrot", "rose+lobster"}, std::vector<double>{0.5, 0.5}, "grand"}}, c, settings);
    EXPECT_EQ(tree.nodes().size(), 7u);
    EXPECT_EQ(tree.max_generation(), 2u);
    EXPECT_EQ(tree.find("grand")->generation, 2u);
    EXPECT_EQ(tree.find("cat+parrot")->generation, 1u);
    // re-adding an existing id is a lineage error
    EXPECT_THROW(evolve_generation(b, tree, {{{"cat", "grand"}, std::nullopt, "grand"}}, c, settings), ConfigError);
}
