#include <gtest/gtest.h>

#include <fstream>

#include "conceptforge/backend_factory.hpp"
#include "support.hpp"

using namespace conceptforge;

namespace {

std::string error_of(const nlohmann::json& j) {
    try {
        parse_config_json(j);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST(Config, MinimalFillsDefaults) {
    const auto c = parse_config_json({{"category", "pet"}});
    EXPECT_EQ(c.category, "pet");
    EXPECT_EQ(c.positives, (std::vector<std::string>{"pet"}));
    EXPECT_EQ(c.training.lambda, 1.0);
    EXPECT_EQ(c.training.segment_length, 250u);
    EXPECT_EQ(c.training.total_steps, 1500u);
    EXPECT_EQ(c.question_template, "What kind of {} is in this photo");
    EXPECT_EQ(c.backend.kind, BackendKind::stub);
    EXPECT_EQ(c.templates, default_templates());
    EXPECT_EQ(c.images_per_parent, 4u);
    EXPECT_EQ(c.render.images, 32u);
}

TEST(Config, ClampOrderRejected) {
    const auto msg = error_of({{"category", "pet"}, {"training", {{"clamp", {{"lo", 0.5}, {"hi", 0.2}}}}}});
    EXPECT_NE(msg.find("training.clamp"), std::string::npos) << msg;
}

TEST(Config, UnknownKeysReportedWithPath) {
    EXPECT_NE(error_of({{"category", "pet"}, {"trainng", {}}}).find("trainng: unknown key"), std::string::npos);
    const auto msg = error_of({{"category", "pet"}, {"backend", {{"stub", {{"dimm", 3}}}}}});
    EXPECT_NE(msg.find("backend.stub.dimm"), std::string::npos) << msg;
    const auto type = error_of({{"category", "pet"}, {"training", {{"total_steps", "many"}}}});
    EXPECT_NE(type.find("training.total_steps"), std::string::npos) << type;
}

TEST(Config, OtherRejections) {
    EXPECT_NE(error_of(nlohmann::json::object()).find("category"), std::string::npos);
    EXPECT_FALSE(error_of({{"category", "pet"}, {"templates", {"no slot"}}}).empty());
    EXPECT_FALSE(error_of({{"category", "pet"}, {"negatives", {"cat", "Cat"}}}).empty());
    EXPECT_FALSE(error_of({{"category", "pet"}, {"backend", {{"kind", "cloud"}}}}).empty());
    EXPECT_FALSE(error_of({{"category", "pet"}, {"training", {{"learning_rate", 0.0}}}}).empty());
}

TEST(Config, RoundTripIsLossless) {
    nlohmann::json j = {{"category", "Musical Instrument"},
                        {"negatives", {"guitar", "piano"}},
                        {"templates", {"A photo of a {}", "Professional high-quality photo of a {}. photorealistic, 4k, HQ"}},
                        {"training",
                         {{"total_steps", 321},
                          {"learning_rate", 0.0123456789012345},
                          {"clamp", {{"lo", -0.25}, {"hi", 0.75}}},
                          {"seed", 99},
                          {"adaptive_negatives", false}}},
                        {"backend", {{"kind", "real"}, {"real", {{"prior_steps", 25}, {"endpoint", "http://gpu:9000"}}}}},
                        {"render", {{"images", 8}}}};
    const auto c = parse_config_json(j);
    const auto again = parse_config_json(nlohmann::json::parse(serialize_config(c)));
    EXPECT_TRUE(again == c);
    EXPECT_EQ(serialize_config(again), serialize_config(c));
    EXPECT_EQ(again.backend.real.prior_steps, 25);
    EXPECT_FALSE(again.backend.real.prior_guidance_scale.has_value());
}

TEST(Config, FileWithCommentsAndRelativeFiles) {
    const auto dir = cftest::fresh_dir("cfg");
    std::ofstream(dir / "bank.txt") << "A photo of a {}\nA sketch of {}\n";
    std::ofstream(dir / "words.txt") << "pet\ncat\n# comment\ndog\n";
    std::ofstream(dir / "run.json") << R"({
  // comments are fine
  "category": "pet",
  "templates_file": "bank.txt",
  "backend": {"stub": {"vocabulary_file": "words.txt", "dim": 16}}
})";
    const auto c = parse_config(dir / "run.json");
    EXPECT_EQ(c.templates.size(), 2u);
    EXPECT_EQ(c.backend.stub.vocabulary, (std::vector<std::string>{"pet", "cat", "dog"}));
    EXPECT_THROW(parse_config(dir / "missing.json"), ConfigError);
}

TEST(Config, EnvironmentOverridesBackend) {
    auto c = parse_config_json({{"category", "pet"}});
    ::setenv("CONCEPTFORGE_BACKEND", "real", 1);
    apply_environment(c);
    ::unsetenv("CONCEPTFORGE_BACKEND");
    EXPECT_EQ(c.backend.kind, BackendKind::real);
    ::setenv("CONCEPTFORGE_BACKEND", "bogus", 1);
    EXPECT_THROW(apply_environment(c), ConfigError);
    ::unsetenv("CONCEPTFORGE_BACKEND");
}

TEST(Config, FactoryBuildsStubThatKnowsRenderTemplates) {
    auto c = parse_config_json({{"category", "pet"}, {"render", {{"template", "A watercolor of {}"}}}});
    const auto b = make_backends(c);
    ASSERT_TRUE(stub_of(b));
    EXPECT_NE(stub_of(b)->template_vector("A watercolor of {}"), Vec(b.text->embedding_dim(), 0.0));
}

// ---- artifact store ----

TEST(Store, EmbeddingFileFormat) {
    const auto dir = cftest::fresh_dir("emb");
    const Vec v{1.0, -0.5, 0.25, 3.0e-8};
    write_embedding(dir / "e.bin", v);
    std::ifstream in(dir / "e.bin", std::ios::binary);
    std::string l1, l2, l3, l4, l5;
    std::getline(in, l1), std::getline(in, l2), std::getline(in, l3), std::getline(in, l4), std::getline(in, l5);
    EXPECT_EQ(l1, "conceptforge-embedding 1");
    EXPECT_EQ(l2, "dim 4");
    EXPECT_EQ(l3, "dtype float32");
    EXPECT_EQ(l4, "byte_order little-endian");
    EXPECT_EQ(l5, "");
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    // 1.0f = 0x3F800000, little-endian
    EXPECT_EQ(b[0], 0x00);
    EXPECT_EQ(b[3], 0x3F);
    const auto back = read_embedding(dir / "e.bin");
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(back[i], static_cast<double>(static_cast<float>(v[i])));
}

TEST(Store, ArtifactRoundTrip) {
    auto b = make_stub_backends();
    b.vqa = std::make_shared<ScriptedVqa>(std::vector<std::string>{"guinea pig", "parrot, the green one"});
    TrainingConfig c;
    c.total_steps = 40;
    c.segment_length = 20;
    RunSpec spec;
    spec.category = "pet";
    spec.initial_negatives = {"cat"};
    spec.id = "pet-run";
    const auto dir = cftest::fresh_dir("artifact");
    spec.adaptive.image_dir = dir / "segments";
    auto art = run(b, c, spec);
    save_artifact(art, dir);
    for (const auto* f : {"embedding.bin", "metadata.json", "trace.csv", "losses.csv", "negatives.csv"})
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
    EXPECT_EQ(list_png_files(dir / "segments").size(), 2u);

    const auto back = load_artifact(dir);
    // only the embedding is stored in single precision
    for (auto& x : art.token.embedding) x = static_cast<float>(x);
    EXPECT_TRUE(back == art);
    EXPECT_EQ(back.history.entries.at(1).word, "parrot, the green one");
    EXPECT_EQ(back.history.entries.at(0).image_reference, "segments/20_a_photo_of_a_s.png");
}

TEST(Store, MissingArtifactIsAStoreError) {
    EXPECT_THROW(load_artifact(cftest::fresh_dir("nothing")), StoreError);
}

// ---- render ----

TEST(Render, CountsAndSeeds) {
    const auto b = make_stub_backends();
    const auto t = init_token(b, "pet", 0.02, 0);
    const auto imgs = render(b, t, "A photo of a {}", 4, 10);
    ASSERT_EQ(imgs.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(imgs[i].seed, 10 + i);
        EXPECT_EQ(imgs[i].prompt, "A photo of a S_*");
    }
    EXPECT_NE(imgs[0].pixels, imgs[1].pixels);
    EXPECT_EQ(image_filename(imgs[0].seed, imgs[0].prompt), "10_a_photo_of_a_s.png");
    EXPECT_THROW(render(b, t, "no slot", 1, 0), ConfigError);
}

TEST(Render, ImagesMatchPriorOutputOfTheToken) {
    const auto b = make_stub_backends();
    const auto t = init_token(b, "pet", 0.02, 0);
    const std::string tmpl = "Professional high-quality photo of a {}. photorealistic, 4k, HQ";
    const auto imgs = render(b, t, tmpl, 8, 0);
    EXPECT_EQ(imgs[0].prompt, "Professional high-quality photo of a S_*. photorealistic, 4k, HQ");
    const auto out = prior_sample(b, b.text->encode_with_token(tmpl, t.embedding), 0);
    for (const auto& img : imgs) EXPECT_GE(cosine(encode_image(b, img).values, out.values), 0.95);
}

TEST(Render, BackendFailureNamesThePrompt) {
    struct Broken final : ImageDecoder {
        GeneratedImage decode(const ImageEmbedding&, std::uint64_t) const override { throw BackendError("decoder down"); }
    };
    auto b = make_stub_backends();
    b.decoder = std::make_shared<Broken>();
    try {
        render(b, init_token(b, "pet", 0.0, 0), "A photo of a {}", 1, 0);
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_NE(std::string(e.what()).find("A photo of a S_*"), std::string::npos);
    }
}
