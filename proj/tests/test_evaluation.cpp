#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <set>
#include <fstream>
#include <random>

#include "support.hpp"

using namespace conceptforge;

namespace {

// Image embeddings with prescribed cosines to the "A photo of a <word>" prompts, built in the span of
// orthonormalized prompt vectors.
struct Fixture {
    Backends b = make_stub_backends();
    Vec prompt(const std::string& w) const { return encode_text(b, "A photo of a " + w).values; }
};

ImageEmbedding image_of(const Vec& v) { return ImageEmbedding(v, Provenance::encoded_image); }

} // namespace

TEST(PositiveSimilarity, ImagesOfThePromptScoreOne) {
    Fixture f;
    const std::vector<ImageEmbedding> imgs(5, image_of(f.prompt("pet")));
    EXPECT_NEAR(positive_similarity(f.b, imgs, "pet"), 1.0, 1e-12);
}

TEST(PositiveSimilarity, MeanOverImages) {
    Fixture f;
    const Vec p = f.prompt("pet");
    // component orthogonal to p
    Vec q = gaussian_vector(p.size(), 5);
    axpy(-cftest::plain_dot(q, p), p, q);
    q = cftest::unit(q);
    auto at = [&](double c) {
        Vec v(p.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = c * p[i] + std::sqrt(1 - c * c) * q[i];
        return image_of(v);
    };
    EXPECT_NEAR(positive_similarity(f.b, std::vector<ImageEmbedding>{at(0.2), at(0.4)}, "pet"), 0.3, 1e-12);
    EXPECT_THROW(positive_similarity(f.b, std::vector<ImageEmbedding>{}, "pet"), ConfigError);
}

TEST(NegativeDistance, CollapseOntoANegativeIsFlagged) {
    Fixture f;
    const std::vector<ImageEmbedding> imgs(3, image_of(f.prompt("cat")));
    const auto nd = negative_distance(f.b, imgs, "pet", {"cat", "dog"});
    EXPECT_NEAR(nd.max_negative, 1.0, 1e-12);
    EXPECT_NEAR(nd.distance, cftest::plain_dot(f.prompt("pet"), f.prompt("cat")) - 1.0, 1e-12);
    EXPECT_LT(nd.distance, 0.0);
    EXPECT_THROW(negative_distance(f.b, imgs, "pet", {}), ConfigError);
}

TEST(NegativeDistance, MatchesStraightLineReimplementation) {
    Fixture f;
    std::vector<ImageEmbedding> imgs;
    for (int k = 0; k < 32; ++k) imgs.push_back(image_of(gaussian_vector(f.b.text->embedding_dim(), k)));
    const std::vector<std::string> negs{"cat", "dog", "parrot"};
    const auto nd = negative_distance(f.b, imgs, "pet", negs);

    auto mean_to = [&](const std::string& w) {
        const Vec t = f.prompt(w);
        double s = 0.0;
        for (const auto& e : imgs) s += cftest::plain_dot(e.values, t);
        return s / imgs.size();
    };
    double worst = -2.0;
    for (const auto& n : negs) worst = std::max(worst, mean_to(n));
    EXPECT_NEAR(nd.positive, mean_to("pet"), 1e-12);
    EXPECT_NEAR(nd.max_negative, worst, 1e-12);
    EXPECT_EQ(nd.distance, nd.positive - nd.max_negative);
    EXPECT_DOUBLE_EQ(nd.distance + nd.max_negative, nd.positive);
}

TEST(NegativeDistance, InvariantToImageOrder) {
    Fixture f;
    std::vector<ImageEmbedding> imgs;
    for (int k = 0; k < 16; ++k) imgs.push_back(image_of(gaussian_vector(f.b.text->embedding_dim(), 100 + k)));
    const auto base = negative_distance(f.b, imgs, "fruit", {"apple", "banana"});
    std::mt19937_64 rng(4);
    std::shuffle(imgs.begin(), imgs.end(), rng);
    const auto shuffled = negative_distance(f.b, imgs, "fruit", {"apple", "banana"});
    EXPECT_NEAR(shuffled.distance, base.distance, 1e-12);
    EXPECT_NEAR(shuffled.positive, base.positive, 1e-12);
}

TEST(NegativeDistance, MethodAgnosticFolders) {
    // the same PNG folder scores the same under any method label
    Fixture f;
    const auto dir = cftest::fresh_dir("baseline");
    for (int k = 0; k < 4; ++k)
        write_png(dir / (std::to_string(k) + ".png"), decode_image(f.b, prior_sample(f.b, encode_text(f.b, "A photo of a cat"), k), k));
    std::vector<GeneratedImage> imgs;
    for (const auto& p : list_png_files(dir)) imgs.push_back(read_png(p));
    const auto emb = embed_images(f.b, imgs);
    const auto a = score_images(f.b, emb, "baseline-a", "pet", "x", "pet", {"cat", "dog"});
    const auto c = score_images(f.b, emb, "baseline-b", "pet", "x", "pet", {"cat", "dog"});
    EXPECT_EQ(a.negative_distance, c.negative_distance);
    EXPECT_EQ(a.positive_similarity, c.positive_similarity);
    EXPECT_EQ(a.negatives, "cat+dog");
    EXPECT_EQ(a.n_images, 4u);
}

TEST(Aggregate, SmallFixtures) {
    EvalReport one;
    one.records.push_back({"m", "pet", "a", "cat+dog", 0.31, 0.2, 0.11, 32});
    const auto r1 = aggregate(one);
    ASSERT_EQ(r1.size(), 1u);
    EXPECT_EQ(r1[0].positive_similarity, 0.31);
    EXPECT_EQ(r1[0].negative_distance, 0.11);

    EvalReport two;
    two.records.push_back({"m", "pet", "a", "", 0.2, 0.0, 0.2, 1});
    two.records.push_back({"m", "pet", "b", "", 0.4, 0.0, 0.4, 1});
    EXPECT_DOUBLE_EQ(aggregate(two)[0].positive_similarity, 0.3);
    EXPECT_THROW(aggregate(EvalReport{}), ConfigError);
}

TEST(Aggregate, EqualsBruteForceRecompute) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    EvalReport report;
    const std::vector<std::string> methods{"ours", "baseline"}, cats{"pet", "plant", "fruit"};
    for (int i = 0; i < 60; ++i)
        report.records.push_back({methods[i % 2], cats[i % 3], "c" + std::to_string(i), "", u(rng), u(rng), u(rng), 32});
    const auto rows = aggregate(report);
    EXPECT_EQ(rows.size(), 6u);
    for (const auto& row : rows) {
        double sp = 0.0, sd = 0.0;
        std::size_t n = 0;
        for (const auto& r : report.records)
            if (r.method == row.method && r.category == row.category) sp += r.positive_similarity, sd += r.negative_distance, ++n;
        EXPECT_EQ(row.n_records, n);
        EXPECT_EQ(row.positive_similarity, sp / static_cast<double>(n));
        EXPECT_EQ(row.negative_distance, sd / static_cast<double>(n));
    }
}

TEST(Aggregate, CsvAndPlotEmission) {
    const auto dir = cftest::fresh_dir("agg");
    EvalReport report;
    report.records.push_back({"ours", "pet", "a", "cat+dog", 0.3, 0.1, 0.2, 32});
    report.records.push_back({"base", "pet", "b", "cat+dog", 0.35, 0.3, 0.05, 32});
    write_report_csv(dir / "report.csv", report);
    const auto rows = aggregate(report);
    write_aggregate_csv(dir / "aggregate.csv", rows);
    const auto plot = scatter_plot(rows);
    write_png(dir / "scatter.png", plot);
    std::ifstream in(dir / "aggregate.csv");
    std::string header, line;
    std::getline(in, header);
    EXPECT_EQ(header, "method,category,positive_similarity,negative_distance,n_records,n_images");
    int n = 0;
    while (std::getline(in, line)) ++n;
    EXPECT_EQ(n, 2);
    EXPECT_EQ(read_png(dir / "scatter.png").pixels, plot.pixels);
    // the two points are drawn in different colours
    std::set<std::array<int, 3>> colours;
    for (std::size_t i = 0; i < plot.pixels.size(); i += 3)
        colours.insert({plot.pixels[i], plot.pixels[i + 1], plot.pixels[i + 2]});
    EXPECT_GE(colours.size(), 4u);
}

TEST(Protocol, SmallGridShape) {
    const auto b = make_stub_backends();
    ProtocolGrid grid;
    grid.categories = {{"pet", {{"cat", "dog"}}}, {"fruit", {{"apple", "banana"}, {"orange", "grape"}}}};
    grid.seeds = 2;
    grid.images_per_concept = 4;
    TrainingConfig c;
    c.total_steps = 20;
    c.segment_length = 10;
    const auto r = run_protocol(b, grid, c);
    EXPECT_EQ(r.concepts.records.size(), 6u);
    ASSERT_EQ(r.combinations.records.size(), 3u);
    for (const auto& rec : r.combinations.records) EXPECT_EQ(rec.n_images, 8u);
    EXPECT_EQ(r.combinations.records[1].negatives, "apple+banana");
}

TEST(Protocol, DefaultGrid) {
    const auto g = default_protocol_grid();
    EXPECT_EQ(g.categories.size(), 5u);
    for (const auto& c : g.categories) EXPECT_EQ(c.negative_pairs.size(), 3u);
    EXPECT_EQ(g.seeds, 5u);
    EXPECT_EQ(g.images_per_concept, 32u);
}
