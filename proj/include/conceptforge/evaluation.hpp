#pragma once

// CLIP-space scoring of generated image sets against a positive category and its negatives.
//
//   positive similarity = mean_i cos(img_i, E("A photo of a <positive>"))
//   negative distance   = positive similarity - max_n mean_i cos(img_i, E("A photo of a <n>"))
//
// Per-negative similarities are averaged over images before the max over negatives is taken.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "conceptforge/backend.hpp"
#include "conceptforge/error.hpp"
#include "conceptforge/image_io.hpp"
#include "conceptforge/parallel.hpp"
#include "conceptforge/render.hpp"
#include "conceptforge/trainer.hpp"

namespace conceptforge {

inline constexpr std::string_view kEvalTemplate = "A photo of a {}";

/// Image embeddings for a batch of rasters.
inline std::vector<ImageEmbedding> embed_images(const Backends& b, const std::vector<GeneratedImage>& images,
                                                std::size_t threads = 1) {
    std::vector<ImageEmbedding> out(images.size());
    parallel_for(images.size(), threads, [&](std::size_t i) { out[i] = encode_image(b, images[i]); });
    return out;
}

inline double mean_similarity_to_prompt(const Backends& b, const std::vector<ImageEmbedding>& images,
                                        const std::string& word, std::string_view prompt_template = kEvalTemplate) {
    if (images.empty()) throw ConfigError("evaluation: empty image set");
    const auto text = encode_text(b, render_prompt(prompt_template, word));
    double sum = 0.0;
    for (const auto& img : images) sum += dot(img.values, text.values);
    return sum / static_cast<double>(images.size());
}

inline double positive_similarity(const Backends& b, const std::vector<ImageEmbedding>& images,
                                  const std::string& positive_word) {
    return mean_similarity_to_prompt(b, images, positive_word);
}

inline double positive_similarity(const Backends& b, const std::vector<GeneratedImage>& images,
                                  const std::string& positive_word) {
    return positive_similarity(b, embed_images(b, images), positive_word);
}

struct NegativeDistance {
    double positive = 0.0;
    std::vector<double> per_negative;
    double max_negative = 0.0;
    double distance = 0.0;  // positive - max_negative; negative values flag collapse onto a negative
};

inline NegativeDistance negative_distance(const Backends& b, const std::vector<ImageEmbedding>& images,
                                          const std::string& positive_word, const std::vector<std::string>& negatives) {
    if (negatives.empty()) throw ConfigError("negative_distance: empty negative list");
    NegativeDistance out;
    out.positive = positive_similarity(b, images, positive_word);
    for (const auto& n : negatives) out.per_negative.push_back(mean_similarity_to_prompt(b, images, n));
    out.max_negative = *std::max_element(out.per_negative.begin(), out.per_negative.end());
    out.distance = out.positive - out.max_negative;
    return out;
}

inline NegativeDistance negative_distance(const Backends& b, const std::vector<GeneratedImage>& images,
                                          const std::string& positive_word, const std::vector<std::string>& negatives) {
    return negative_distance(b, embed_images(b, images), positive_word, negatives);
}

struct EvalRecord {
    std::string method = "conceptforge";
    std::string category;
    std::string concept_id;
    std::string negatives;  // '+'-joined, identifies the positive/negative combination
    double positive_similarity = 0.0;
    double max_negative_similarity = 0.0;
    double negative_distance = 0.0;
    std::size_t n_images = 0;

    bool operator==(const EvalRecord&) const = default;
};

struct EvalReport {
    std::vector<EvalRecord> records;
};

struct AggregateRow {
    std::string method;
    std::string category;
    double positive_similarity = 0.0;
    double negative_distance = 0.0;
    std::size_t n_records = 0;
    std::size_t n_images = 0;
};

inline EvalRecord score_images(const Backends& b, const std::vector<ImageEmbedding>& images, const std::string& method,
                               const std::string& category, const std::string& concept_id, const std::string& positive,
                               const std::vector<std::string>& negatives) {
    const auto nd = negative_distance(b, images, positive, negatives);
    EvalRecord r;
    r.method = method;
    r.category = category;
    r.concept_id = concept_id;
    for (const auto& n : negatives) r.negatives += (r.negatives.empty() ? "" : "+") + n;
    r.positive_similarity = nd.positive;
    r.max_negative_similarity = nd.max_negative;
    r.negative_distance = nd.distance;
    r.n_images = images.size();
    return r;
}

/// Per-(method, category) means of both metrics, in first-seen order.
inline std::vector<AggregateRow> aggregate(const EvalReport& report) {
    if (report.records.empty()) throw ConfigError("aggregate: empty report");
    std::vector<AggregateRow> rows;
    for (const auto& r : report.records) {
        auto it = std::find_if(rows.begin(), rows.end(),
                               [&](const auto& a) { return a.method == r.method && a.category == r.category; });
        if (it == rows.end()) {
            rows.push_back({r.method, r.category, 0.0, 0.0, 0, 0});
            it = rows.end() - 1;
        }
        it->positive_similarity += r.positive_similarity;
        it->negative_distance += r.negative_distance;
        ++it->n_records;
        it->n_images += r.n_images;
    }
    for (auto& a : rows) {
        a.positive_similarity /= static_cast<double>(a.n_records);
        a.negative_distance /= static_cast<double>(a.n_records);
    }
    return rows;
}

inline void write_report_csv(const std::filesystem::path& path, const EvalReport& report) {
    std::ofstream out(path);
    if (!out) throw StoreError("cannot write '" + path.string() + "'");
    out << "method,category,concept_id,negatives,positive_similarity,max_negative_similarity,negative_distance,n_images\n";
    out << std::setprecision(17);
    for (const auto& r : report.records)
        out << r.method << ',' << r.category << ',' << r.concept_id << ',' << r.negatives << ',' << r.positive_similarity
            << ',' << r.max_negative_similarity << ',' << r.negative_distance << ',' << r.n_images << '\n';
}

inline void write_aggregate_csv(const std::filesystem::path& path, const std::vector<AggregateRow>& rows) {
    std::ofstream out(path);
    if (!out) throw StoreError("cannot write '" + path.string() + "'");
    out << "method,category,positive_similarity,negative_distance,n_records,n_images\n";
    out << std::setprecision(17);
    for (const auto& a : rows)
        out << a.method << ',' << a.category << ',' << a.positive_similarity << ',' << a.negative_distance << ','
            << a.n_records << ',' << a.n_images << '\n';
}

/// Scatter plot of the aggregate table: x = positive similarity, y = negative distance, one colour per method.
inline GeneratedImage scatter_plot(const std::vector<AggregateRow>& rows, int width = 480, int height = 360) {
    GeneratedImage img;
    img.width = width;
    img.height = height;
    img.pixels.assign(static_cast<std::size_t>(width) * height * 3, 255);
    img.prompt = "scatter";
    if (rows.empty()) return img;

    double x0 = rows[0].positive_similarity, x1 = x0, y0 = rows[0].negative_distance, y1 = y0;
    for (const auto& r : rows) {
        x0 = std::min(x0, r.positive_similarity);
        x1 = std::max(x1, r.positive_similarity);
        y0 = std::min(y0, r.negative_distance);
        y1 = std::max(y1, r.negative_distance);
    }
    const double padx = std::max(0.05 * (x1 - x0), 1e-3), pady = std::max(0.05 * (y1 - y0), 1e-3);
    x0 -= padx, x1 += padx, y0 -= pady, y1 += pady;
    const int margin = 30;

    auto put = [&](int x, int y, const std::uint8_t* c) {
        if (x < 0 || y < 0 || x >= width || y >= height) return;
        std::copy(c, c + 3, img.at(x, y));
    };
    const std::uint8_t axis[3] = {40, 40, 40};
    for (int x = margin; x < width - margin / 2; ++x) put(x, height - margin, axis);
    for (int y = margin / 2; y <= height - margin; ++y) put(margin, y, axis);
    if (y0 < 0.0 && y1 > 0.0) {  // zero line for the distance axis
        const int yz = height - margin - static_cast<int>((0.0 - y0) / (y1 - y0) * (height - 1.5 * margin));
        const std::uint8_t grey[3] = {180, 180, 180};
        for (int x = margin + 1; x < width - margin / 2; x += 2) put(x, yz, grey);
    }

    static const std::uint8_t palette[][3] = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44}, {214, 39, 40}, {148, 103, 189}};
    std::map<std::string, std::size_t> method_colour;
    for (const auto& r : rows) method_colour.emplace(r.method, method_colour.size());
    for (const auto& r : rows) {
        const auto* c = palette[method_colour[r.method] % 5];
        const int cx = margin + static_cast<int>((r.positive_similarity - x0) / (x1 - x0) * (width - 1.5 * margin));
        const int cy = height - margin - static_cast<int>((r.negative_distance - y0) / (y1 - y0) * (height - 1.5 * margin));
        for (int dy = -4; dy <= 4; ++dy)
            for (int dx = -4; dx <= 4; ++dx)
                if (dx * dx + dy * dy <= 16) put(cx + dx, cy + dy, c);
    }
    return img;
}

// ---- the five-category protocol ----

struct CategoryGrid {
    std::string category;
    std::vector<std::pair<std::string, std::string>> negative_pairs;
};

struct ProtocolGrid {
    std::vector<CategoryGrid> categories;
    std::size_t seeds = 5;
    std::size_t images_per_concept = 32;
};

inline ProtocolGrid default_protocol_grid() {
    return {{{"pet", {{"cat", "dog"}, {"hamster", "rabbit"}, {"parrot", "goldfish"}}},
             {"plant", {{"cactus", "fern"}, {"rose", "tulip"}, {"bamboo", "orchid"}}},
             {"fruit", {{"apple", "banana"}, {"orange", "grape"}, {"strawberry", "pineapple"}}},
             {"furniture", {{"closet", "bed"}, {"chair", "table"}, {"sofa", "desk"}}},
             {"musical instrument", {{"guitar", "piano"}, {"violin", "drum"}, {"flute", "trumpet"}}}},
            5,
            32};
}

struct ProtocolResult {
    EvalReport concepts;      // one record per learned concept
    EvalReport combinations;  // one record per (category, negative pair), all seeds pooled
};

/// Trains one concept per (category, negative pair, seed), renders images for each, and scores them.
inline ProtocolResult run_protocol(const Backends& b, const ProtocolGrid& grid, const TrainingConfig& base,
                                   const PromptTemplateBank& bank = PromptTemplateBank(), std::size_t threads = 1) {
    struct Job {
        std::string category;
        std::vector<std::string> negatives;
        std::size_t seed_index;
    };
    std::vector<Job> jobs;
    for (const auto& cat : grid.categories)
        for (const auto& [n1, n2] : cat.negative_pairs)
            for (std::size_t s = 0; s < grid.seeds; ++s) jobs.push_back({cat.category, {n1, n2}, s});

    std::vector<std::vector<ImageEmbedding>> embeddings(jobs.size());
    std::vector<EvalRecord> records(jobs.size());
    parallel_for(jobs.size(), threads, [&](std::size_t i) {
        const auto& job = jobs[i];
        TrainingConfig c = base;
        c.seed = mix_seed(base.seed, job.seed_index);
        RunSpec spec;
        spec.category = job.category;
        spec.initial_negatives = job.negatives;
        spec.id = slugify(job.category) + "_" + job.negatives[0] + "_" + job.negatives[1] + "_s" + std::to_string(job.seed_index);
        const auto art = run(b, c, spec, bank);
        const auto images = render(b, art.token, std::string(kEvalTemplate), grid.images_per_concept, mix_seed(c.seed, 0xE7A1));
        embeddings[i] = embed_images(b, images);
        records[i] = score_images(b, embeddings[i], "conceptforge", job.category, spec.id, job.category, job.negatives);
    });

    ProtocolResult result;
    result.concepts.records = std::move(records);
    std::map<std::tuple<std::string, std::string, std::string>, std::vector<ImageEmbedding>> pooled;
    std::vector<std::tuple<std::string, std::string, std::string>> order;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        auto key = std::make_tuple(jobs[i].category, jobs[i].negatives[0], jobs[i].negatives[1]);
        if (!pooled.count(key)) order.push_back(key);
        auto& v = pooled[key];
        v.insert(v.end(), embeddings[i].begin(), embeddings[i].end());
    }
    for (const auto& key : order) {
        const auto& [cat, n1, n2] = key;
        result.combinations.records.push_back(
            score_images(b, pooled[key], "conceptforge", cat, cat + ":" + n1 + "+" + n2, cat, {n1, n2}));
    }
    return result;
}

} // namespace conceptforge
