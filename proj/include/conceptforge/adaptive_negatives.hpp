#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "conceptforge/backend.hpp"
#include "conceptforge/constraints.hpp"
#include "conceptforge/image_io.hpp"
#include "conceptforge/templates.hpp"

namespace conceptforge {

struct NegativeEntry {
    std::size_t step = 0;
    std::string word;
    std::string image_reference;

    bool operator==(const NegativeEntry&) const = default;
};

/// Negatives discovered during a run, in discovery order.
struct NegativeHistory {
    std::vector<NegativeEntry> entries;

    bool contains(const std::string& word) const {
        const auto w = normalize_word(word);
        return std::any_of(entries.begin(), entries.end(), [&](const auto& e) { return normalize_word(e.word) == w; });
    }

    std::vector<std::string> words() const {
        std::vector<std::string> out;
        for (const auto& e : entries) out.push_back(e.word);
        return out;
    }

    bool operator==(const NegativeHistory&) const = default;
};

struct AdaptiveOptions {
    std::string question_template{kDefaultQuestionTemplate};
    std::string render_template = "A photo of a {}";
    std::size_t max_negatives = 20;
    // When set, each segment image is written here as {step}_{slug(prompt)}.png.
    std::optional<std::filesystem::path> image_dir;

    bool operator==(const AdaptiveOptions&) const = default;
};

struct Proposal {
    std::optional<std::string> word;
    std::string prompt;
    std::optional<GeneratedImage> image;
    std::string note;  // why nothing was proposed, or a backend warning
};

/// Renders the current token, asks the VQA model which member of `category` it shows, and returns the
/// normalized answer. Empty answers, answers naming the category or a positive, and backend failures
/// yield no word.
inline Proposal propose_negative(const Backends& b, const ConceptToken& token, const std::string& category,
                                 std::uint64_t seed, const AdaptiveOptions& opt = {},
                                 const std::vector<std::string>& positives = {}) {
    Proposal p;
    p.prompt = render_prompt(opt.render_template, token.name);
    try {
        const auto text = b.text->encode_with_token(opt.render_template, token.embedding);
        const auto emb = prior_sample(b, text, seed);
        auto image = decode_image(b, emb, seed);
        image.prompt = p.prompt;
        const auto answer = vqa_query(*b.vqa, image, category, opt.question_template);
        p.image = std::move(image);
        if (answer.empty()) {
            p.note = "empty answer";
            return p;
        }
        const auto cat = normalize_word(category);
        if (answer == cat ||
            std::any_of(positives.begin(), positives.end(), [&](const auto& w) { return normalize_word(w) == answer; })) {
            p.note = "answer '" + answer + "' names the category itself";
            return p;
        }
        p.word = answer;
    } catch (const BackendError& e) {
        p.note = std::string("warning: segment skipped, backend failure: ") + e.what();
    }
    return p;
}

/// Adds `proposal` to both the history and the negatives if it is new and there is room.
inline bool update_constraints(NegativeHistory& history, ConstraintSet& constraints, const std::string& proposal,
                               std::size_t step, std::size_t max_negatives, std::string image_reference = {}) {
    const auto w = normalize_word(proposal);
    if (w.empty() || constraints.has_negative(w) || history.contains(w)) return false;
    if (constraints.negatives.size() >= max_negatives) return false;
    if (!history.entries.empty() && step < history.entries.back().step) return false;
    constraints.negatives.push_back(w);
    history.entries.push_back({step, w, std::move(image_reference)});
    return true;
}

/// Segment-boundary hook: propose, persist the segment image, update.
inline std::optional<std::string> adaptive_segment(const Backends& b, const ConceptToken& token,
                                                   const std::string& category, std::size_t step, std::uint64_t seed,
                                                   const AdaptiveOptions& opt, NegativeHistory& history,
                                                   ConstraintSet& constraints, std::string* note = nullptr) {
    auto p = propose_negative(b, token, category, seed, opt, constraints.positives);
    std::string reference = "segment:" + std::to_string(step);
    if (p.image && opt.image_dir) {
        std::filesystem::create_directories(*opt.image_dir);
        const auto file = std::to_string(step) + "_" + slugify(p.prompt) + ".png";
        write_png(*opt.image_dir / file, *p.image);
        reference = (opt.image_dir->filename() / file).generic_string();
    }
    if (note) *note = p.note;
    if (!p.word) return std::nullopt;
    if (!update_constraints(history, constraints, *p.word, step, opt.max_negatives, reference)) {
        if (note) *note = "proposal '" + *p.word + "' not added (duplicate or negative limit)";
        return std::nullopt;
    }
    return p.word;
}

} // namespace conceptforge
