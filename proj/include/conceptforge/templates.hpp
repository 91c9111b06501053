#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "conceptforge/error.hpp"

namespace conceptforge {

inline constexpr std::string_view kPlaceholder = "{}";

inline std::size_t count_placeholders(std::string_view text) {
    std::size_t n = 0;
    for (auto pos = text.find(kPlaceholder); pos != std::string_view::npos;
         pos = text.find(kPlaceholder, pos + kPlaceholder.size()))
        ++n;
    return n;
}

/// Substitutes `word` for the single "{}" in `tmpl`.
inline std::string render_prompt(std::string_view tmpl, std::string_view word) {
    const std::size_t n = count_placeholders(tmpl);
    if (n != 1)
        throw ConfigError("prompt template '" + std::string(tmpl) + "' must contain exactly one {} placeholder, found " +
                          std::to_string(n));
    const auto pos = tmpl.find(kPlaceholder);
    std::string out;
    out.reserve(tmpl.size() + word.size());
    out.append(tmpl.substr(0, pos));
    out.append(word);
    out.append(tmpl.substr(pos + kPlaceholder.size()));
    return out;
}

inline std::string trim(std::string_view s) {
    auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    auto b = std::find_if_not(s.begin(), s.end(), is_space);
    auto e = std::find_if_not(s.rbegin(), std::string_view::reverse_iterator(b), is_space).base();
    return std::string(b, e);
}

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

// Lowercased, trimmed, internal whitespace collapsed. Used for constraint words and VQA answers.
inline std::string normalize_word(std::string_view s) {
    std::string out;
    bool pending_space = false;
    for (unsigned char c : trim(s)) {
        if (std::isspace(c)) {
            pending_space = true;
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

// Filename-safe slug of a prompt: lowercase alphanumerics joined by '-'.
inline std::string slugify(std::string_view s, std::size_t max_len = 48) {
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c)) {
            out.push_back(static_cast<char>(std::tolower(c)));
        } else if (!out.empty() && out.back() != '_') {
            out.push_back('_');
        }
        if (out.size() >= max_len) break;
    }
    while (!out.empty() && out.back() == '_') out.pop_back();
    return out.empty() ? "prompt" : out;
}

inline const std::vector<std::string>& default_templates() {
    static const std::vector<std::string> bank = {
        "A photo of a {}",
        "An oil painting of {}",
        "A rendering of a {}",
        "A cropped photo of the {}",
        "A close-up photo of a {}",
        "A bright photo of a {}",
        "A good photo of a {}",
        "A painting of a {}",
        "A sketch of a {}",
        "A digital illustration of a {}",
        "A photo of the small {}",
        "A photo of a nice {}",
    };
    return bank;
}

/// A non-empty list of single-placeholder prompt templates plus the seed that drives sampling from it.
class PromptTemplateBank {
public:
    PromptTemplateBank() : PromptTemplateBank(default_templates()) {}

    explicit PromptTemplateBank(std::vector<std::string> templates, std::uint64_t sampling_seed = 0)
        : templates_(std::move(templates)), sampling_seed_(sampling_seed) {
        if (templates_.empty()) throw ConfigError("prompt template bank is empty");
        for (const auto& t : templates_)
            if (count_placeholders(t) != 1)
                throw ConfigError("prompt template '" + t + "' must contain exactly one {} placeholder");
    }

    static PromptTemplateBank from_file(const std::string& path, std::uint64_t sampling_seed = 0) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open template file '" + path + "'");
        std::vector<std::string> templates;
        for (std::string line; std::getline(in, line);) {
            auto t = trim(line);
            if (t.empty() || t.front() == '#') continue;
            templates.push_back(std::move(t));
        }
        return PromptTemplateBank(std::move(templates), sampling_seed);
    }

    const std::vector<std::string>& templates() const noexcept { return templates_; }
    std::size_t size() const noexcept { return templates_.size(); }
    const std::string& operator[](std::size_t i) const { return templates_.at(i); }
    std::uint64_t sampling_seed() const noexcept { return sampling_seed_; }

    // n template indices drawn uniformly with replacement.
    std::vector<std::size_t> sample(std::size_t n, std::uint64_t seed) const {
        std::mt19937_64 rng(seed ^ sampling_seed_);
        std::uniform_int_distribution<std::size_t> pick(0, templates_.size() - 1);
        std::vector<std::size_t> out(n);
        for (auto& i : out) i = pick(rng);
        return out;
    }

    bool operator==(const PromptTemplateBank&) const = default;

private:
    std::vector<std::string> templates_;
    std::uint64_t sampling_seed_ = 0;
};

} // namespace conceptforge
