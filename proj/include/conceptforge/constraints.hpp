#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "conceptforge/backend.hpp"
#include "conceptforge/error.hpp"
#include "conceptforge/templates.hpp"
#include "conceptforge/vec.hpp"

namespace conceptforge {

/// Closed cosine-similarity interval; aggregate similarities are clamped into it.
struct ClampBand {
    double lo = 0.0;
    double hi = 0.5;

    void validate() const {
        if (!(lo >= -1.0 && hi <= 1.0 && lo < hi))
            throw ConfigError("clamp band must satisfy -1 <= lo < hi <= 1, got [" + std::to_string(lo) + ", " +
                              std::to_string(hi) + "]");
    }

    static ClampBand unclamped() { return {-1.0, 1.0}; }

    bool operator==(const ClampBand&) const = default;
};

inline double clamp_similarity(double s, const ClampBand& band) { return std::min(std::max(s, band.lo), band.hi); }

// d clamp / d s: 1 on the closed band, 0 outside it.
inline double clamp_similarity_grad(double s, const ClampBand& band) {
    return (s >= band.lo && s <= band.hi) ? 1.0 : 0.0;
}

/// The learnable concept: one input-space vector plus its placeholder name and category.
struct ConceptToken {
    Vec embedding;
    std::string name = "S_*";
    std::string category;

    void check_finite() const {
        if (!all_finite(embedding)) throw NumericError("concept token '" + name + "' has non-finite entries");
    }
};

struct ConstraintSet {
    std::vector<std::string> positives;
    std::vector<std::string> negatives;
    std::vector<ImageEmbedding> image_constraints;
    std::optional<std::vector<double>> image_weights;

    bool has_negative(const std::string& word) const {
        const auto w = normalize_word(word);
        return std::any_of(negatives.begin(), negatives.end(), [&](const auto& n) { return normalize_word(n) == w; });
    }

    /// Appends unless already present (case-insensitive). Returns whether it was added.
    bool add_negative(const std::string& word) {
        const auto w = normalize_word(word);
        if (w.empty() || has_negative(w)) return false;
        negatives.push_back(w);
        return true;
    }

    void validate() const {
        for (std::size_t i = 0; i < negatives.size(); ++i)
            for (std::size_t j = i + 1; j < negatives.size(); ++j)
                if (normalize_word(negatives[i]) == normalize_word(negatives[j]))
                    throw ConfigError("duplicate negative constraint '" + negatives[j] + "'");
        if (image_weights) validate_weights(*image_weights, image_constraints.size());
    }

    static void validate_weights(const std::vector<double>& w, std::size_t n) {
        if (w.size() != n)
            throw ConfigError("weights length " + std::to_string(w.size()) + " != constraints " + std::to_string(n));
        double sum = 0.0;
        for (double x : w) {
            if (!(x >= 0.0) || !std::isfinite(x)) throw ConfigError("weights must be finite and non-negative");
            sum += x;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("weights must sum to 1, got " + std::to_string(sum));
    }
};

} // namespace conceptforge
