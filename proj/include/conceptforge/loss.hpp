#pragma once

// Prior-constraint similarities and the two training objectives.
//
// A token is probed by sampling prompt templates; for each sampled template t the token prompt is
// encoded, passed through the diffusion prior, and compared (cosine) against the text embedding of
// every constraint word rendered into the *same* template. Constraint words never go through the
// prior. Template expectations are Monte-Carlo; constraint expectations are exact enumeration.
//
//   S_c      = mean over samples of <E(t, c), P(E(t, token))>
//   S_pos    = mean over positives of S_c
//   S_neg    = (mean + max) / 2 over negatives of S_c, or 0 with no negatives
//   creative = clamp(S_neg) + lambda * (1 - clamp(S_pos))
//   mix      = 1 - sum_i w_i * mean over samples of <c_i, P(E(t, token))>
//
// Gradients are assembled by hand: d/dp for each sample, then the prior and text-encoder VJPs.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "conceptforge/backend.hpp"
#include "conceptforge/constraints.hpp"
#include "conceptforge/templates.hpp"
#include "conceptforge/vec.hpp"

namespace conceptforge {

struct SamplingOptions {
    std::size_t n_samples = 8;      // template draws per evaluation
    std::size_t prior_samples = 1;  // prior draws per template draw

    bool operator==(const SamplingOptions&) const = default;
};

/// One realization of the token: template, its text embedding, and one prior output.
struct TokenSample {
    std::size_t template_index = 0;
    std::string template_text;
    TextEmbedding text;
    std::uint64_t prior_seed = 0;
    ImageEmbedding output;
    double weight = 0.0;
};

namespace loss_detail {

inline std::vector<TokenSample> realize(const Backends& b, std::span<const double> token, const PromptTemplateBank& bank,
                                        const std::vector<std::size_t>& template_indices, std::size_t prior_samples,
                                        std::uint64_t seed) {
    if (template_indices.empty() || prior_samples == 0) throw ConfigError("token sampling needs at least one sample");
    std::vector<TokenSample> out;
    out.reserve(template_indices.size() * prior_samples);
    const double w = 1.0 / static_cast<double>(template_indices.size() * prior_samples);
    for (std::size_t k = 0; k < template_indices.size(); ++k) {
        const auto& tmpl = bank[template_indices[k]];
        TextEmbedding text = b.text->encode_with_token(tmpl, token);
        for (std::size_t j = 0; j < prior_samples; ++j) {
            TokenSample s;
            s.template_index = template_indices[k];
            s.template_text = tmpl;
            s.text = text;
            s.prior_seed = mix_seed(seed, 0x5A, k, j);
            s.output = prior_sample(b, s.text, s.prior_seed);
            s.weight = w;
            out.push_back(std::move(s));
        }
    }
    return out;
}

} // namespace loss_detail

/// Monte-Carlo realization: n_samples templates drawn from the bank, prior_samples prior draws each.
inline std::vector<TokenSample> sample_token(const Backends& b, std::span<const double> token,
                                             const PromptTemplateBank& bank, const SamplingOptions& opt,
                                             std::uint64_t seed) {
    return loss_detail::realize(b, token, bank, bank.sample(opt.n_samples, seed), opt.prior_samples, seed);
}

/// Every template in the bank exactly once, prior seeded from `seed`. Used for traces and reports.
inline std::vector<TokenSample> probe_token(const Backends& b, std::span<const double> token,
                                            const PromptTemplateBank& bank, std::size_t prior_samples,
                                            std::uint64_t seed) {
    std::vector<std::size_t> all(bank.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return loss_detail::realize(b, token, bank, all, prior_samples, seed);
}

/// Memo of constraint text embeddings keyed by (template, word). Not thread-safe; one per run.
class ConstraintTextCache {
public:
    const TextEmbedding& get(const TextEncoder& enc, const std::string& tmpl, const std::string& word) {
        auto key = std::make_pair(tmpl, word);
        auto it = cache_.find(key);
        if (it == cache_.end()) it = cache_.emplace(std::move(key), enc.encode_templated(tmpl, word)).first;
        return it->second;
    }
    std::size_t size() const noexcept { return cache_.size(); }

private:
    std::map<std::pair<std::string, std::string>, TextEmbedding> cache_;
};

namespace loss_detail {

inline TextEmbedding constraint_text(const TextEncoder& enc, ConstraintTextCache* cache, const std::string& tmpl,
                                     const std::string& word) {
    return cache ? cache->get(enc, tmpl, word) : enc.encode_templated(tmpl, word);
}

} // namespace loss_detail

/// Template-averaged similarity of each constraint word to the realized token.
inline std::vector<double> constraint_similarities(const TextEncoder& enc, std::span<const std::string> words,
                                                   std::span<const TokenSample> samples,
                                                   ConstraintTextCache* cache = nullptr) {
    std::vector<double> sims(words.size(), 0.0);
    for (std::size_t c = 0; c < words.size(); ++c)
        for (const auto& s : samples)
            sims[c] += s.weight * dot(loss_detail::constraint_text(enc, cache, s.template_text, words[c]).values,
                                      s.output.values);
    return sims;
}

inline double mean_similarity(std::span<const double> per_constraint) {
    if (per_constraint.empty()) throw ConfigError("constraint similarity over an empty constraint list");
    return std::accumulate(per_constraint.begin(), per_constraint.end(), 0.0) / static_cast<double>(per_constraint.size());
}

inline double max_similarity(std::span<const double> per_constraint) {
    if (per_constraint.empty()) throw ConfigError("constraint similarity over an empty constraint list");
    return *std::max_element(per_constraint.begin(), per_constraint.end());
}

/// Expected similarity over constraints (exact) and templates (the given samples).
inline double mean_constraint_similarity(const TextEncoder& enc, std::span<const std::string> words,
                                         std::span<const TokenSample> samples) {
    if (words.empty()) throw ConfigError("mean_constraint_similarity: empty constraint list");
    return mean_similarity(constraint_similarities(enc, words, samples));
}

/// Largest per-constraint (template-averaged) similarity.
inline double max_constraint_similarity(const TextEncoder& enc, std::span<const std::string> words,
                                        std::span<const TokenSample> samples) {
    if (words.empty()) throw ConfigError("max_constraint_similarity: empty constraint list");
    return max_similarity(constraint_similarities(enc, words, samples));
}

/// Creative objective from aggregate similarities.
inline double creative_objective(double s_pos, std::optional<std::pair<double, double>> neg_mean_max, double lambda,
                                 const ClampBand& band) {
    const double neg = neg_mean_max ? clamp_similarity(0.5 * (neg_mean_max->first + neg_mean_max->second), band) : 0.0;
    return neg + lambda * (1.0 - clamp_similarity(s_pos, band));
}

struct CreativeLossOptions {
    double lambda = 1.0;
    ClampBand band{};
    SamplingOptions sampling{};
};

struct CreativeLoss {
    double value = 0.0;
    double s_pos = 0.0;          // unclamped mean positive similarity
    double s_neg_mean = 0.0;     // unclamped; 0 without negatives
    double s_neg_max = 0.0;
    double s_neg = 0.0;          // clamped (mean + max) / 2, 0 without negatives
    std::vector<double> positive_similarities;
    std::vector<double> negative_similarities;
    Vec gradient;                // d value / d token, empty unless requested
};

/// creative loss of `token` under `constraints`; with_gradient also pulls the gradient back to the token.
inline CreativeLoss creative_loss(const Backends& b, const ConceptToken& token, const ConstraintSet& constraints,
                                  const PromptTemplateBank& bank, const CreativeLossOptions& opt, std::uint64_t seed,
                                  bool with_gradient = true, ConstraintTextCache* cache = nullptr) {
    if (constraints.positives.empty()) throw ConfigError("creative_loss: positive constraints are empty");
    if (!(opt.lambda >= 0.0)) throw ConfigError("creative_loss: lambda must be >= 0");
    opt.band.validate();
    token.check_finite();

    const auto samples = sample_token(b, token.embedding, bank, opt.sampling, seed);
    const TextEncoder& enc = *b.text;

    CreativeLoss out;
    out.positive_similarities = constraint_similarities(enc, constraints.positives, samples, cache);
    out.s_pos = mean_similarity(out.positive_similarities);

    const bool has_neg = !constraints.negatives.empty();
    std::size_t argmax = 0;
    double neg_raw = 0.0;
    if (has_neg) {
        out.negative_similarities = constraint_similarities(enc, constraints.negatives, samples, cache);
        out.s_neg_mean = mean_similarity(out.negative_similarities);
        argmax = static_cast<std::size_t>(std::max_element(out.negative_similarities.begin(),
                                                           out.negative_similarities.end()) -
                                          out.negative_similarities.begin());
        out.s_neg_max = out.negative_similarities[argmax];
        neg_raw = 0.5 * (out.s_neg_mean + out.s_neg_max);
        out.s_neg = clamp_similarity(neg_raw, opt.band);
    }
    out.value = out.s_neg + opt.lambda * (1.0 - clamp_similarity(out.s_pos, opt.band));
    if (!std::isfinite(out.value)) throw NumericError("creative_loss: non-finite loss");
    if (!with_gradient) return out;

    // dL/dS_c for every constraint
    std::vector<std::pair<const std::string*, double>> coeffs;
    const double pos_scale = -opt.lambda * clamp_similarity_grad(out.s_pos, opt.band) /
                             static_cast<double>(constraints.positives.size());
    if (pos_scale != 0.0)
        for (const auto& w : constraints.positives) coeffs.emplace_back(&w, pos_scale);
    if (has_neg) {
        const double g = clamp_similarity_grad(neg_raw, opt.band);
        if (g != 0.0) {
            const double n = static_cast<double>(constraints.negatives.size());
            for (std::size_t c = 0; c < constraints.negatives.size(); ++c)
                coeffs.emplace_back(&constraints.negatives[c], g * (0.5 / n + (c == argmax ? 0.5 : 0.0)));
        }
    }

    out.gradient.assign(token.embedding.size(), 0.0);
    if (coeffs.empty()) return out;
    for (const auto& s : samples) {
        Vec dp(s.output.dim(), 0.0);
        for (const auto& [word, a] : coeffs)
            axpy(a * s.weight, loss_detail::constraint_text(enc, cache, s.template_text, *word).values, dp);
        const Vec de = b.prior->sample_vjp(s.text, s.prior_seed, dp);
        axpy(1.0, b.text->encode_with_token_vjp(s.template_text, token.embedding, de), out.gradient);
    }
    if (!all_finite(out.gradient)) throw NumericError("creative_loss: non-finite gradient");
    return out;
}

struct MixLoss {
    double value = 0.0;
    double mean_similarity = 0.0;  // weighted
    Vec gradient;
};

/// 1 - weighted mean cosine between the image constraints and the token's prior outputs.
inline MixLoss mix_loss(const Backends& b, const ConceptToken& token, std::span<const ImageEmbedding> image_constraints,
                        const std::optional<std::vector<double>>& weights, const PromptTemplateBank& bank,
                        const SamplingOptions& sampling, std::uint64_t seed, bool with_gradient = true) {
    if (image_constraints.empty()) throw ConfigError("mix_loss: image constraints are empty");
    std::vector<double> w;
    if (weights) {
        ConstraintSet::validate_weights(*weights, image_constraints.size());
        w = *weights;
    } else {
        w.assign(image_constraints.size(), 1.0 / static_cast<double>(image_constraints.size()));
    }
    token.check_finite();

    Vec target(image_constraints.front().dim(), 0.0);
    for (std::size_t i = 0; i < image_constraints.size(); ++i) axpy(w[i], image_constraints[i].values, target);

    const auto samples = sample_token(b, token.embedding, bank, sampling, seed);
    MixLoss out;
    for (const auto& s : samples) out.mean_similarity += s.weight * dot(target, s.output.values);
    out.value = 1.0 - out.mean_similarity;
    if (!std::isfinite(out.value)) throw NumericError("mix_loss: non-finite loss");
    if (!with_gradient) return out;

    out.gradient.assign(token.embedding.size(), 0.0);
    for (const auto& s : samples) {
        Vec dp(target.size());
        for (std::size_t i = 0; i < dp.size(); ++i) dp[i] = -s.weight * target[i];
        const Vec de = b.prior->sample_vjp(s.text, s.prior_seed, dp);
        axpy(1.0, b.text->encode_with_token_vjp(s.template_text, token.embedding, de), out.gradient);
    }
    if (!all_finite(out.gradient)) throw NumericError("mix_loss: non-finite gradient");
    return out;
}

} // namespace conceptforge
