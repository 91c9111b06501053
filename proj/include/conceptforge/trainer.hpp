#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "conceptforge/adaptive_negatives.hpp"
#include "conceptforge/backend.hpp"
#include "conceptforge/constraints.hpp"
#include "conceptforge/loss.hpp"
#include "conceptforge/templates.hpp"
#include "conceptforge/vec.hpp"

namespace conceptforge {

struct TrainingConfig {
    std::size_t total_steps = 1500;
    std::size_t segment_length = 250;  // steps between adaptive-negative queries
    double learning_rate = 1e-3;
    double lambda = 1.0;
    ClampBand clamp_band{};
    std::size_t n_template_samples = 8;
    std::size_t prior_samples = 1;
    std::uint64_t seed = 0;
    bool adaptive_negatives = true;
    std::size_t max_negatives = 20;
    double init_sigma = 0.02;
    std::size_t trace_every = 10;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;

    void validate() const {
        if (total_steps < 1) throw ConfigError("training.total_steps must be >= 1");
        if (segment_length < 1) throw ConfigError("training.segment_length must be >= 1");
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
            throw ConfigError("training.learning_rate must be finite and > 0");
        if (!(lambda >= 0.0)) throw ConfigError("training.lambda must be >= 0");
        clamp_band.validate();
        if (n_template_samples < 1) throw ConfigError("training.n_template_samples must be >= 1");
        if (prior_samples < 1) throw ConfigError("training.prior_samples must be >= 1");
        if (!(init_sigma >= 0.0)) throw ConfigError("training.init_sigma must be >= 0");
        if (trace_every < 1) throw ConfigError("training.trace_every must be >= 1");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
            throw ConfigError("training.beta1/beta2 must lie in [0, 1)");
        if (!(adam_epsilon > 0.0)) throw ConfigError("training.adam_epsilon must be > 0");
    }

    CreativeLossOptions loss_options() const {
        return {lambda, clamp_band, SamplingOptions{n_template_samples, prior_samples}};
    }
    SamplingOptions sampling() const { return {n_template_samples, prior_samples}; }
    std::size_t segment_count() const { return total_steps / segment_length; }

    bool operator==(const TrainingConfig&) const = default;
};

enum class Polarity { positive, negative };

struct TraceRecord {
    std::size_t step = 0;
    std::string constraint;
    Polarity polarity = Polarity::negative;
    double similarity = 0.0;  // clamped

    bool operator==(const TraceRecord&) const = default;
};

/// Clamped per-constraint similarities sampled at trace resolution.
struct SimilarityTrace {
    std::vector<TraceRecord> records;

    std::vector<std::pair<std::size_t, double>> series(const std::string& constraint) const {
        std::vector<std::pair<std::size_t, double>> out;
        for (const auto& r : records)
            if (r.constraint == constraint) out.emplace_back(r.step, r.similarity);
        return out;
    }

    bool operator==(const SimilarityTrace&) const = default;
};

struct ParentLink {
    std::string id;
    double weight = 1.0;
    bool operator==(const ParentLink&) const = default;
};

/// Everything a finished run leaves behind.
struct ConceptArtifact {
    std::string id;
    ConceptToken token;
    std::vector<std::string> positives;
    std::vector<std::string> initial_negatives;
    NegativeHistory history;
    std::vector<std::string> final_negatives;
    TrainingConfig config;
    std::vector<std::string> templates;
    SimilarityTrace trace;
    std::vector<double> losses;
    std::size_t queries = 0;
    std::vector<ParentLink> parents;  // set for mixed concepts
};

inline bool operator==(const ConceptArtifact& a, const ConceptArtifact& b) {
    return a.id == b.id && a.token.embedding == b.token.embedding && a.token.name == b.token.name &&
           a.token.category == b.token.category && a.positives == b.positives &&
           a.initial_negatives == b.initial_negatives && a.history == b.history &&
           a.final_negatives == b.final_negatives && a.config == b.config && a.templates == b.templates &&
           a.trace == b.trace && a.losses == b.losses && a.queries == b.queries && a.parents == b.parents;
}

/// Token initialized at the input-space embedding of `word`, plus isotropic Gaussian noise.
inline ConceptToken init_token(const Backends& b, const std::string& word, double sigma, std::uint64_t seed,
                               std::string name = "S_*") {
    const auto w = normalize_word(word);
    if (w.empty()) throw ConfigError("init_token: empty category word");
    if (const auto& vocab = b.descriptor.vocabulary; vocab && std::find(vocab->begin(), vocab->end(), w) == vocab->end())
        throw UnknownTokenError(w);
    ConceptToken t;
    t.embedding = b.text->token_embedding(w);
    t.name = std::move(name);
    t.category = w;
    if (sigma > 0.0) axpy(1.0, gaussian_vector(t.embedding.size(), mix_seed(seed, 0x1417), sigma), t.embedding);
    t.check_finite();
    return t;
}

/// Adam over a single vector.
struct AdamState {
    Vec m, v;
    std::size_t t = 0;

    void update(Vec& params, const Vec& grad, double lr, double beta1, double beta2, double eps) {
        if (m.empty()) {
            m.assign(params.size(), 0.0);
            v.assign(params.size(), 0.0);
        }
        ++t;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            if (lr != 0.0) params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    }
};

struct TrainerState {
    ConceptToken token;
    AdamState adam;
    std::size_t step = 0;
};

inline std::uint64_t step_seed(std::uint64_t run_seed, std::size_t step) { return mix_seed(run_seed, 0x57E9, step); }

namespace trainer_detail {

inline std::string snapshot(const TrainerState& s) {
    std::ostringstream os;
    os << "step " << s.step << ", token |v| = " << norm(s.token.embedding) << ", finite = " << all_finite(s.token.embedding);
    return os.str();
}

} // namespace trainer_detail

/// One Adam step on the creative loss. Returns the loss evaluated before the update.
inline CreativeLoss train_step(const Backends& b, TrainerState& state, const ConstraintSet& constraints,
                               const PromptTemplateBank& bank, const TrainingConfig& config,
                               ConstraintTextCache* cache = nullptr) {
    CreativeLoss loss;
    try {
        loss = creative_loss(b, state.token, constraints, bank, config.loss_options(), step_seed(config.seed, state.step),
                             true, cache);
    } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " [" + trainer_detail::snapshot(state) + "]");
    }
    state.adam.update(state.token.embedding, loss.gradient, config.learning_rate, config.beta1, config.beta2,
                      config.adam_epsilon);
    ++state.step;
    if (!all_finite(state.token.embedding))
        throw NumericError("token became non-finite [" + trainer_detail::snapshot(state) + "]");
    return loss;
}

/// Clamped similarity of every constraint, averaged over the whole template bank at a fixed probe seed.
inline void record_trace(const Backends& b, const ConceptToken& token, const ConstraintSet& constraints,
                         const PromptTemplateBank& bank, const TrainingConfig& config, std::size_t step,
                         SimilarityTrace& trace, ConstraintTextCache* cache = nullptr) {
    const auto samples = probe_token(b, token.embedding, bank, config.prior_samples, mix_seed(config.seed, 0x7ACE));
    const auto pos = constraint_similarities(*b.text, constraints.positives, samples, cache);
    for (std::size_t i = 0; i < pos.size(); ++i)
        trace.records.push_back({step, constraints.positives[i], Polarity::positive, clamp_similarity(pos[i], config.clamp_band)});
    if (constraints.negatives.empty()) return;
    const auto neg = constraint_similarities(*b.text, constraints.negatives, samples, cache);
    for (std::size_t i = 0; i < neg.size(); ++i)
        trace.records.push_back({step, constraints.negatives[i], Polarity::negative, clamp_similarity(neg[i], config.clamp_band)});
}

struct RunSpec {
    std::string category;
    std::vector<std::string> positives;          // defaults to {category}
    std::vector<std::string> initial_negatives;
    std::string token_name = "S_*";
    std::string id;
    AdaptiveOptions adaptive{};
    std::function<void(const std::string&)> log;  // optional progress/warning sink
};

/// Full segmented training run.
inline ConceptArtifact run(const Backends& b, const TrainingConfig& config, const RunSpec& spec,
                           const PromptTemplateBank& bank = PromptTemplateBank()) {
    config.validate();
    ConstraintSet constraints;
    constraints.positives = spec.positives.empty() ? std::vector<std::string>{normalize_word(spec.category)} : spec.positives;
    for (auto& p : constraints.positives) p = normalize_word(p);
    for (const auto& n : spec.initial_negatives)
        if (!constraints.add_negative(n)) throw ConfigError("duplicate initial negative '" + n + "'");

    ConceptArtifact art;
    art.id = spec.id;
    art.positives = constraints.positives;
    art.initial_negatives = constraints.negatives;
    art.config = config;
    art.templates = bank.templates();

    TrainerState state;
    state.token = init_token(b, spec.category, config.init_sigma, config.seed, spec.token_name);
    ConstraintTextCache cache;
    AdaptiveOptions adaptive = spec.adaptive;
    adaptive.max_negatives = config.max_negatives;

    // backend failures name the step they happened in
    auto at_step = [](std::size_t step, auto&& fn) {
        try {
            fn();
        } catch (const BackendError& e) {
            throw BackendError("step " + std::to_string(step) + ": " + e.what());
        }
    };
    at_step(0, [&] { record_trace(b, state.token, constraints, bank, config, 0, art.trace, &cache); });
    art.losses.reserve(config.total_steps);
    while (state.step < config.total_steps) {
        CreativeLoss loss;
        at_step(state.step + 1, [&] { loss = train_step(b, state, constraints, bank, config, &cache); });
        art.losses.push_back(loss.value);
        const std::size_t step = state.step;

        if (config.adaptive_negatives && step % config.segment_length == 0) {
            ++art.queries;
            std::string note;
            auto added = adaptive_segment(b, state.token, spec.category, step, mix_seed(config.seed, 0xADA, step),
                                          adaptive, art.history, constraints, &note);
            if (spec.log) {
                if (added) spec.log("step " + std::to_string(step) + ": new negative '" + *added + "'");
                else if (!note.empty()) spec.log("step " + std::to_string(step) + ": " + note);
            }
        }
        if (step % config.trace_every == 0 || step == config.total_steps)
            at_step(step, [&] { record_trace(b, state.token, constraints, bank, config, step, art.trace, &cache); });
    }
    art.token = state.token;
    art.final_negatives = constraints.negatives;
    return art;
}

} // namespace conceptforge
