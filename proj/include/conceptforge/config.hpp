#pragma once

// Run configuration: a JSON document with a fixed, nested schema. Missing keys take defaults,
// unknown keys are rejected, and every diagnostic names the offending key path.
//
// {
//   "category": "pet",                       required
//   "positives": ["pet"],                    default [category]
//   "negatives": ["cat", "dog"],
//   "token_name": "S_*",
//   "templates": ["A photo of a {}", ...],   or "templates_file": "bank.txt"
//   "training": { "total_steps": 1500, "segment_length": 250, "learning_rate": 0.001, "lambda": 1.0,
//                 "clamp": {"lo": 0.0, "hi": 0.5}, "n_template_samples": 8, "prior_samples": 1,
//                 "seed": 0, "adaptive_negatives": true, "max_negatives": 20, "init_sigma": 0.02,
//                 "trace_every": 10, "beta1": 0.9, "beta2": 0.999, "adam_epsilon": 1e-8 },
//   "adaptive": { "question_template": "What kind of {} is in this photo", "render_template": "A photo of a {}" },
//   "backend":  { "kind": "stub",
//                 "stub": { "dim": 128, "alpha": 0.25, "orthogonal": true, "hash_fallback": true,
//                           "prior_noise": 0.01, "prior_twist": 0.02, "seed": 7, "image_width": 64,
//                           "image_height": 64, "vocabulary": [...] | "vocabulary_file": "words.txt" },
//                 "real": { "endpoint": "...", "text_encoder": "...", "prior": "...", "decoder": "...",
//                           "image_encoder": "...", "vqa": "...", "prior_steps": 25, "prior_guidance_scale": 4.0,
//                           "image_width": 512, "image_height": 512, "timeout_seconds": 300 } },
//   "mix":      { "images_per_parent": 4 },
//   "render":   { "images": 32, "template": "A photo of a {}" }
// }

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "conceptforge/backend.hpp"
#include "conceptforge/error.hpp"
#include "conceptforge/real_config.hpp"
#include "conceptforge/stub_backend.hpp"
#include "conceptforge/templates.hpp"
#include "conceptforge/trainer.hpp"

namespace conceptforge {

using nlohmann::json;

struct BackendSelection {
    BackendKind kind = BackendKind::stub;
    StubConfig stub{};
    RealConfig real{};

    bool operator==(const BackendSelection&) const = default;
};

struct RenderSettings {
    std::size_t images = 32;
    std::string prompt_template = "A photo of a {}";
    bool operator==(const RenderSettings&) const = default;
};

struct RunConfig {
    std::string category;
    std::vector<std::string> positives;
    std::vector<std::string> negatives;
    std::string token_name = "S_*";
    std::vector<std::string> templates = default_templates();
    TrainingConfig training{};
    std::string question_template{kDefaultQuestionTemplate};
    std::string render_template = "A photo of a {}";
    BackendSelection backend{};
    std::size_t images_per_parent = 4;
    RenderSettings render{};

    PromptTemplateBank template_bank() const { return PromptTemplateBank(templates, training.seed); }

    bool operator==(const RunConfig&) const = default;
};

namespace config_detail {

class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
    }

    template <typename T>
    void opt(const std::string& key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(key_path(key) + ": wrong type (" + std::string(e.what()) + ")");
        }
    }

    template <typename T>
    void opt(const std::string& key, std::optional<T>& out) {
        seen_.insert(key);
        if (!j_.contains(key) || j_.at(key).is_null()) return;
        T v{};
        opt(key, v);
        out = v;
    }

    template <typename T>
    void req(const std::string& key, T& out) {
        if (!j_.contains(key)) throw ConfigError(key_path(key) + ": required key missing");
        opt(key, out);
    }

    const json* child(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw ConfigError(key_path(k) + ": unknown key");
    }

private:
    std::string where() const { return path_.empty() ? "<root>" : path_; }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

// Re-throws validation errors with the section path in front.
template <typename Fn>
void in_section(const std::string& path, Fn&& fn) {
    try {
        fn();
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        if (msg.rfind(path, 0) == 0) throw;
        throw ConfigError(path + ": " + msg);
    }
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

} // namespace config_detail

inline json to_json(const TrainingConfig& t) {
    return json{{"total_steps", t.total_steps},
                {"segment_length", t.segment_length},
                {"learning_rate", t.learning_rate},
                {"lambda", t.lambda},
                {"clamp", {{"lo", t.clamp_band.lo}, {"hi", t.clamp_band.hi}}},
                {"n_template_samples", t.n_template_samples},
                {"prior_samples", t.prior_samples},
                {"seed", t.seed},
                {"adaptive_negatives", t.adaptive_negatives},
                {"max_negatives", t.max_negatives},
                {"init_sigma", t.init_sigma},
                {"trace_every", t.trace_every},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"adam_epsilon", t.adam_epsilon}};
}

inline TrainingConfig training_from_json(const json& j, const std::string& path = "training") {
    TrainingConfig t;
    config_detail::Reader r(j, path);
    r.opt("total_steps", t.total_steps);
    r.opt("segment_length", t.segment_length);
    r.opt("learning_rate", t.learning_rate);
    r.opt("lambda", t.lambda);
    if (const json* c = r.child("clamp")) {
        config_detail::Reader cr(*c, path + ".clamp");
        cr.opt("lo", t.clamp_band.lo);
        cr.opt("hi", t.clamp_band.hi);
        cr.finish();
        config_detail::in_section(path + ".clamp", [&] { t.clamp_band.validate(); });
    }
    r.opt("n_template_samples", t.n_template_samples);
    r.opt("prior_samples", t.prior_samples);
    r.opt("seed", t.seed);
    r.opt("adaptive_negatives", t.adaptive_negatives);
    r.opt("max_negatives", t.max_negatives);
    r.opt("init_sigma", t.init_sigma);
    r.opt("trace_every", t.trace_every);
    r.opt("beta1", t.beta1);
    r.opt("beta2", t.beta2);
    r.opt("adam_epsilon", t.adam_epsilon);
    r.finish();
    t.validate();
    return t;
}

inline json to_json(const RunConfig& c) {
    const auto& s = c.backend.stub;
    const auto& rc = c.backend.real;
    json real{{"endpoint", rc.endpoint},
              {"text_encoder", rc.text_encoder},
              {"prior", rc.prior},
              {"decoder", rc.decoder},
              {"image_encoder", rc.image_encoder},
              {"vqa", rc.vqa},
              {"image_width", rc.image_width},
              {"image_height", rc.image_height},
              {"timeout_seconds", rc.timeout_seconds}};
    if (rc.prior_steps) real["prior_steps"] = *rc.prior_steps;
    if (rc.prior_guidance_scale) real["prior_guidance_scale"] = *rc.prior_guidance_scale;
    return json{
        {"category", c.category},
        {"positives", c.positives},
        {"negatives", c.negatives},
        {"token_name", c.token_name},
        {"templates", c.templates},
        {"training", to_json(c.training)},
        {"adaptive", {{"question_template", c.question_template}, {"render_template", c.render_template}}},
        {"backend",
         {{"kind", to_string(c.backend.kind)},
          {"stub",
           {{"dim", s.dim},
            {"alpha", s.alpha},
            {"orthogonal", s.orthogonal},
            {"hash_fallback", s.hash_fallback},
            {"prior_noise", s.prior_noise},
            {"prior_twist", s.prior_twist},
            {"seed", s.seed},
            {"image_width", s.image_width},
            {"image_height", s.image_height},
            {"vocabulary", s.vocabulary}}},
          {"real", real}}},
        {"mix", {{"images_per_parent", c.images_per_parent}}},
        {"render", {{"images", c.render.images}, {"template", c.render.prompt_template}}},
    };
}

/// Parses and validates a config document; relative file references resolve against `base_dir`.
inline RunConfig parse_config_json(const json& j, const std::filesystem::path& base_dir = ".") {
    using config_detail::Reader;
    RunConfig c;
    Reader r(j, "");
    r.req("category", c.category);
    c.category = normalize_word(c.category);
    if (c.category.empty()) throw ConfigError("category: must be non-empty");
    r.opt("positives", c.positives);
    r.opt("negatives", c.negatives);
    r.opt("token_name", c.token_name);

    std::optional<std::string> templates_file;
    r.opt("templates_file", templates_file);
    const bool has_templates = j.contains("templates");
    r.opt("templates", c.templates);
    if (templates_file) {
        if (has_templates) throw ConfigError("templates_file: conflicts with templates");
        c.templates = PromptTemplateBank::from_file(config_detail::resolve(base_dir, *templates_file).string()).templates();
    }
    config_detail::in_section("templates", [&] { PromptTemplateBank check(c.templates); });

    if (const json* t = r.child("training")) c.training = training_from_json(*t);

    if (const json* a = r.child("adaptive")) {
        Reader ar(*a, "adaptive");
        ar.opt("question_template", c.question_template);
        ar.opt("render_template", c.render_template);
        ar.finish();
        config_detail::in_section("adaptive.question_template", [&] { render_prompt(c.question_template, "x"); });
        config_detail::in_section("adaptive.render_template", [&] { render_prompt(c.render_template, "x"); });
    }

    if (const json* b = r.child("backend")) {
        Reader br(*b, "backend");
        std::string kind = "stub";
        br.opt("kind", kind);
        config_detail::in_section("backend.kind", [&] { c.backend.kind = parse_backend_kind(kind); });
        if (const json* s = br.child("stub")) {
            Reader sr(*s, "backend.stub");
            auto& st = c.backend.stub;
            sr.opt("dim", st.dim);
            sr.opt("alpha", st.alpha);
            sr.opt("orthogonal", st.orthogonal);
            sr.opt("hash_fallback", st.hash_fallback);
            sr.opt("prior_noise", st.prior_noise);
            sr.opt("prior_twist", st.prior_twist);
            sr.opt("seed", st.seed);
            sr.opt("image_width", st.image_width);
            sr.opt("image_height", st.image_height);
            std::optional<std::string> vocab_file;
            sr.opt("vocabulary_file", vocab_file);
            const bool has_vocab = s->contains("vocabulary");
            sr.opt("vocabulary", st.vocabulary);
            if (vocab_file) {
                if (has_vocab) throw ConfigError("backend.stub.vocabulary_file: conflicts with vocabulary");
                st.vocabulary = load_vocabulary_file(config_detail::resolve(base_dir, *vocab_file).string());
            }
            sr.finish();
            if (st.dim < 2) throw ConfigError("backend.stub.dim: must be >= 2");
            if (st.vocabulary.empty()) throw ConfigError("backend.stub.vocabulary: must be non-empty");
            if (st.image_width <= 0 || st.image_height <= 0) throw ConfigError("backend.stub.image_width/height: must be > 0");
            if (st.prior_noise < 0 || st.prior_twist < 0 || st.alpha < 0)
                throw ConfigError("backend.stub: alpha, prior_noise and prior_twist must be >= 0");
        }
        if (const json* rj = br.child("real")) {
            Reader rr(*rj, "backend.real");
            auto& rc = c.backend.real;
            rr.opt("endpoint", rc.endpoint);
            rr.opt("text_encoder", rc.text_encoder);
            rr.opt("prior", rc.prior);
            rr.opt("decoder", rc.decoder);
            rr.opt("image_encoder", rc.image_encoder);
            rr.opt("vqa", rc.vqa);
            rr.opt("prior_steps", rc.prior_steps);
            rr.opt("prior_guidance_scale", rc.prior_guidance_scale);
            rr.opt("image_width", rc.image_width);
            rr.opt("image_height", rc.image_height);
            rr.opt("timeout_seconds", rc.timeout_seconds);
            rr.finish();
            if (rc.endpoint.empty()) throw ConfigError("backend.real.endpoint: must be non-empty");
        }
        br.finish();
    }

    if (const json* m = r.child("mix")) {
        Reader mr(*m, "mix");
        mr.opt("images_per_parent", c.images_per_parent);
        mr.finish();
        if (c.images_per_parent < 1) throw ConfigError("mix.images_per_parent: must be >= 1");
    }
    if (const json* rd = r.child("render")) {
        Reader rr(*rd, "render");
        rr.opt("images", c.render.images);
        rr.opt("template", c.render.prompt_template);
        rr.finish();
        config_detail::in_section("render.template", [&] { render_prompt(c.render.prompt_template, "x"); });
    }
    r.finish();

    if (c.positives.empty()) c.positives = {c.category};
    for (auto& p : c.positives) p = normalize_word(p);
    ConstraintSet check;
    for (auto& n : c.negatives) {
        n = normalize_word(n);
        if (!check.add_negative(n)) throw ConfigError("negatives: duplicate or empty entry '" + n + "'");
    }
    return c;
}

inline RunConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return parse_config_json(j, path.parent_path());
}

inline std::string serialize_config(const RunConfig& c) { return to_json(c).dump(2); }

/// Applies CONCEPTFORGE_BACKEND=stub|real if set.
inline void apply_environment(RunConfig& c) {
    if (const char* kind = std::getenv("CONCEPTFORGE_BACKEND"); kind && *kind) {
        config_detail::in_section("CONCEPTFORGE_BACKEND", [&] { c.backend.kind = parse_backend_kind(kind); });
    }
}

/// Templates every stub must recognize for a config: the bank plus the fixed render/eval prompts.
inline std::vector<std::string> stub_templates_for(const RunConfig& c) {
    std::vector<std::string> out = c.templates;
    for (const auto& t : {c.render_template, c.render.prompt_template, std::string("A photo of a {}")})
        if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
    return out;
}

} // namespace conceptforge
