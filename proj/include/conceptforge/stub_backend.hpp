#pragma once

// Deterministic toy stand-ins for the pretrained models.
//
// Geometry: every vocabulary phrase owns a seeded unit vector w (Gram-Schmidt orthogonalized together
// with the registered template vectors when `orthogonal` is set). A prompt that is a template t with
// filler words w1..wk encodes to normalize(alpha * t + sum(wi)); the identity template "{}" has t = 0.
// The learnable token enters as its direction v/|v|, so scaling the token changes nothing.
// The prior is a fixed seeded orthogonal map M (near identity, controlled by `prior_twist`) plus
// per-seed Gaussian noise: normalize(M e + sigma * xi_seed).
// The decoder writes the image embedding losslessly-enough into a tagged header row of the raster so
// the encoder can read it back; untagged rasters fall back to a seeded pooled-pixel projection.
// The VQA model answers with the vocabulary phrase nearest to the carried embedding, skipping
// phrases that appear in the question.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "conceptforge/backend.hpp"
#include "conceptforge/error.hpp"
#include "conceptforge/templates.hpp"
#include "conceptforge/vec.hpp"

namespace conceptforge {

inline const std::vector<std::string>& default_stub_vocabulary() {
    static const std::vector<std::string> words = {
        // broad categories
        "pet", "plant", "fruit", "furniture", "musical instrument", "animal", "creature", "art",
        // pets
        "cat", "dog", "hamster", "rabbit", "parrot", "guinea pig", "goldfish", "turtle", "lobster",
        // plants
        "cactus", "fern", "rose", "tulip", "bamboo", "orchid",
        // fruits
        "apple", "banana", "orange", "grape", "strawberry", "pineapple", "mango",
        // furniture
        "chair", "table", "bed", "closet", "sofa", "desk", "shelf",
        // instruments
        "guitar", "piano", "violin", "drum", "flute", "trumpet",
        // styles
        "painting", "oil painting", "colorful abstract", "black and white", "sculpture", "sketch",
    };
    return words;
}

struct StubConfig {
    std::size_t dim = 128;
    std::vector<std::string> vocabulary = default_stub_vocabulary();
    std::vector<std::string> templates = default_templates();
    double alpha = 0.25;
    bool orthogonal = true;
    bool hash_fallback = true;
    double prior_noise = 0.01;
    double prior_twist = 0.02;
    std::uint64_t seed = 7;
    int image_width = 64;
    int image_height = 64;

    bool operator==(const StubConfig&) const = default;
};

inline std::vector<std::string> load_vocabulary_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open vocabulary file '" + path + "'");
    std::vector<std::string> words;
    for (std::string line; std::getline(in, line);) {
        auto w = normalize_word(line);
        if (w.empty() || w.front() == '#') continue;
        if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(std::move(w));
    }
    if (words.empty()) throw ConfigError("vocabulary file '" + path + "' has no words");
    return words;
}

namespace detail {

// Lowercase alphanumeric word tokens ("guinea pig." -> {"guinea", "pig"}).
inline std::vector<std::string> word_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c) || c == '_' || c == '*' || c == '\'') {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

inline std::string join(const std::vector<std::string>& parts, std::size_t b, std::size_t e) {
    std::string s;
    for (std::size_t i = b; i < e; ++i) {
        if (i > b) s.push_back(' ');
        s += parts[i];
    }
    return s;
}

inline constexpr std::uint8_t kTagR = 'C';
inline constexpr std::uint8_t kTagG = 'F';
inline constexpr std::uint8_t kTagB = 1;
inline constexpr std::uint8_t kComponentMarker = 0xA5;

} // namespace detail

class StubBackend final : public TextEncoder,
                          public DiffusionPrior,
                          public ImageDecoder,
                          public ImageEncoder,
                          public VqaModel {
public:
    explicit StubBackend(StubConfig config) : config_(std::move(config)) {
        if (config_.dim < 2) throw ConfigError("backend.stub.dim must be >= 2");
        if (config_.alpha < 0.0) throw ConfigError("backend.stub.alpha must be >= 0");
        if (config_.prior_noise < 0.0) throw ConfigError("backend.stub.prior_noise must be >= 0");
        if (config_.prior_twist < 0.0) throw ConfigError("backend.stub.prior_twist must be >= 0");
        if (config_.image_width <= 0 || config_.image_height <= 0)
            throw ConfigError("backend.stub image size must be positive");
        if (static_cast<std::size_t>(config_.image_width) * config_.image_height < 4 + config_.dim + config_.image_width)
            throw ConfigError("backend.stub image too small to carry a " + std::to_string(config_.dim) +
                              "-dim embedding");
        build_vocabulary();
        build_prior();
        build_pixel_projection();
    }

    const StubConfig& config() const noexcept { return config_; }

    BackendDescriptor descriptor() const {
        return BackendDescriptor{"stub", BackendKind::stub, config_.dim, config_.dim, vocabulary_};
    }

    const std::vector<std::string>& vocabulary() const noexcept { return vocabulary_; }

    /// Unit vector of a vocabulary phrase; throws UnknownTokenError for anything else.
    const Vec& word_vector(const std::string& word) const {
        auto it = word_vectors_.find(normalize_word(word));
        if (it == word_vectors_.end()) throw UnknownTokenError(word);
        return it->second;
    }

    /// alpha-free template direction: zero for "{}", unit otherwise.
    Vec template_vector(const std::string& tmpl) const {
        const std::string key = template_key(tmpl);
        if (key == "{}") return Vec(config_.dim, 0.0);
        if (auto it = template_vectors_.find(key); it != template_vectors_.end()) return it->second;
        return random_unit_vector(config_.dim, mix_seed(config_.seed, 0x7E3, stable_hash(key)));
    }

    const SquareMatrix& prior_map() const noexcept { return prior_map_; }

    // ---- TextEncoder ----

    std::size_t embedding_dim() const override { return config_.dim; }
    std::size_t token_dim() const override { return config_.dim; }

    TextEmbedding encode_text(const std::string& prompt) const override {
        const std::string lower = to_lower(trim(prompt));
        if (lower.empty()) throw BackendError("encode_text: empty prompt");

        // Registered templates first, longest literal text wins.
        const std::string* best = nullptr;
        std::string filler;
        for (const auto& [key, vec] : template_vectors_) {
            const auto pos = key.find("{}");
            if (pos == std::string::npos || pos > lower.size()) continue;
            const std::string_view prefix(key.data(), pos);
            const std::string_view suffix(key.data() + pos + 2, key.size() - pos - 2);
            if (lower.size() <= prefix.size() + suffix.size()) continue;
            const std::string_view whole(lower);
            if (!whole.starts_with(prefix) || !whole.ends_with(suffix)) continue;
            if (best && best->size() >= key.size()) continue;
            best = &key;
            filler = lower.substr(prefix.size(), lower.size() - prefix.size() - suffix.size());
        }
        if (best) {
            Vec acc = template_vector(*best);
            for (double& x : acc) x *= config_.alpha;
            add_phrases(detail::word_tokens(filler), acc, /*frame_out=*/nullptr);
            return TextEmbedding(acc, prompt);
        }

        // No registered template: vocabulary phrases are fillers, everything else forms the frame.
        Vec acc(config_.dim, 0.0);
        std::string frame;
        add_phrases(detail::word_tokens(lower), acc, &frame);
        if (frame != "{}" && !frame.empty()) {
            const auto t = template_vector(frame);
            axpy(config_.alpha, t, acc);
        }
        return TextEmbedding(acc, prompt);
    }

    TextEmbedding encode_templated(const std::string& tmpl, const std::string& word) const override {
        if (count_placeholders(tmpl) != 1) throw ConfigError("template '" + tmpl + "' needs exactly one {}");
        Vec acc = template_vector(tmpl);
        for (double& x : acc) x *= config_.alpha;
        add_phrases(detail::word_tokens(word), acc, nullptr);
        return TextEmbedding(acc, render_prompt(tmpl, word));
    }

    Vec token_embedding(const std::string& word) const override {
        const auto tokens = detail::word_tokens(word);
        if (tokens.empty()) throw BackendError("token_embedding: empty word");
        Vec acc(config_.dim, 0.0);
        add_phrases(tokens, acc, nullptr);
        return acc;
    }

    TextEmbedding encode_with_token(const std::string& tmpl, std::span<const double> token) const override {
        return TextEmbedding(token_pre_normalization(tmpl, token), render_prompt(tmpl, "S_*"));
    }

    Vec encode_with_token_vjp(const std::string& tmpl, std::span<const double> token,
                              std::span<const double> cotangent) const override {
        check_dim(token.size(), "encode_with_token_vjp token");
        check_dim(cotangent.size(), "encode_with_token_vjp cotangent");
        // e = normalize(alpha t + normalize(token))
        const Vec u = token_pre_normalization(tmpl, token);
        const Vec g_dir = normalize_vjp(u, cotangent);
        return normalize_vjp(token, g_dir);
    }

    // ---- DiffusionPrior ----

    ImageEmbedding sample(const TextEmbedding& text, std::uint64_t seed) const override {
        return ImageEmbedding(prior_pre_normalization(text, seed), Provenance::prior_sample);
    }

    Vec sample_vjp(const TextEmbedding& text, std::uint64_t seed, std::span<const double> cotangent) const override {
        check_dim(cotangent.size(), "prior vjp cotangent");
        const Vec q = prior_pre_normalization(text, seed);
        return prior_map_.apply_transposed(normalize_vjp(q, cotangent));
    }

    // ---- ImageDecoder ----

    GeneratedImage decode(const ImageEmbedding& embedding, std::uint64_t seed) const override {
        check_dim(embedding.dim(), "decode_image");
        GeneratedImage img;
        img.width = config_.image_width;
        img.height = config_.image_height;
        img.seed = seed;
        img.pixels.assign(static_cast<std::size_t>(img.width) * img.height * 3, 0);
        paint(embedding.values, seed, img);
        write_tag(embedding.values, img);
        return img;
    }

    // ---- ImageEncoder ----

    ImageEmbedding encode(const GeneratedImage& image) const override {
        image.validate();
        if (auto carried = read_tag(image)) return ImageEmbedding(*carried, Provenance::encoded_image);
        return ImageEmbedding(project_pixels(image), Provenance::encoded_image);
    }

    // ---- VqaModel ----

    std::string answer(const GeneratedImage& image, const std::string& question) const override {
        const Vec emb = encode(image).values;
        const auto q_tokens = detail::word_tokens(question);
        std::string best;
        double best_score = -2.0;
        for (const auto& w : vocabulary_) {
            if (mentions(q_tokens, w)) continue;
            const double s = dot(word_vectors_.at(w), emb);
            if (s > best_score) {
                best_score = s;
                best = w;
            }
        }
        return best;
    }

private:
    static std::string template_key(const std::string& tmpl) { return to_lower(trim(tmpl)); }

    void check_dim(std::size_t n, const char* what) const {
        if (n != config_.dim)
            throw DimensionError(std::string(what) + ": dimension " + std::to_string(n) + " != " +
                                 std::to_string(config_.dim));
    }

    static bool mentions(const std::vector<std::string>& tokens, const std::string& phrase) {
        const auto p = detail::word_tokens(phrase);
        if (p.empty() || p.size() > tokens.size()) return false;
        for (std::size_t i = 0; i + p.size() <= tokens.size(); ++i)
            if (std::equal(p.begin(), p.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) return true;
        return false;
    }

    void build_vocabulary() {
        for (const auto& raw : config_.vocabulary) {
            auto w = normalize_word(raw);
            if (w.empty()) continue;
            if (std::find(vocabulary_.begin(), vocabulary_.end(), w) != vocabulary_.end()) continue;
            vocabulary_.push_back(w);
            max_phrase_tokens_ = std::max(max_phrase_tokens_, detail::word_tokens(w).size());
        }
        if (vocabulary_.empty()) throw ConfigError("backend.stub.vocabulary is empty");

        std::vector<std::string> tkeys;
        for (const auto& t : config_.templates) {
            if (count_placeholders(t) != 1) throw ConfigError("stub template '" + t + "' needs exactly one {}");
            auto key = template_key(t);
            if (key == "{}" || std::find(tkeys.begin(), tkeys.end(), key) != tkeys.end()) continue;
            tkeys.push_back(std::move(key));
        }

        std::vector<Vec> vecs;
        for (const auto& w : vocabulary_)
            vecs.push_back(random_unit_vector(config_.dim, mix_seed(config_.seed, 0x3D, stable_hash(w))));
        for (const auto& k : tkeys)
            vecs.push_back(random_unit_vector(config_.dim, mix_seed(config_.seed, 0x7E3, stable_hash(k))));
        if (config_.orthogonal) {
            if (vecs.size() > config_.dim)
                throw ConfigError("backend.stub.orthogonal needs dim >= vocabulary + templates (" +
                                  std::to_string(vecs.size()) + "), got " + std::to_string(config_.dim));
            orthonormalize(vecs);
        }
        for (std::size_t i = 0; i < vocabulary_.size(); ++i) word_vectors_.emplace(vocabulary_[i], vecs[i]);
        for (std::size_t i = 0; i < tkeys.size(); ++i)
            template_vectors_.emplace(tkeys[i], vecs[vocabulary_.size() + i]);
    }

    void build_prior() {
        const std::size_t d = config_.dim;
        std::vector<Vec> cols(d, Vec(d, 0.0));
        const Vec g = gaussian_vector(d * d, mix_seed(config_.seed, 0x9A1), config_.prior_twist);
        for (std::size_t c = 0; c < d; ++c) {
            for (std::size_t r = 0; r < d; ++r) cols[c][r] = g[c * d + r];
            cols[c][c] += 1.0;
        }
        orthonormalize(cols);
        prior_map_ = SquareMatrix(d);
        for (std::size_t c = 0; c < d; ++c)
            for (std::size_t r = 0; r < d; ++r) prior_map_(r, c) = cols[c][r];
    }

    void build_pixel_projection() {
        pixel_projection_ = gaussian_vector(config_.dim * kPoolFeatures, mix_seed(config_.seed, 0x51C));
    }

    // Greedy longest-match of vocabulary phrases over tokens, accumulating phrase vectors into acc.
    // Unmatched tokens become frame words when frame_out is set, otherwise fillers (hash fallback or error).
    void add_phrases(const std::vector<std::string>& tokens, Vec& acc, std::string* frame_out) const {
        std::vector<std::string> frame;
        bool last_was_slot = false;
        for (std::size_t i = 0; i < tokens.size();) {
            bool matched = false;
            for (std::size_t len = std::min(max_phrase_tokens_, tokens.size() - i); len >= 1; --len) {
                auto it = word_vectors_.find(detail::join(tokens, i, i + len));
                if (it == word_vectors_.end()) continue;
                axpy(1.0, it->second, acc);
                if (frame_out && !last_was_slot) frame.push_back("{}");
                last_was_slot = true;
                i += len;
                matched = true;
                break;
            }
            if (matched) continue;
            if (frame_out) {
                if (!config_.hash_fallback) throw UnknownTokenError(tokens[i]);
                frame.push_back(tokens[i]);
                last_was_slot = false;
            } else {
                if (!config_.hash_fallback) throw UnknownTokenError(tokens[i]);
                axpy(1.0, random_unit_vector(config_.dim, mix_seed(config_.seed, 0x3D, stable_hash(tokens[i]))), acc);
            }
            ++i;
        }
        if (frame_out) *frame_out = detail::join(frame, 0, frame.size());
    }

    Vec token_pre_normalization(const std::string& tmpl, std::span<const double> token) const {
        check_dim(token.size(), "encode_with_token");
        if (count_placeholders(tmpl) != 1) throw ConfigError("template '" + tmpl + "' needs exactly one {}");
        Vec u = normalized(token);
        axpy(config_.alpha, template_vector(tmpl), u);
        return u;
    }

    Vec prior_pre_normalization(const TextEmbedding& text, std::uint64_t seed) const {
        check_dim(text.dim(), "prior_sample");
        Vec q = prior_map_.apply(text.values);
        if (config_.prior_noise > 0.0)
            axpy(config_.prior_noise, gaussian_vector(config_.dim, mix_seed(config_.seed, 0x0F1, seed)), q);
        return q;
    }

    // ---- raster helpers ----

    static constexpr int kPoolGrid = 8;
    static constexpr std::size_t kPoolFeatures = kPoolGrid * kPoolGrid * 3;

    std::size_t tag_rows() const {
        return (4 + config_.dim + static_cast<std::size_t>(config_.image_width) - 1) / config_.image_width;
    }

    void paint(const Vec& e, std::uint64_t seed, GeneratedImage& img) const {
        // Base colour from three fixed projections, a couple of embedding-driven waves, and seeded grain.
        double rgb[3];
        for (int c = 0; c < 3; ++c) {
            const Vec dir = random_unit_vector(config_.dim, mix_seed(config_.seed, 0xC0, c));
            rgb[c] = 128.0 + 100.0 * std::tanh(3.0 * dot(dir, e));
        }
        const double fx = 1.0 + 4.0 * std::abs(e[0]) * std::sqrt(static_cast<double>(config_.dim));
        const double fy = 1.0 + 4.0 * std::abs(e[1]) * std::sqrt(static_cast<double>(config_.dim));
        std::mt19937_64 rng(mix_seed(config_.seed, 0xD3C, seed));
        std::uniform_int_distribution<int> grain(-6, 6);
        const double two_pi = 6.283185307179586;
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                const double u = static_cast<double>(x) / img.width;
                const double v = static_cast<double>(y) / img.height;
                const double wave = 40.0 * std::sin(two_pi * fx * u) * std::cos(two_pi * fy * v);
                auto* px = img.at(x, y);
                for (int c = 0; c < 3; ++c) {
                    const double val = rgb[c] + (c == 1 ? -wave : wave) + grain(rng);
                    px[c] = static_cast<std::uint8_t>(std::clamp(std::lround(val), 0L, 255L));
                }
            }
        }
    }

    void write_tag(const Vec& e, GeneratedImage& img) const {
        auto pixel = [&](std::size_t i) { return &img.pixels[i * 3]; };
        std::uint8_t* p = pixel(0);
        p[0] = detail::kTagR;
        p[1] = detail::kTagG;
        p[2] = detail::kTagB;
        p = pixel(1);
        p[0] = static_cast<std::uint8_t>(config_.dim >> 8);
        p[1] = static_cast<std::uint8_t>(config_.dim & 0xFF);
        p[2] = 0;
        for (std::size_t i = 0; i < config_.dim; ++i) {
            const double clamped = std::clamp(e[i], -1.0, 1.0);
            const auto q = static_cast<std::uint16_t>(std::lround((clamped + 1.0) * 0.5 * 65535.0));
            p = pixel(4 + i);
            p[0] = static_cast<std::uint8_t>(q >> 8);
            p[1] = static_cast<std::uint8_t>(q & 0xFF);
            p[2] = detail::kComponentMarker;
        }
        // pad the rest of the tag rows so the header reads as a clean band
        const std::size_t end = tag_rows() * img.width;
        for (std::size_t i = 4 + config_.dim; i < end; ++i) {
            p = pixel(i);
            p[0] = p[1] = p[2] = 0;
        }
        p = pixel(2);
        p[0] = p[1] = p[2] = 0;
        p = pixel(3);
        p[0] = p[1] = p[2] = 0;
    }

    std::optional<Vec> read_tag(const GeneratedImage& img) const {
        const std::size_t n_pixels = static_cast<std::size_t>(img.width) * img.height;
        if (n_pixels < 4) return std::nullopt;
        const auto* p = img.pixels.data();
        if (p[0] != detail::kTagR || p[1] != detail::kTagG || p[2] != detail::kTagB) return std::nullopt;
        const std::size_t d = (static_cast<std::size_t>(p[3]) << 8) | p[4];
        if (d != config_.dim)
            throw DimensionError("encode_image: tagged raster carries dimension " + std::to_string(d) + ", backend has " +
                                 std::to_string(config_.dim));
        if (n_pixels < 4 + d) throw BackendError("malformed raster: truncated embedding tag");
        Vec v(d);
        for (std::size_t i = 0; i < d; ++i) {
            const auto* q = &img.pixels[(4 + i) * 3];
            if (q[2] != detail::kComponentMarker) throw BackendError("malformed raster: corrupt embedding tag");
            const double u = static_cast<double>((static_cast<unsigned>(q[0]) << 8) | q[1]) / 65535.0;
            v[i] = 2.0 * u - 1.0;
        }
        return v;
    }

    Vec project_pixels(const GeneratedImage& img) const {
        Vec pooled(kPoolFeatures, 0.0);
        std::vector<int> counts(kPoolGrid * kPoolGrid, 0);
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                const int cell = (y * kPoolGrid / img.height) * kPoolGrid + (x * kPoolGrid / img.width);
                const auto* px = img.at(x, y);
                for (int c = 0; c < 3; ++c) pooled[cell * 3 + c] += px[c] / 255.0 - 0.5;
                ++counts[cell];
            }
        }
        for (std::size_t i = 0; i < pooled.size(); ++i) {
            const int n = counts[i / 3];
            if (n > 0) pooled[i] /= n;
        }
        Vec out(config_.dim, 0.0);
        for (std::size_t r = 0; r < config_.dim; ++r)
            for (std::size_t c = 0; c < kPoolFeatures; ++c) out[r] += pixel_projection_[r * kPoolFeatures + c] * pooled[c];
        // a perfectly uniform mid-grey image would project to zero
        if (norm(out) < 1e-12) out[0] = 1.0;
        return out;
    }

    StubConfig config_;
    std::vector<std::string> vocabulary_;
    std::size_t max_phrase_tokens_ = 1;
    std::unordered_map<std::string, Vec> word_vectors_;
    std::map<std::string, Vec> template_vectors_;
    SquareMatrix prior_map_;
    Vec pixel_projection_;
};

/// Wires one StubBackend into every model slot.
inline Backends make_stub_backends(StubConfig config = {}) {
    auto stub = std::make_shared<const StubBackend>(std::move(config));
    Backends b;
    b.descriptor = stub->descriptor();
    b.text = stub;
    b.prior = stub;
    b.decoder = stub;
    b.image_encoder = stub;
    b.vqa = stub;
    return b;
}

inline std::shared_ptr<const StubBackend> stub_of(const Backends& b) {
    return std::dynamic_pointer_cast<const StubBackend>(b.text);
}

} // namespace conceptforge
