#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "conceptforge/error.hpp"
#include "conceptforge/templates.hpp"
#include "conceptforge/vec.hpp"

namespace conceptforge {

inline constexpr double kUnitNormTolerance = 1e-6;

/// Unit-norm output of the text encoder.
struct TextEmbedding {
    Vec values;
    std::string source_prompt;

    TextEmbedding() = default;
    TextEmbedding(std::span<const double> v, std::string prompt)
        : values(normalized(v)), source_prompt(std::move(prompt)) {}

    std::size_t dim() const noexcept { return values.size(); }
};

enum class Provenance { prior_sample, encoded_image };

/// Unit-norm vector in the image side of the joint space.
struct ImageEmbedding {
    Vec values;
    Provenance provenance = Provenance::prior_sample;

    ImageEmbedding() = default;
    ImageEmbedding(std::span<const double> v, Provenance p) : values(normalized(v)), provenance(p) {}

    std::size_t dim() const noexcept { return values.size(); }
};

/// 8-bit RGB raster, row-major, interleaved.
struct GeneratedImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;
    std::uint64_t seed = 0;
    std::string prompt;

    void validate() const {
        if (width <= 0 || height <= 0) throw BackendError("malformed raster: non-positive size");
        if (pixels.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3)
            throw BackendError("malformed raster: pixel buffer does not match " + std::to_string(width) + "x" +
                               std::to_string(height) + "x3");
    }

    std::uint8_t* at(int x, int y) { return &pixels[(static_cast<std::size_t>(y) * width + x) * 3]; }
    const std::uint8_t* at(int x, int y) const { return &pixels[(static_cast<std::size_t>(y) * width + x) * 3]; }
};

enum class BackendKind { real, stub };

inline std::string to_string(BackendKind k) { return k == BackendKind::real ? "real" : "stub"; }

inline BackendKind parse_backend_kind(const std::string& s) {
    if (s == "stub") return BackendKind::stub;
    if (s == "real") return BackendKind::real;
    throw ConfigError("backend.kind must be 'stub' or 'real', got '" + s + "'");
}

struct BackendDescriptor {
    std::string name;
    BackendKind kind = BackendKind::stub;
    std::size_t embedding_dim = 0;
    std::size_t token_dim = 0;
    std::optional<std::vector<std::string>> vocabulary;
};

// ---- model interfaces ----
// Implementations are immutable after construction; every method is const and thread-safe.

class TextEncoder {
public:
    virtual ~TextEncoder() = default;

    virtual std::size_t embedding_dim() const = 0;
    virtual std::size_t token_dim() const = 0;

    virtual TextEmbedding encode_text(const std::string& prompt) const = 0;

    // Encoding of render_prompt(tmpl, word). Adapters may override to skip re-parsing.
    virtual TextEmbedding encode_templated(const std::string& tmpl, const std::string& word) const {
        return encode_text(render_prompt(tmpl, word));
    }

    /// Input-space embedding of a known word; the starting point for a learnable token.
    virtual Vec token_embedding(const std::string& word) const = 0;

    /// Encodes `tmpl` with the learnable token in place of the placeholder.
    virtual TextEmbedding encode_with_token(const std::string& tmpl, std::span<const double> token) const = 0;

    /// Pulls `cotangent` (d loss / d text embedding) back to d loss / d token.
    virtual Vec encode_with_token_vjp(const std::string& tmpl, std::span<const double> token,
                                      std::span<const double> cotangent) const = 0;
};

class DiffusionPrior {
public:
    virtual ~DiffusionPrior() = default;
    virtual ImageEmbedding sample(const TextEmbedding& text, std::uint64_t seed) const = 0;
    virtual Vec sample_vjp(const TextEmbedding& text, std::uint64_t seed, std::span<const double> cotangent) const = 0;
};

class ImageDecoder {
public:
    virtual ~ImageDecoder() = default;
    virtual GeneratedImage decode(const ImageEmbedding& embedding, std::uint64_t seed) const = 0;
};

class ImageEncoder {
public:
    virtual ~ImageEncoder() = default;
    virtual ImageEmbedding encode(const GeneratedImage& image) const = 0;
};

class VqaModel {
public:
    virtual ~VqaModel() = default;
    /// Free-form answer; may be empty when the model has nothing to say.
    virtual std::string answer(const GeneratedImage& image, const std::string& question) const = 0;
};

/// The full set of pretrained models one run talks to.
struct Backends {
    BackendDescriptor descriptor;
    std::shared_ptr<const TextEncoder> text;
    std::shared_ptr<const DiffusionPrior> prior;
    std::shared_ptr<const ImageDecoder> decoder;
    std::shared_ptr<const ImageEncoder> image_encoder;
    std::shared_ptr<const VqaModel> vqa;

    std::size_t dim() const { return descriptor.embedding_dim; }
};

inline constexpr std::string_view kDefaultQuestionTemplate = "What kind of {} is in this photo";

inline std::string render_question(const std::string& category,
                                   std::string_view question_template = kDefaultQuestionTemplate) {
    if (normalize_word(category).empty()) throw ConfigError("vqa category must be non-empty");
    return render_prompt(question_template, category);
}

/// Asks the VQA model which member of `category` the image shows. Answer is lowercased and trimmed;
/// an empty string means "no usable answer".
inline std::string vqa_query(const VqaModel& vqa, const GeneratedImage& image, const std::string& category,
                             std::string_view question_template = kDefaultQuestionTemplate) {
    image.validate();
    return normalize_word(vqa.answer(image, render_question(category, question_template)));
}

// Convenience wrappers matching the pipeline vocabulary.

inline TextEmbedding encode_text(const Backends& b, const std::string& prompt) {
    if (trim(prompt).empty()) throw BackendError("encode_text: empty prompt");
    return b.text->encode_text(prompt);
}

inline ImageEmbedding prior_sample(const Backends& b, const TextEmbedding& e, std::uint64_t seed) {
    if (e.dim() != b.dim())
        throw DimensionError("prior_sample: embedding dimension " + std::to_string(e.dim()) + " != backend " +
                             std::to_string(b.dim()));
    return b.prior->sample(e, seed);
}

inline GeneratedImage decode_image(const Backends& b, const ImageEmbedding& e, std::uint64_t seed) {
    if (e.dim() != b.dim()) throw DimensionError("decode_image: embedding dimension mismatch");
    return b.decoder->decode(e, seed);
}

inline ImageEmbedding encode_image(const Backends& b, const GeneratedImage& image) {
    image.validate();
    return b.image_encoder->encode(image);
}

} // namespace conceptforge
