#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "conceptforge/backend.hpp"
#include "conceptforge/constraints.hpp"
#include "conceptforge/templates.hpp"

namespace conceptforge {

/// n images of `token` inside `prompt_template`, seeds seed, seed+1, ..., seed+n-1.
inline std::vector<GeneratedImage> render(const Backends& b, const ConceptToken& token,
                                          const std::string& prompt_template, std::size_t n, std::uint64_t seed) {
    const std::string prompt = render_prompt(prompt_template, token.name);
    std::vector<GeneratedImage> out;
    out.reserve(n);
    try {
        const auto text = b.text->encode_with_token(prompt_template, token.embedding);
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint64_t s = seed + i;
            auto img = decode_image(b, prior_sample(b, text, s), s);
            img.prompt = prompt;
            img.seed = s;
            out.push_back(std::move(img));
        }
    } catch (const BackendError& e) {
        throw BackendError("render '" + prompt + "': " + e.what());
    }
    return out;
}

inline std::string image_filename(std::uint64_t step_or_seed, const std::string& prompt) {
    return std::to_string(step_or_seed) + "_" + slugify(prompt) + ".png";
}

} // namespace conceptforge
