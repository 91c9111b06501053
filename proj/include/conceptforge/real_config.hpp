#pragma once

#include <optional>
#include <string>

namespace conceptforge {

/// Where the real-model server lives and which checkpoints it should use.
struct RealConfig {
    std::string endpoint = "http://127.0.0.1:8765";
    std::string text_encoder = "openai/clip-vit-large-patch14";
    std::string prior = "kandinsky-community/kandinsky-2-1-prior";
    std::string decoder = "kandinsky-community/kandinsky-2-1";
    std::string image_encoder = "openai/clip-vit-large-patch14";
    std::string vqa = "Salesforce/blip2-flan-t5-xl";
    // Denoising steps / guidance per prior call; unset leaves the server default in charge.
    std::optional<int> prior_steps;
    std::optional<double> prior_guidance_scale;
    int image_width = 512;
    int image_height = 512;
    int timeout_seconds = 300;

    bool operator==(const RealConfig&) const = default;
};

} // namespace conceptforge
