#pragma once

#include <cstdint>
#include <string>

#include "sama/backbone.hpp"

namespace sama::synth {

struct SynthSample {
    Tensor image;  // [3, H, W]
    Tensor alpha;  // [1, H, W]
    Tensor mask;   // [1, H, W], alpha >= 0.5
    Tensor fg, bg; // [3, H, W]
    std::uint64_t seed = 0;
};

// image = alpha * fg + (1 - alpha) * bg, alpha broadcast over channels.
Tensor composite(const Tensor& fg, const Tensor& bg, const Tensor& alpha);

// One to three feathered superellipses over textured fore- and background.
SynthSample generate_sample(std::uint64_t seed, std::size_t size);

struct PromptMode {
    enum class Kind { box, points, noisy_box, coarse_mask };
    Kind kind = Kind::box;
    std::size_t k = 1;

    // "box", "noisy_box", "coarse_mask", "points" or "points:<k>".
    static PromptMode parse(const std::string& text);
    std::string str() const;
};

inline constexpr double kBoxJitter = 0.10;
inline constexpr std::size_t kCoarseFactor = 8;

/// Prompts derived from a binary [1, H, W] mask. Empty masks are a
/// ContractError for the box and point modes.
PromptSet sample_prompts(const Tensor& mask, std::uint64_t seed, const PromptMode& mode);

// Tight bounding box in pixel coordinates; a zero-width side is widened by one pixel.
Box tight_box(const Tensor& mask);

}  // namespace sama::synth
