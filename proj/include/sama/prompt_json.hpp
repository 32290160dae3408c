#pragma once

#include <filesystem>
#include <string>

#include "sama/backbone.hpp"

namespace sama {

struct PromptFormatError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// {"points": [[x, y, "fg"|"bg"], ...], "box": [x0, y0, x1, y1], "coarse_mask": "mask.png"}
// Every key is optional but at least one prompt must be present. A relative
// coarse-mask path is resolved against `base_dir`.
PromptSet parse_prompts(const std::string& text, const std::filesystem::path& base_dir = {});
PromptSet load_prompts(const std::filesystem::path& path);

// Writes points and box; a coarse mask is written as `coarse_mask_file` when given.
std::string prompts_to_json(const PromptSet& prompts, const std::string& coarse_mask_file = {});

}  // namespace sama
