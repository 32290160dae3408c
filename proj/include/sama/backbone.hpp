#pragma once

#include <array>
#include <optional>
#include <utility>
#include <vector>

#include "sama/nn.hpp"
#include "sama/tensor.hpp"

namespace sama {

inline constexpr std::size_t kPatchStride = 16;

struct EncoderConfig {
    std::size_t embed_dim = 32;
    std::size_t depth = 2;
    std::size_t heads = 4;
    std::size_t early_block = 1;  // F_early is tapped after this block (1-based)
    std::size_t mlp_ratio = 2;

    void validate() const;
};

struct BackboneFeatures {
    Tensor global;  // F^I     [B, C, H/16, W/16]
    Tensor early;   // F_early [B, C, H/16, W/16]
};

enum class PointLabel { foreground, background };

struct PromptPoint {
    double x, y;  // pixel coordinates
    PointLabel label;
};

struct Box {
    double x0, y0, x1, y1;
};

struct PromptSet {
    std::vector<PromptPoint> points;
    std::optional<Box> box;
    std::optional<Tensor> coarse_mask;  // [1, H, W] in [0, 1]

    bool empty() const { return points.empty() && !box && !coarse_mask; }
    std::size_t token_count() const { return points.size() + (box ? 2 : 0); }
    // Throws ValidationError when coordinates leave the image or the box is inverted.
    void validate(std::size_t height, std::size_t width) const;
};

/// Random Fourier positional encoding: [sin(2 pi c G), cos(2 pi c G)] with
/// c in [-1, 1]^2 and G a frozen [2, D/2] Gaussian matrix.
struct FourierEncoding {
    Tensor gaussian;  // [2, D/2]

    static FourierEncoding make(ParamStore& store, const std::string& prefix, std::size_t dim, Rng& rng);
    // coords: normalized (x, y) pairs in [0, 1]. Returns [N, D].
    Tensor encode(const std::vector<std::pair<double, double>>& coords) const;
    // Cell-centre encoding of an h x w grid, [h*w, D] in row-major order.
    Tensor grid(std::size_t h, std::size_t w) const;
};

/// Frozen ViT-style stand-in for the pretrained image encoder.
class ImageEncoder {
public:
    ImageEncoder(ParamStore& store, const EncoderConfig& cfg, Rng& rng);

    // img: [B, 3, H, W], H and W divisible by 16. Runs with recording disabled.
    BackboneFeatures encode(const Tensor& img) const;
    const EncoderConfig& config() const { return cfg_; }

private:
    struct Block {
        LayerNormParams ln1, ln2;
        Attention attn;
        Linear fc1, fc2;
    };
    Tensor encode_one(const Tensor& img, std::size_t b, Tensor* early) const;

    EncoderConfig cfg_;
    Linear patch_embed_;
    FourierEncoding pos_;
    std::vector<Block> blocks_;
};

struct PromptEncoding {
    Tensor tokens;  // [N_prompt, D]; undefined when N_prompt == 0
    Tensor dense;   // [D, H/16, W/16]; exactly zero without a coarse mask
};

/// Frozen prompt encoder: one token per point, two corner tokens per box, and a
/// stride-16 patch projection for the coarse mask.
class PromptEncoder {
public:
    PromptEncoder(ParamStore& store, std::size_t dim, Rng& rng);

    PromptEncoding encode(const PromptSet& prompts, std::size_t height, std::size_t width) const;
    const FourierEncoding& positional() const { return pe_; }

private:
    std::size_t dim_;
    FourierEncoding pe_;
    Tensor fg_embed_, bg_embed_, box_tl_embed_, box_br_embed_;
    Linear mask_patch_;
};

/// Frozen two-way transformer layer (pre-norm residual form):
/// token self-attention, token-to-image cross-attention, token MLP, then
/// image-to-token cross-attention updating the image features.
class DecoderLayer {
public:
    DecoderLayer(ParamStore& store, const std::string& prefix, std::size_t dim, std::size_t heads, Rng& rng);

    struct Output {
        Tensor tokens;    // [T, D]
        Tensor features;  // [C, h, w]
    };
    // tokens: [T, D]; features: [C, h, w] with C == D; image_pe: [h*w, D].
    Output forward(const Tensor& tokens, const Tensor& features, const Tensor& image_pe) const;

private:
    std::size_t dim_;
    LayerNormParams ln_self_, ln_cross_, ln_mlp_, ln_image_;
    Attention self_attn_, token_to_image_, image_to_token_;
    Linear fc1_, fc2_;
};

// Frozen SAM output tokens carried alongside the trainable ones.
struct SamTokens {
    Tensor mask;  // [4, D]
    Tensor iou;   // [1, D]

    static SamTokens make(ParamStore& store, std::size_t dim, Rng& rng);
};

// Parameter-name prefixes that make up the frozen stand-in.
inline constexpr std::array<const char*, 4> kFrozenPrefixes{"backbone.", "prompt.", "sam_tokens.", "decoder."};

}  // namespace sama
