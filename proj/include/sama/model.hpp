#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "sama/adapter.hpp"
#include "sama/backbone.hpp"
#include "sama/heads.hpp"
#include "sama/mvle.hpp"
#include "sama/nn.hpp"

namespace sama {

struct ModelConfig {
    std::uint64_t seed = 0;
    std::size_t image_size = 64;
    std::size_t output_resolution = 64;
    EncoderConfig encoder;
    std::vector<std::size_t> receptive_fields{4, 8, 16};

    std::size_t feature_size() const { return image_size / kPatchStride; }
    void validate() const;
};

/// Frozen-encoder outputs for one image; computed once and reused.
struct EncodedImage {
    Tensor global;                      // F^I     [C, h, w]
    Tensor early;                       // F_early [C, h, w]
    std::array<Tensor, kViews> locals;  // F^{L_m} [C, h, w]
};

struct Prediction {
    Tensor seg;    // [B, 1, R, R]; undefined when not requested
    Tensor matte;  // [B, 1, R, R]
    std::vector<DecodeResult> decode;  // per sample
};

struct ForwardOptions {
    bool baseline = false;  // plain two-layer decode, no MVLE or adapters
    bool want_seg = true;
    bool want_matte = true;
    bool keep_decode = false;
    std::vector<std::vector<AdapterProbe>>* probes = nullptr;  // per sample
};

/// Frozen SAM stand-in (encoder, prompt encoder, SAM tokens, decoder layers)
/// plus the trainable MVLE, localization adapters, SAMA tokens and the two
/// prediction heads.
class SamaModel {
public:
    explicit SamaModel(const ModelConfig& cfg);
    SamaModel(const SamaModel&) = delete;
    SamaModel& operator=(const SamaModel&) = delete;

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }

    // image: [3, H, W] with H = W = image_size.
    EncodedImage encode(const Tensor& image) const;

    Prediction forward(const std::vector<const EncodedImage*>& images, const std::vector<const PromptSet*>& prompts,
                       const ForwardOptions& opts = {}) const;

    // Zeroes the stage-1 output projections so every adapter contributes nothing.
    void zero_adapters();

    const ImageEncoder& encoder() const { return *encoder_; }
    const PromptEncoder& prompt_encoder() const { return *prompt_; }
    const Mvle& mvle() const { return *mvle_; }
    const LocalAdapter& adapter(std::size_t r) const { return *adapters_[r]; }
    const PredictionHead& head(Task t) const { return t == Task::seg ? *seg_head_ : *matte_head_; }
    const Tensor& sama_tokens() const { return sama_tokens_; }

private:
    DecodeResult decode_one(const EncodedImage& enc, const PromptSet& prompts, bool baseline,
                            std::vector<AdapterProbe>* probes) const;

    ModelConfig cfg_;
    ParamStore store_;
    std::unique_ptr<ImageEncoder> encoder_;
    std::unique_ptr<PromptEncoder> prompt_;
    SamTokens sam_tokens_;
    std::array<std::unique_ptr<DecoderLayer>, kDecodeRounds> layers_;
    std::unique_ptr<Mvle> mvle_;
    std::array<std::unique_ptr<LocalAdapter>, kDecodeRounds> adapters_;
    Tensor sama_tokens_;
    std::unique_ptr<PredictionHead> seg_head_, matte_head_;
};

}  // namespace sama
