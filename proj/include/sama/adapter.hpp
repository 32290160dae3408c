#pragma once

#include <array>
#include <optional>
#include <vector>

#include "sama/backbone.hpp"
#include "sama/mvle.hpp"
#include "sama/nn.hpp"

namespace sama {

inline constexpr std::size_t kSamaTokens = 2;  // row 0: segmentation, row 1: matting
inline constexpr std::size_t kSegTokenRow = 0;
inline constexpr std::size_t kMatteTokenRow = 1;
inline constexpr std::size_t kFixedTokens = kSamaTokens + 4 + 1;

/// Decoder token sequence: [sama(2), sam_mask(4), iou(1), prompt(N)].
/// Only the sama rows are trainable.
struct TokenBlock {
    Tensor sama;      // [2, D]
    Tensor sam_mask;  // [4, D]
    Tensor iou;       // [1, D]
    Tensor prompt;    // [N, D]; undefined when N == 0

    std::size_t prompt_count() const { return prompt.defined() ? prompt.dim(0) : 0; }
    std::size_t size() const { return kFixedTokens + prompt_count(); }
    Tensor sequence() const;  // [size(), D]
    // Per-row trainability flag in sequence order.
    std::vector<bool> trainable_rows() const;
};

TokenBlock assemble_tokens(const Tensor& sama_tokens, const SamTokens& sam, const Tensor& prompt_tokens);

struct AdapterOutput {
    Tensor fused;       // F''^P [C, h, w], stage-1 output at F_out's grid
    Tensor confidence;  // C_conf = sigmoid(conv1x1(F_out)) * F''^P
    Tensor out;         // F'_out = F_out + C_conf
    std::array<Tensor, kViews> carry;  // stage-2 output, one [C, h, w] map per view
};

// Optional capture of both attention stages.
struct AdapterProbe {
    AttentionProbe stage1, stage2;
    Tensor stage1_keys;  // the concatenated (F'^{P_m} + F_early_m) sequence, [4*h*w, D]
};

/// Localization adapter applied after each decoder layer.
///
/// Stage 1: queries are F_out positions, keys/values are the four local maps
/// (each plus its quadrant of F_early resized to the local grid), concatenated
/// over views. Stage 2 swaps roles: the stage-1 key/value sequence queries the
/// stage-1 output, producing the carry for the next round. The stage-1 output
/// is gated by sigmoid(conv1x1(F_out)) and added to F_out.
class LocalAdapter {
public:
    LocalAdapter(ParamStore& store, const std::string& prefix, std::size_t dim, std::size_t heads, Rng& rng);

    struct Attended {
        Tensor fused;
        std::array<Tensor, kViews> carry;
    };
    Attended attend_locals(const Tensor& f_out, const std::array<Tensor, kViews>& locals, const Tensor& early,
                           AdapterProbe* probe = nullptr) const;

    struct Fused {
        Tensor confidence, out;
    };
    Fused confidence_fuse(const Tensor& f_out, const Tensor& fused) const;

    AdapterOutput forward(const Tensor& f_out, const std::array<Tensor, kViews>& locals, const Tensor& early,
                          AdapterProbe* probe = nullptr) const;

    const Attention& stage1() const { return stage1_; }
    const Attention& stage2() const { return stage2_; }
    const Tensor& gate_weight() const { return gate_w_; }
    const Tensor& gate_bias() const { return gate_b_; }

private:
    std::size_t dim_;
    Attention stage1_, stage2_;
    Tensor gate_w_, gate_b_;  // [C, C, 1, 1], [C]
};

struct DecodeResult {
    Tensor tokens;    // [T, D]
    Tensor features;  // [C, h, w]
    std::vector<AdapterOutput> rounds;  // empty when adapters are bypassed
    std::vector<Tensor> decoder_features;  // F_out of each round, before fusion
};

inline constexpr std::size_t kDecodeRounds = 2;

/// Two rounds of (frozen decoder layer -> adapter). Round 2 takes round 1's
/// carry as its local input. With `adapters` empty this is the plain
/// two-layer decode.
DecodeResult decode(const TokenBlock& tokens, const Tensor& features, const Tensor& image_pe,
                    const std::array<const DecoderLayer*, kDecodeRounds>& layers,
                    const std::vector<const LocalAdapter*>& adapters,
                    const std::array<Tensor, kViews>& locals, const Tensor& early,
                    std::vector<AdapterProbe>* probes = nullptr);

}  // namespace sama
