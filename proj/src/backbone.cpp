#include "sama/backbone.hpp"

#include <cmath>
#include <string>

#include "sama/ops.hpp"

namespace sama {

namespace {

constexpr double kTwoPi = 6.283185307179586;

// Rearranges [C, H, W] (channel-plane of a batch tensor) into [S, C*16*16] patches.
Tensor patchify(std::span<const double> img, std::size_t channels, std::size_t h, std::size_t w) {
    const std::size_t ph = h / kPatchStride, pw = w / kPatchStride;
    const std::size_t patch = channels * kPatchStride * kPatchStride;
    std::vector<double> out(ph * pw * patch);
    for (std::size_t py = 0; py < ph; ++py)
        for (std::size_t px = 0; px < pw; ++px) {
            double* dst = out.data() + (py * pw + px) * patch;
            for (std::size_t c = 0; c < channels; ++c)
                for (std::size_t dy = 0; dy < kPatchStride; ++dy)
                    for (std::size_t dx = 0; dx < kPatchStride; ++dx)
                        *dst++ = img[(c * h + py * kPatchStride + dy) * w + px * kPatchStride + dx];
        }
    return Tensor({ph * pw, patch}, std::move(out));
}

}  // namespace

void EncoderConfig::validate() const {
    if (embed_dim == 0 || heads == 0 || embed_dim % heads != 0)
        throw ConfigError("embed_dim " + std::to_string(embed_dim) + " must be divisible by heads " +
                          std::to_string(heads));
    if (embed_dim % 2 != 0) throw ConfigError("embed_dim must be even for the positional encoding");
    if (depth == 0) throw ConfigError("encoder depth must be >= 1");
    if (early_block == 0 || early_block > depth)
        throw ConfigError("early_block must lie in [1, depth]");
}

void PromptSet::validate(std::size_t height, std::size_t width) const {
    const double xmax = static_cast<double>(width) - 1.0;
    const double ymax = static_cast<double>(height) - 1.0;
    auto inside = [&](double x, double y) { return x >= 0.0 && y >= 0.0 && x <= xmax && y <= ymax; };
    for (const auto& p : points)
        if (!inside(p.x, p.y))
            throw ValidationError("point (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                                  ") outside the image");
    if (box) {
        if (!inside(box->x0, box->y0) || !inside(box->x1, box->y1))
            throw ValidationError("box corner outside the image");
        if (!(box->x0 < box->x1) || !(box->y0 < box->y1)) throw ValidationError("box must satisfy x0<x1 and y0<y1");
    }
    if (coarse_mask) {
        const auto& s = coarse_mask->shape();
        if (s.size() != 3 || s[0] != 1 || s[1] != height || s[2] != width)
            throw ValidationError("coarse mask must be [1, H, W] matching the image, got " + shape_str(s));
    }
}

// ---------------------------------------------------------------------------

FourierEncoding FourierEncoding::make(ParamStore& store, const std::string& prefix, std::size_t dim, Rng& rng) {
    std::vector<double> g(dim);
    for (auto& v : g) v = rng.normal();
    FourierEncoding fe;
    fe.gaussian = store.add(prefix + ".gaussian", Tensor({2, dim / 2}, std::move(g)), false);
    return fe;
}

Tensor FourierEncoding::encode(const std::vector<std::pair<double, double>>& coords) const {
    const std::size_t half = gaussian.dim(1);
    auto g = gaussian.data();
    std::vector<double> out(coords.size() * 2 * half);
    for (std::size_t i = 0; i < coords.size(); ++i) {
        const double cx = 2.0 * coords[i].first - 1.0;
        const double cy = 2.0 * coords[i].second - 1.0;
        for (std::size_t j = 0; j < half; ++j) {
            const double a = kTwoPi * (cx * g[j] + cy * g[half + j]);
            out[i * 2 * half + j] = std::sin(a);
            out[i * 2 * half + half + j] = std::cos(a);
        }
    }
    return Tensor({coords.size(), 2 * half}, std::move(out));
}

Tensor FourierEncoding::grid(std::size_t h, std::size_t w) const {
    std::vector<std::pair<double, double>> coords;
    coords.reserve(h * w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            coords.emplace_back((static_cast<double>(x) + 0.5) / static_cast<double>(w),
                                (static_cast<double>(y) + 0.5) / static_cast<double>(h));
    return encode(coords);
}

// ---------------------------------------------------------------------------

ImageEncoder::ImageEncoder(ParamStore& store, const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    const std::size_t d = cfg.embed_dim;
    const std::size_t patch = 3 * kPatchStride * kPatchStride;
    patch_embed_ = Linear::make(store, "backbone.patch_embed", patch, d, false, rng);
    pos_ = FourierEncoding::make(store, "backbone.pos", d, rng);
    for (std::size_t i = 0; i < cfg.depth; ++i) {
        const std::string p = "backbone.block" + std::to_string(i + 1);
        Block b;
        b.ln1 = LayerNormParams::make(store, p + ".ln1", d, false);
        b.attn = Attention::make(store, p + ".attn", d, cfg.heads, false, rng);
        b.ln2 = LayerNormParams::make(store, p + ".ln2", d, false);
        b.fc1 = Linear::make(store, p + ".fc1", d, cfg.mlp_ratio * d, false, rng);
        b.fc2 = Linear::make(store, p + ".fc2", cfg.mlp_ratio * d, d, false, rng);
        blocks_.push_back(std::move(b));
    }
}

Tensor ImageEncoder::encode_one(const Tensor& img, std::size_t b, Tensor* early) const {
    const std::size_t h = img.dim(2), w = img.dim(3);
    const std::size_t plane = 3 * h * w;
    const std::size_t gh = h / kPatchStride, gw = w / kPatchStride;
    Tensor x = patch_embed_(patchify(img.data().subspan(b * plane, plane), 3, h, w)) + pos_.grid(gh, gw);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const auto& blk = blocks_[i];
        const Tensor n1 = blk.ln1(x);
        x = x + attend(blk.attn, n1, n1, n1);
        x = x + blk.fc2(gelu(blk.fc1(blk.ln2(x))));
        if (i + 1 == cfg_.early_block) *early = tokens_to_map(x, gh, gw);
    }
    return tokens_to_map(x, gh, gw);
}

BackboneFeatures ImageEncoder::encode(const Tensor& img) const {
    if (img.ndim() != 4 || img.dim(1) != 3)
        throw ShapeError("encode_image expects [B, 3, H, W], got " + shape_str(img.shape()));
    if (img.dim(2) % kPatchStride != 0 || img.dim(3) % kPatchStride != 0)
        throw ShapeError("image dims " + shape_str(img.shape()) + " not divisible by 16");
    NoGradGuard frozen;
    std::vector<Tensor> globals, earlies;
    for (std::size_t b = 0; b < img.dim(0); ++b) {
        Tensor early;
        globals.push_back(encode_one(img, b, &early));
        earlies.push_back(early);
    }
    return {stack(globals), stack(earlies)};
}

// ---------------------------------------------------------------------------

PromptEncoder::PromptEncoder(ParamStore& store, std::size_t dim, Rng& rng) : dim_(dim) {
    pe_ = FourierEncoding::make(store, "prompt.pe", dim, rng);
    fg_embed_ = store.add("prompt.point_fg", init_normal(rng, {dim}, 1), false);
    bg_embed_ = store.add("prompt.point_bg", init_normal(rng, {dim}, 1), false);
    box_tl_embed_ = store.add("prompt.box_tl", init_normal(rng, {dim}, 1), false);
    box_br_embed_ = store.add("prompt.box_br", init_normal(rng, {dim}, 1), false);
    mask_patch_ = Linear::make(store, "prompt.mask_patch", kPatchStride * kPatchStride, dim, false, rng);
}

PromptEncoding PromptEncoder::encode(const PromptSet& prompts, std::size_t height, std::size_t width) const {
    if (prompts.empty()) throw ContractError("prompt set is empty");
    prompts.validate(height, width);
    const std::size_t gh = height / kPatchStride, gw = width / kPatchStride;
    auto norm = [&](double x, double y) {
        return std::pair{(x + 0.5) / static_cast<double>(width), (y + 0.5) / static_cast<double>(height)};
    };

    PromptEncoding out;
    std::vector<std::pair<double, double>> coords;
    std::vector<const Tensor*> embeds;
    for (const auto& p : prompts.points) {
        coords.push_back(norm(p.x, p.y));
        embeds.push_back(p.label == PointLabel::foreground ? &fg_embed_ : &bg_embed_);
    }
    if (prompts.box) {
        coords.push_back(norm(prompts.box->x0, prompts.box->y0));
        embeds.push_back(&box_tl_embed_);
        coords.push_back(norm(prompts.box->x1, prompts.box->y1));
        embeds.push_back(&box_br_embed_);
    }
    if (!coords.empty()) {
        const Tensor pe = pe_.encode(coords);
        std::vector<double> tok(pe.data().begin(), pe.data().end());
        for (std::size_t i = 0; i < embeds.size(); ++i) {
            auto e = embeds[i]->data();
            for (std::size_t j = 0; j < dim_; ++j) tok[i * dim_ + j] += e[j];
        }
        out.tokens = Tensor({coords.size(), dim_}, std::move(tok));
    }

    if (prompts.coarse_mask) {
        NoGradGuard frozen;
        out.dense = tokens_to_map(mask_patch_(patchify(prompts.coarse_mask->data(), 1, height, width)), gh, gw);
    } else {
        out.dense = Tensor({dim_, gh, gw}, 0.0);
    }
    return out;
}

// ---------------------------------------------------------------------------

DecoderLayer::DecoderLayer(ParamStore& store, const std::string& prefix, std::size_t dim, std::size_t heads,
                           Rng& rng)
    : dim_(dim) {
    ln_self_ = LayerNormParams::make(store, prefix + ".ln_self", dim, false);
    self_attn_ = Attention::make(store, prefix + ".self_attn", dim, heads, false, rng);
    ln_cross_ = LayerNormParams::make(store, prefix + ".ln_cross", dim, false);
    token_to_image_ = Attention::make(store, prefix + ".token_to_image", dim, heads, false, rng);
    ln_mlp_ = LayerNormParams::make(store, prefix + ".ln_mlp", dim, false);
    fc1_ = Linear::make(store, prefix + ".fc1", dim, 2 * dim, false, rng);
    fc2_ = Linear::make(store, prefix + ".fc2", 2 * dim, dim, false, rng);
    ln_image_ = LayerNormParams::make(store, prefix + ".ln_image", dim, false);
    image_to_token_ = Attention::make(store, prefix + ".image_to_token", dim, heads, false, rng);
}

DecoderLayer::Output DecoderLayer::forward(const Tensor& tokens, const Tensor& features,
                                           const Tensor& image_pe) const {
    if (features.ndim() != 3 || features.dim(0) != dim_ || tokens.ndim() != 2 || tokens.dim(1) != dim_)
        throw ShapeError("decoder layer: tokens " + shape_str(tokens.shape()) + " and features " +
                         shape_str(features.shape()) + " must share width " + std::to_string(dim_));
    const std::size_t h = features.dim(1), w = features.dim(2);
    const Tensor img = map_to_tokens(features);

    Tensor t = tokens;
    const Tensor n1 = ln_self_(t);
    t = t + attend(self_attn_, n1, n1, n1);
    t = t + attend(token_to_image_, ln_cross_(t), img + image_pe, img);
    t = t + fc2_(gelu(fc1_(ln_mlp_(t))));
    const Tensor f = img + attend(image_to_token_, ln_image_(img) + image_pe, t, t);
    return {t, tokens_to_map(f, h, w)};
}

SamTokens SamTokens::make(ParamStore& store, std::size_t dim, Rng& rng) {
    SamTokens s;
    s.mask = store.add("sam_tokens.mask", init_normal(rng, {4, dim}, 1), false);
    s.iou = store.add("sam_tokens.iou", init_normal(rng, {1, dim}, 1), false);
    return s;
}

}  // namespace sama
