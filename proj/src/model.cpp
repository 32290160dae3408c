#include "sama/model.hpp"

#include <algorithm>

#include "sama/ops.hpp"

namespace sama {

void ModelConfig::validate() const {
    encoder.validate();
    if (image_size == 0 || image_size % (2 * kPatchStride) != 0)
        throw ConfigError("image_size " + std::to_string(image_size) + " must be a positive multiple of 32");
    HeadConfig{feature_size(), output_resolution}.up_stages();
    if (receptive_fields.empty()) throw ConfigError("pool_receptive_fields must not be empty");
}

SamaModel::SamaModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg_.seed);
    const std::size_t d = cfg_.encoder.embed_dim, heads = cfg_.encoder.heads;
    encoder_ = std::make_unique<ImageEncoder>(store_, cfg_.encoder, rng);
    prompt_ = std::make_unique<PromptEncoder>(store_, d, rng);
    sam_tokens_ = SamTokens::make(store_, d, rng);
    for (std::size_t r = 0; r < kDecodeRounds; ++r)
        layers_[r] = std::make_unique<DecoderLayer>(store_, "decoder.layer" + std::to_string(r + 1), d, heads, rng);
    mvle_ = std::make_unique<Mvle>(store_, d, heads, cfg_.receptive_fields, rng);
    for (std::size_t r = 0; r < kDecodeRounds; ++r)
        adapters_[r] = std::make_unique<LocalAdapter>(store_, "adapter.round" + std::to_string(r + 1), d, heads, rng);
    sama_tokens_ = store_.add("sama_tokens", init_normal(rng, {kSamaTokens, d}, 1), true);
    const HeadConfig hc{cfg_.feature_size(), cfg_.output_resolution};
    seg_head_ = std::make_unique<PredictionHead>(store_, Task::seg, d, hc, rng);
    matte_head_ = std::make_unique<PredictionHead>(store_, Task::matte, d, hc, rng);
}

EncodedImage SamaModel::encode(const Tensor& image) const {
    const std::size_t s = cfg_.image_size;
    if (image.shape() != Shape{3, s, s})
        throw ShapeError("model expects a [3, " + std::to_string(s) + ", " + std::to_string(s) + "] image, got " +
                         shape_str(image.shape()));
    NoGradGuard frozen;
    const std::array<Tensor, 1> one{image};
    const Tensor batch = stack(one);
    const auto f = encoder_->encode(batch);
    const auto locals = encode_views(crop_views(batch), *encoder_);
    EncodedImage out;
    out.global = select(f.global, 0).detach();
    out.early = select(f.early, 0).detach();
    for (std::size_t m = 0; m < kViews; ++m) out.locals[m] = select(locals.view(m), 0).detach();
    return out;
}

DecodeResult SamaModel::decode_one(const EncodedImage& enc, const PromptSet& prompts, bool baseline,
                                   std::vector<AdapterProbe>* probes) const {
    const std::size_t h = enc.global.dim(1), w = enc.global.dim(2);
    const auto pe = prompt_->encode(prompts, cfg_.image_size, cfg_.image_size);
    const TokenBlock tokens = assemble_tokens(sama_tokens_, sam_tokens_, pe.tokens);
    const Tensor features = enc.global + pe.dense;
    const Tensor image_pe = prompt_->positional().grid(h, w);
    const std::array<const DecoderLayer*, kDecodeRounds> layers{layers_[0].get(), layers_[1].get()};
    if (baseline) return decode(tokens, features, image_pe, layers, {}, {}, enc.early);

    const PooledContext ctx = pool_multiscale(enc.global, mvle_->receptive_fields());
    std::array<Tensor, kViews> localized;
    for (std::size_t m = 0; m < kViews; ++m) localized[m] = mvle_->localize_view(m, enc.locals[m], ctx.region(m));
    return decode(tokens, features, image_pe, layers, {adapters_[0].get(), adapters_[1].get()}, localized, enc.early,
                  probes);
}

Prediction SamaModel::forward(const std::vector<const EncodedImage*>& images,
                              const std::vector<const PromptSet*>& prompts, const ForwardOptions& opts) const {
    if (images.empty() || images.size() != prompts.size())
        throw ContractError("forward needs one prompt set per image");
    if (opts.probes) opts.probes->assign(images.size(), {});
    Prediction pred;
    std::vector<Tensor> feats, seg_tokens, matte_tokens;
    for (std::size_t i = 0; i < images.size(); ++i) {
        auto res = decode_one(*images[i], *prompts[i], opts.baseline, opts.probes ? &(*opts.probes)[i] : nullptr);
        feats.push_back(res.features);
        seg_tokens.push_back(slice(res.tokens, 0, kSegTokenRow, 1));
        matte_tokens.push_back(slice(res.tokens, 0, kMatteTokenRow, 1));
        if (opts.keep_decode) pred.decode.push_back(std::move(res));
    }
    const Tensor batch = stack(feats);
    if (opts.want_seg) pred.seg = seg_head_->predict(batch, seg_tokens);
    if (opts.want_matte) pred.matte = matte_head_->predict(batch, matte_tokens);
    return pred;
}

void SamaModel::zero_adapters() {
    for (auto& a : adapters_) {
        Tensor wo = a->stage1().wo;
        auto data = wo.mutable_data();
        std::fill(data.begin(), data.end(), 0.0);
    }
}

}  // namespace sama
