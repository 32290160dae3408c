#include "sama/adapter.hpp"

#include "sama/ops.hpp"

namespace sama {

Tensor TokenBlock::sequence() const {
    std::vector<Tensor> parts{sama, sam_mask, iou};
    if (prompt.defined()) parts.push_back(prompt);
    return concat(parts, 0);
}

std::vector<bool> TokenBlock::trainable_rows() const {
    std::vector<bool> rows(size(), false);
    for (std::size_t i = 0; i < kSamaTokens; ++i) rows[i] = true;
    return rows;
}

TokenBlock assemble_tokens(const Tensor& sama_tokens, const SamTokens& sam, const Tensor& prompt_tokens) {
    const std::size_t d = sama_tokens.dim(1);
    if (sama_tokens.shape() != Shape{kSamaTokens, d}) throw ShapeError("SAMA tokens must be [2, D]");
    if (sam.mask.shape() != Shape{4, d} || sam.iou.shape() != Shape{1, d})
        throw ShapeError("SAM tokens must be [4, D] and [1, D] with D = " + std::to_string(d));
    if (prompt_tokens.defined() && (prompt_tokens.ndim() != 2 || prompt_tokens.dim(1) != d))
        throw ShapeError("prompt tokens " + shape_str(prompt_tokens.shape()) + " do not have width " +
                         std::to_string(d));
    return {sama_tokens, sam.mask, sam.iou, prompt_tokens};
}

LocalAdapter::LocalAdapter(ParamStore& store, const std::string& prefix, std::size_t dim, std::size_t heads, Rng& rng)
    : dim_(dim) {
    stage1_ = Attention::make(store, prefix + ".stage1", dim, heads, true, rng);
    stage2_ = Attention::make(store, prefix + ".stage2", dim, heads, true, rng);
    gate_w_ = store.add(prefix + ".gate.weight", init_normal(rng, {dim, dim, 1, 1}, dim), true);
    gate_b_ = store.add(prefix + ".gate.bias", Tensor({dim}, 0.0), true);
}

LocalAdapter::Attended LocalAdapter::attend_locals(const Tensor& f_out, const std::array<Tensor, kViews>& locals,
                                                   const Tensor& early, AdapterProbe* probe) const {
    if (f_out.ndim() != 3 || f_out.dim(0) != dim_) throw ShapeError("adapter: F_out must be [C, h, w]");
    if (early.shape() != f_out.shape())
        throw ShapeError("adapter: F_early " + shape_str(early.shape()) + " must match F_out " +
                         shape_str(f_out.shape()));
    const std::size_t h = f_out.dim(1), w = f_out.dim(2);
    std::vector<Tensor> seq;
    for (std::size_t m = 0; m < kViews; ++m) {
        const Tensor& lm = locals[m];
        if (lm.ndim() != 3 || lm.dim(0) != dim_)
            throw ShapeError("adapter: local map " + shape_str(lm.shape()) + " must be [C, h', w']");
        const Tensor early_m = bilinear_resize(quadrant(early, m), lm.dim(1), lm.dim(2));
        seq.push_back(map_to_tokens(lm + early_m));
    }
    const Tensor kv = concat(seq, 0);
    const Tensor q = map_to_tokens(f_out);
    const Tensor fused_tokens = attend(stage1_, q, kv, kv, probe ? &probe->stage1 : nullptr);
    const Tensor carry_tokens = attend(stage2_, kv, fused_tokens, fused_tokens, probe ? &probe->stage2 : nullptr);
    if (probe) probe->stage1_keys = kv;

    Attended out;
    out.fused = tokens_to_map(fused_tokens, h, w);
    std::size_t row = 0;
    for (std::size_t m = 0; m < kViews; ++m) {
        const std::size_t n = locals[m].dim(1) * locals[m].dim(2);
        out.carry[m] = tokens_to_map(slice(carry_tokens, 0, row, n), locals[m].dim(1), locals[m].dim(2));
        row += n;
    }
    return out;
}

LocalAdapter::Fused LocalAdapter::confidence_fuse(const Tensor& f_out, const Tensor& fused) const {
    if (f_out.shape() != fused.shape())
        throw ShapeError("confidence_fuse: " + shape_str(f_out.shape()) + " vs " + shape_str(fused.shape()));
    const Tensor conf = sigmoid(conv2d(f_out, gate_w_, gate_b_)) * fused;
    return {conf, f_out + conf};
}

AdapterOutput LocalAdapter::forward(const Tensor& f_out, const std::array<Tensor, kViews>& locals,
                                    const Tensor& early, AdapterProbe* probe) const {
    auto att = attend_locals(f_out, locals, early, probe);
    auto fz = confidence_fuse(f_out, att.fused);
    return {att.fused, fz.confidence, fz.out, att.carry};
}

DecodeResult decode(const TokenBlock& tokens, const Tensor& features, const Tensor& image_pe,
                    const std::array<const DecoderLayer*, kDecodeRounds>& layers,
                    const std::vector<const LocalAdapter*>& adapters, const std::array<Tensor, kViews>& locals,
                    const Tensor& early, std::vector<AdapterProbe>* probes) {
    if (!adapters.empty() && adapters.size() != kDecodeRounds)
        throw ContractError("decode needs one adapter per round or none");
    DecodeResult res;
    Tensor t = tokens.sequence();
    Tensor f = features;
    std::array<Tensor, kViews> local_in = locals;
    if (probes) probes->assign(adapters.size(), {});
    for (std::size_t r = 0; r < kDecodeRounds; ++r) {
        auto dec = layers[r]->forward(t, f, image_pe);
        t = dec.tokens;
        res.decoder_features.push_back(dec.features);
        if (adapters.empty()) {
            f = dec.features;
            continue;
        }
        auto ad = adapters[r]->forward(dec.features, local_in, early, probes ? &(*probes)[r] : nullptr);
        f = ad.out;
        local_in = ad.carry;
        res.rounds.push_back(std::move(ad));
    }
    res.tokens = t;
    res.features = f;
    return res;
}

}  // namespace sama
