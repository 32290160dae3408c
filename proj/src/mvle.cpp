#include "sama/mvle.hpp"

#include <algorithm>
#include <iostream>
#include <mutex>
#include <set>
#include <string>

#include "sama/ops.hpp"

namespace sama {

namespace {

void warn_once(const std::string& msg) {
    static std::mutex mu;
    static std::set<std::string> seen;
    std::lock_guard lock(mu);
    if (seen.insert(msg).second) std::clog << "warning: " << msg << '\n';
}

}  // namespace

Tensor quadrant(const Tensor& t, std::size_t m) {
    if (m >= kViews) throw ParameterError("quadrant index must be < 4");
    const std::size_t r = t.ndim();
    const std::size_t h = t.dim(r - 2), w = t.dim(r - 1);
    if (h % 2 || w % 2) throw ShapeError("quadrant split needs even dims, got " + shape_str(t.shape()));
    const std::size_t qh = h / 2, qw = w / 2;
    return crop2d(t, (m / 2) * qh, (m % 2) * qw, qh, qw);
}

ViewSet crop_views(const Tensor& img) {
    if (img.ndim() != 4) throw ShapeError("crop_views expects [B, 3, H, W], got " + shape_str(img.shape()));
    const std::size_t h = img.dim(2), w = img.dim(3);
    if (h % (2 * kPatchStride) || w % (2 * kPatchStride))
        throw ShapeError("crop_views needs H and W divisible by 32, got " + shape_str(img.shape()));
    ViewSet v{img, {}};
    for (std::size_t m = 0; m < kViews; ++m) v.locals[m] = quadrant(img, m);
    return v;
}

Tensor stitch_views(const std::array<Tensor, kViews>& locals) {
    const std::size_t r = locals[0].ndim();
    const std::array<Tensor, 2> top{locals[0], locals[1]};
    const std::array<Tensor, 2> bottom{locals[2], locals[3]};
    const std::array<Tensor, 2> rows{concat(top, r - 1), concat(bottom, r - 1)};
    return concat(rows, r - 2);
}

Tensor LocalFeatures::view(std::size_t m) const {
    Shape s = stacked.shape();
    s.erase(s.begin() + 1);
    return reshape(slice(stacked, 1, m, 1), std::move(s));
}

LocalFeatures encode_views(const ViewSet& views, const ImageEncoder& encoder) {
    const std::size_t h = views.global.dim(2), w = views.global.dim(3);
    NoGradGuard frozen;
    std::array<Tensor, kViews> feats;
    for (std::size_t m = 0; m < kViews; ++m)
        feats[m] = encoder.encode(bilinear_resize(views.locals[m], h, w)).global;
    // [4, B, C, h, w] -> [B, 4, C, h, w]
    const std::size_t b = feats[0].dim(0);
    std::vector<Tensor> per_sample;
    for (std::size_t i = 0; i < b; ++i) {
        std::array<Tensor, kViews> vs;
        for (std::size_t m = 0; m < kViews; ++m) vs[m] = select(feats[m], i);
        per_sample.push_back(stack(vs));
    }
    return {stack(per_sample)};
}

PooledContext pool_multiscale(const Tensor& global, const std::vector<std::size_t>& receptive_fields) {
    if (global.ndim() < 3) throw ShapeError("pool_multiscale expects [..., C, h, w]");
    const std::size_t r = global.ndim();
    const std::size_t h = global.dim(r - 2), w = global.dim(r - 1);
    PooledContext ctx;
    std::vector<Tensor> maps;
    for (auto rf : receptive_fields) {
        if (rf == 0) throw ParameterError("receptive field must be >= 1");
        if (rf > std::min(h, w)) {
            ctx.dropped.push_back(rf);
            warn_once("receptive field " + std::to_string(rf) + " exceeds feature map " + std::to_string(h) + "x" +
                      std::to_string(w) + "; dropped");
            continue;
        }
        ctx.receptive_fields.push_back(rf);
        maps.push_back(bilinear_resize(avg_pool2d(global, rf), h, w));
    }
    if (maps.empty()) throw ParameterError("every receptive field exceeds the feature map");
    Tensor acc = maps[0];
    for (std::size_t i = 1; i < maps.size(); ++i) acc = acc + maps[i];
    ctx.pooled = maps.size() == 1 ? acc : scale(acc, 1.0 / static_cast<double>(maps.size()));
    return ctx;
}

Mvle::Mvle(ParamStore& store, std::size_t dim, std::size_t heads, std::vector<std::size_t> receptive_fields, Rng& rng)
    : rfs_(std::move(receptive_fields)) {
    if (rfs_.empty()) throw ConfigError("MVLE needs at least one receptive field");
    for (std::size_t m = 0; m < kViews; ++m)
        attn_[m] = Attention::make(store, "mvle.view" + std::to_string(m + 1) + ".attn", dim, heads, true, rng);
}

Tensor Mvle::localize_view(std::size_t m, const Tensor& local, const Tensor& region, AttentionProbe* probe) const {
    if (local.ndim() != 3 || region.ndim() != 3 || local.dim(0) != region.dim(0))
        throw ShapeError("localize: local " + shape_str(local.shape()) + " vs region " + shape_str(region.shape()));
    const Tensor q = map_to_tokens(local);
    const Tensor kv = map_to_tokens(region);
    return tokens_to_map(attend(attn_[m], q, kv, kv, probe), local.dim(1), local.dim(2));
}

std::array<Tensor, kViews> Mvle::localize(const LocalFeatures& locals, const PooledContext& ctx) const {
    std::array<Tensor, kViews> out;
    const std::size_t b = locals.stacked.dim(0);
    for (std::size_t m = 0; m < kViews; ++m) {
        const Tensor lm = locals.view(m);
        const Tensor rm = ctx.region(m);
        std::vector<Tensor> per_sample;
        for (std::size_t i = 0; i < b; ++i) per_sample.push_back(localize_view(m, select(lm, i), select(rm, i)));
        out[m] = stack(per_sample);
    }
    return out;
}

}  // namespace sama
