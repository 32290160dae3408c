#include "sama/heads.hpp"

#include <algorithm>

#include "sama/ops.hpp"

namespace sama {

const char* task_name(Task t) { return t == Task::seg ? "seg" : "matte"; }

std::size_t HeadConfig::up_stages() const {
    if (feature_resolution == 0 || target_resolution % feature_resolution != 0)
        throw ConfigError("output resolution " + std::to_string(target_resolution) +
                          " is not a multiple of the feature resolution " + std::to_string(feature_resolution));
    std::size_t ratio = target_resolution / feature_resolution;
    std::size_t stages = 0;
    while (ratio > 1) {
        if (ratio % 2) break;
        ratio /= 2;
        ++stages;
    }
    if (ratio != 1)
        throw ConfigError("output resolution " + std::to_string(target_resolution) + " must equal " +
                          std::to_string(feature_resolution) + " * 2^k");
    return stages;
}

std::vector<std::size_t> HeadConfig::stage_channels(std::size_t dim, std::size_t stages) {
    std::vector<std::size_t> c;
    for (std::size_t s = 0; s < stages; ++s) c.push_back(std::max<std::size_t>(dim >> (s + 1), 8));
    return c;
}

PredictionHead::PredictionHead(ParamStore& store, Task task, std::size_t dim, const HeadConfig& cfg, Rng& rng)
    : task_(task) {
    const std::string p = prefix();
    const auto widths = HeadConfig::stage_channels(dim, cfg.up_stages());
    std::size_t cin = dim;
    for (std::size_t s = 0; s < widths.size(); ++s) {
        const std::string sp = p + ".up" + std::to_string(s + 1);
        const std::size_t cout = widths[s];
        Stage st;
        st.weight = store.add(sp + ".conv.weight", init_normal(rng, {cout, cin, 3, 3}, cin * 9), true);
        st.bias = store.add(sp + ".conv.bias", Tensor({cout}, 0.0), true);
        st.gamma = store.add(sp + ".norm.gamma", Tensor({cout}, 1.0), true);
        st.beta = store.add(sp + ".norm.beta", Tensor({cout}, 0.0), true);
        convs_.push_back(std::move(st));
        cin = cout;
    }
    mlp1_ = Linear::make(store, p + ".token_mlp1", dim, dim, true, rng);
    mlp2_ = Linear::make(store, p + ".token_mlp2", dim, cin, true, rng);
}

Tensor PredictionHead::predict(const Tensor& features, const std::vector<Tensor>& task_tokens) const {
    if (features.ndim() != 4) throw ShapeError("head expects [B, C, h, w], got " + shape_str(features.shape()));
    const std::size_t b = features.dim(0);
    if (task_tokens.size() != b) throw ShapeError("head needs one task token per batch entry");
    Tensor x = features;
    for (const auto& st : convs_) {
        x = bilinear_resize(x, 2 * x.dim(2), 2 * x.dim(3));
        x = gelu(batch_norm(conv2d(x, st.weight, st.bias), st.gamma, st.beta));
    }
    const std::size_t c = x.dim(1), rh = x.dim(2), rw = x.dim(3);
    std::vector<Tensor> logits;
    for (std::size_t i = 0; i < b; ++i) {
        const Tensor fn = mlp2_(gelu(mlp1_(task_tokens[i])));  // [1, c]
        logits.push_back(reshape(matmul(fn, reshape(select(x, i), {c, rh * rw})), {1, rh, rw}));
    }
    return sigmoid(stack(logits));
}

}  // namespace sama
