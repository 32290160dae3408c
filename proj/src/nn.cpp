#include "sama/nn.hpp"

#include <cmath>

#include "sama/ops.hpp"

namespace sama {

Tensor ParamStore::add(const std::string& name, Tensor value, bool trainable) {
    if (index_.count(name)) throw ContractError("duplicate parameter name " + name);
    value.set_requires_grad(trainable);
    index_[name] = entries_.size();
    entries_.push_back({name, value, trainable});
    return value;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter " + name);
    return entries_[it->second].value;
}

std::vector<std::string> ParamStore::trainable_names() const {
    std::vector<std::string> out;
    for (const auto& e : entries_)
        if (e.trainable) out.push_back(e.name);
    return out;
}

std::vector<std::string> ParamStore::names_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& e : entries_)
        if (e.name.rfind(prefix, 0) == 0) out.push_back(e.name);
    return out;
}

void ParamStore::zero_grad() {
    for (auto& e : entries_) e.value.clear_grad();
}

Tensor init_normal(Rng& rng, Shape shape, std::size_t fan_in, double gain) {
    const double sd = gain / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> v(numel_of(shape));
    for (auto& x : v) x = rng.normal(0.0, sd);
    return Tensor(std::move(shape), std::move(v));
}

Linear Linear::make(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out, bool trainable,
                    Rng& rng, double gain) {
    Linear l;
    l.weight = store.add(prefix + ".weight", init_normal(rng, {in, out}, in, gain), trainable);
    l.bias = store.add(prefix + ".bias", Tensor({out}, 0.0), trainable);
    return l;
}

Tensor Linear::operator()(const Tensor& x) const { return add_rowvec(matmul(x, weight), bias); }

LayerNormParams LayerNormParams::make(ParamStore& store, const std::string& prefix, std::size_t dim,
                                      bool trainable) {
    LayerNormParams p;
    p.gamma = store.add(prefix + ".gamma", Tensor({dim}, 1.0), trainable);
    p.beta = store.add(prefix + ".beta", Tensor({dim}, 0.0), trainable);
    return p;
}

Tensor LayerNormParams::operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }

Attention Attention::make(ParamStore& store, const std::string& prefix, std::size_t dim, std::size_t heads,
                          bool trainable, Rng& rng) {
    if (heads == 0 || dim % heads != 0)
        throw ConfigError("attention dim " + std::to_string(dim) + " not divisible by " + std::to_string(heads) +
                          " heads");
    Attention a;
    a.heads = heads;
    a.wq = store.add(prefix + ".wq", init_normal(rng, {dim, dim}, dim), trainable);
    a.wk = store.add(prefix + ".wk", init_normal(rng, {dim, dim}, dim), trainable);
    a.wv = store.add(prefix + ".wv", init_normal(rng, {dim, dim}, dim), trainable);
    a.wo = store.add(prefix + ".wo", init_normal(rng, {dim, dim}, dim), trainable);
    return a;
}

Tensor attend(const Attention& attn, const Tensor& queries, const Tensor& keys, const Tensor& values,
              AttentionProbe* probe) {
    const std::size_t d = attn.dim();
    if (queries.ndim() != 2 || keys.ndim() != 2 || values.ndim() != 2 || queries.dim(1) != d ||
        keys.dim(1) != d || values.dim(1) != d || keys.dim(0) != values.dim(0))
        throw ShapeError("attend: queries " + shape_str(queries.shape()) + ", keys " + shape_str(keys.shape()) +
                         ", values " + shape_str(values.shape()) + " for width " + std::to_string(d));
    if (attn.heads == 0 || d % attn.heads != 0) throw ConfigError("attention width not divisible by head count");
    const std::size_t hd = d / attn.heads;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(hd));

    const Tensor q = matmul(queries, attn.wq);
    const Tensor k = matmul(keys, attn.wk);
    const Tensor v = matmul(values, attn.wv);
    std::vector<Tensor> outs;
    outs.reserve(attn.heads);
    if (probe) probe->weights.clear();
    for (std::size_t h = 0; h < attn.heads; ++h) {
        const Tensor qh = slice(q, 1, h * hd, hd);
        const Tensor kh = slice(k, 1, h * hd, hd);
        const Tensor vh = slice(v, 1, h * hd, hd);
        const Tensor w = softmax(scale(matmul(qh, transpose(kh)), inv_scale), 1);
        if (probe) probe->weights.push_back(w);
        outs.push_back(matmul(w, vh));
    }
    const Tensor merged = attn.heads == 1 ? outs[0] : concat(outs, 1);
    if (probe) probe->pre_projection = merged;
    return matmul(merged, attn.wo);
}

Tensor map_to_tokens(const Tensor& map) {
    if (map.ndim() != 3) throw ShapeError("map_to_tokens expects [C, H, W], got " + shape_str(map.shape()));
    return transpose(reshape(map, {map.dim(0), map.dim(1) * map.dim(2)}));
}

Tensor tokens_to_map(const Tensor& tokens, std::size_t h, std::size_t w) {
    if (tokens.ndim() != 2 || tokens.dim(0) != h * w)
        throw ShapeError("tokens_to_map: " + shape_str(tokens.shape()) + " does not hold a " + std::to_string(h) +
                         "x" + std::to_string(w) + " grid");
    return reshape(transpose(tokens), {tokens.dim(1), h, w});
}

}  // namespace sama
