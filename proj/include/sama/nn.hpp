#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "sama/rng.hpp"
#include "sama/tensor.hpp"

namespace sama {

/// Named parameter registry. Insertion order is preserved; it defines the
/// checkpoint layout and the optimizer iteration order.
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor value;
        bool trainable;
    };

    // Registers a leaf; requires_grad follows `trainable`.
    Tensor add(const std::string& name, Tensor value, bool trainable);

    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<std::string> trainable_names() const;
    std::vector<std::string> names_with_prefix(const std::string& prefix) const;

    void zero_grad();

private:
    std::vector<Entry> entries_;
    std::map<std::string, std::size_t> index_;
};

// Gaussian init with std = gain / sqrt(fan_in).
Tensor init_normal(Rng& rng, Shape shape, std::size_t fan_in, double gain = 1.0);

struct Linear {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out]

    static Linear make(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                       bool trainable, Rng& rng, double gain = 1.0);
    Tensor operator()(const Tensor& x) const;  // x: [S, in]
};

struct LayerNormParams {
    Tensor gamma, beta;
    static LayerNormParams make(ParamStore& store, const std::string& prefix, std::size_t dim, bool trainable);
    Tensor operator()(const Tensor& x) const;
};

/// Multi-head scaled dot-product attention with per-role projections.
/// Logits are scaled by 1/sqrt(dim / heads). No projection biases.
struct Attention {
    Tensor wq, wk, wv, wo;  // each [D, D]
    std::size_t heads = 1;

    static Attention make(ParamStore& store, const std::string& prefix, std::size_t dim, std::size_t heads,
                          bool trainable, Rng& rng);
    std::size_t dim() const { return wq.dim(0); }
};

// Optional capture of attention internals for invariant checks.
struct AttentionProbe {
    std::vector<Tensor> weights;  // per head, [Sq, Sk]; rows are softmax outputs
    Tensor pre_projection;        // [Sq, D], heads concatenated before wo
};

// queries: [Sq, D]; keys and values: [Sk, D]. Returns [Sq, D].
Tensor attend(const Attention& attn, const Tensor& queries, const Tensor& keys, const Tensor& values,
              AttentionProbe* probe = nullptr);

// [C, H, W] <-> [H*W, C] token layout.
Tensor map_to_tokens(const Tensor& map);
Tensor tokens_to_map(const Tensor& tokens, std::size_t h, std::size_t w);

}  // namespace sama
