#pragma once

#include <array>
#include <vector>

#include "sama/backbone.hpp"
#include "sama/nn.hpp"

namespace sama {

// Quadrant order used throughout: top-left, top-right, bottom-left, bottom-right.
inline constexpr std::size_t kViews = 4;

struct ViewSet {
    Tensor global;                      // [B, 3, H, W]
    std::array<Tensor, kViews> locals;  // each [B, 3, H/2, W/2]
};

// Lossless 2x2 partition. H and W must be divisible by 32.
ViewSet crop_views(const Tensor& img);
// Inverse of crop_views.
Tensor stitch_views(const std::array<Tensor, kViews>& locals);

// Crops quadrant m of the trailing [h, w] plane (h, w even).
Tensor quadrant(const Tensor& t, std::size_t m);

struct LocalFeatures {
    Tensor stacked;  // F^L [B, 4, C, H/16, W/16]
    Tensor view(std::size_t m) const;  // [B, C, H/16, W/16]
};

// Upsamples each local view back to H x W and runs the shared frozen encoder.
LocalFeatures encode_views(const ViewSet& views, const ImageEncoder& encoder);

struct PooledContext {
    Tensor pooled;                            // F^I_pool [B, C, h, w]
    std::vector<std::size_t> receptive_fields;  // the fields actually used
    std::vector<std::size_t> dropped;           // fields larger than the map
    Tensor region(std::size_t m) const { return quadrant(pooled, m); }  // [B, C, h/2, w/2]
};

// Average-pools F^I at each receptive field, resizes each back to F^I's grid and
// takes the unweighted mean.
PooledContext pool_multiscale(const Tensor& global, const std::vector<std::size_t>& receptive_fields);

/// Per-view cross-attention aligning local features (queries) with the matching
/// region of the pooled global context (keys/values). Each view owns its own
/// projections.
class Mvle {
public:
    Mvle(ParamStore& store, std::size_t dim, std::size_t heads, std::vector<std::size_t> receptive_fields, Rng& rng);

    const std::vector<std::size_t>& receptive_fields() const { return rfs_; }
    const Attention& attention(std::size_t m) const { return attn_[m]; }

    // Single sample: local_m [C, h, w], region_m [C, h/2, w/2] -> F'^{P_m} [C, h, w].
    Tensor localize_view(std::size_t m, const Tensor& local, const Tensor& region,
                         AttentionProbe* probe = nullptr) const;

    // Batched form: returns the four F'^{P_m}, each [B, C, h, w].
    std::array<Tensor, kViews> localize(const LocalFeatures& locals, const PooledContext& ctx) const;

private:
    std::vector<std::size_t> rfs_;
    std::array<Attention, kViews> attn_;
};

}  // namespace sama
