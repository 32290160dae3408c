#pragma once

#include <string>
#include <vector>

#include "sama/nn.hpp"

namespace sama {

enum class Task { seg, matte };

const char* task_name(Task t);

struct HeadConfig {
    std::size_t feature_resolution = 4;   // decoder grid side (H/16)
    std::size_t target_resolution = 64;   // output side
    std::size_t up_stages() const;        // log2(target / feature); throws ConfigError if not a power of two

    // Channel width after each upsampling stage.
    static std::vector<std::size_t> stage_channels(std::size_t dim, std::size_t stages);
};

/// Upsampling prediction head: `up_stages` x (bilinear x2 -> conv3x3 ->
/// batch norm -> GELU), then a per-pixel linear functional produced from the
/// task token by a two-layer MLP, and a sigmoid.
class PredictionHead {
public:
    PredictionHead(ParamStore& store, Task task, std::size_t dim, const HeadConfig& cfg, Rng& rng);

    // features: [B, C, h, w]; task_tokens: B rows of [1, D]. Returns [B, 1, h*2^s, w*2^s].
    Tensor predict(const Tensor& features, const std::vector<Tensor>& task_tokens) const;

    Task task() const { return task_; }
    std::string prefix() const { return std::string("head.") + task_name(task_); }
    std::size_t stages() const { return convs_.size(); }

private:
    struct Stage {
        Tensor weight, bias, gamma, beta;
    };
    Task task_;
    std::vector<Stage> convs_;
    Linear mlp1_, mlp2_;
};

}  // namespace sama
