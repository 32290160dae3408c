#pragma once

#include "sama/heads.hpp"
#include "sama/ops.hpp"
#include "sama/tensor.hpp"

namespace sama {

// All losses take prediction and target of equal shape [..., H, W] and return
// a one-element tensor. Leading axes are independent images.

inline constexpr double kBceClamp = 1e-7;
inline constexpr double kIouEps = 1e-6;

Tensor bce_loss(const Tensor& pred, const Tensor& target);
// 1 - (sum pg + eps) / (sum p + sum g - sum pg + eps), averaged over images.
Tensor soft_iou_loss(const Tensor& pred, const Tensor& target);
Tensor l1_loss(const Tensor& pred, const Tensor& target);

struct SsimConfig {
    std::size_t window = 7;
    double sigma = 1.5;
    double c1 = 0.01 * 0.01;
    double c2 = 0.03 * 0.03;
};
Filter2d gaussian_window(std::size_t size, double sigma);
// 1 - mean SSIM over valid (unpadded) Gaussian windows.
Tensor ssim_loss(const Tensor& pred, const Tensor& target, const SsimConfig& cfg = {});

// Mean |‖Sobel(p)‖ - ‖Sobel(g)‖|, edge-replicated borders.
inline constexpr double kSobelEps = 1e-8;
Tensor gradient_loss(const Tensor& pred, const Tensor& target);

// Five-tap binomial Gaussian pyramid; levels 0..L-2 are band-pass, level L-1 is
// the low-pass residual. Loss = sum_i 2^i * mean|Lap_i(p) - Lap_i(g)|.
Filter2d pyramid_kernel(double gain = 1.0);
std::vector<Tensor> laplacian_pyramid(const Tensor& x, std::size_t levels);
Tensor laplacian_loss(const Tensor& pred, const Tensor& target, std::size_t levels = 3);

struct LossWeights {
    double bce = 1, iou = 1, ssim_seg = 1;
    double l1 = 1, ssim_mat = 1, grad = 1, laplacian = 1;
};

/// Weighted loss terms of one step. Inactive task terms are zero.
struct LossBreakdown {
    double bce = 0, iou = 0, ssim_seg = 0;
    double l1 = 0, ssim_mat = 0, grad = 0, laplacian = 0;
    double seg_total = 0, matting_total = 0, total = 0;
};

struct CompositeLoss {
    Tensor total;
    LossBreakdown parts;
};

struct LossOptions {
    LossWeights weights;
    SsimConfig ssim;
    std::size_t laplacian_levels = 3;
};

/// Task-gated loss: a seg batch contributes BCE + IoU + SSIM on the seg output,
/// a matte batch contributes L1 + SSIM + Grad + Laplacian on the matte output.
CompositeLoss composite_loss(Task task, const Tensor& prediction, const Tensor& target, const LossOptions& opts = {});

}  // namespace sama
