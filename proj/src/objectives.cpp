#include "sama/objectives.hpp"

#include <cmath>

namespace sama {

namespace {

void require_same(const Tensor& p, const Tensor& g, const char* name) {
    if (p.shape() != g.shape())
        throw ShapeError(std::string(name) + ": prediction " + shape_str(p.shape()) + " vs target " +
                         shape_str(g.shape()));
    if (p.ndim() < 2) throw ShapeError(std::string(name) + " expects [..., H, W]");
}

// [..., H, W] -> [N, H*W]
Tensor flatten_images(const Tensor& t) {
    const std::size_t r = t.ndim();
    const std::size_t hw = t.dim(r - 2) * t.dim(r - 1);
    return reshape(t, {t.numel() / hw, hw});
}

}  // namespace

Tensor bce_loss(const Tensor& pred, const Tensor& target) {
    require_same(pred, target, "bce_loss");
    const Tensor p = clamp(pred, kBceClamp, 1.0 - kBceClamp);
    const Tensor per_pixel = target * log(p) + rsub_scalar(1.0, target) * log(rsub_scalar(1.0, p));
    return neg(mean(per_pixel));
}

Tensor soft_iou_loss(const Tensor& pred, const Tensor& target) {
    require_same(pred, target, "soft_iou_loss");
    const Tensor p = flatten_images(pred);
    const Tensor g = flatten_images(target);
    const Tensor inter = sum_last(p * g);
    const Tensor uni = sum_last(p) + sum_last(g) - inter;
    return mean(rsub_scalar(1.0, add_scalar(inter, kIouEps) / add_scalar(uni, kIouEps)));
}

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
    require_same(pred, target, "l1_loss");
    return mean(abs(pred - target));
}

Filter2d gaussian_window(std::size_t size, double sigma) {
    std::vector<double> g(size);
    const double c = (static_cast<double>(size) - 1.0) / 2.0;
    double total = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
        const double d = static_cast<double>(i) - c;
        g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        total += g[i];
    }
    for (auto& v : g) v /= total;
    Filter2d f{size, size, std::vector<double>(size * size)};
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) f.taps[y * size + x] = g[y] * g[x];
    return f;
}

Tensor ssim_loss(const Tensor& pred, const Tensor& target, const SsimConfig& cfg) {
    require_same(pred, target, "ssim_loss");
    const std::size_t r = pred.ndim();
    if (pred.dim(r - 2) < cfg.window || pred.dim(r - 1) < cfg.window)
        throw ParameterError("ssim_loss: image " + shape_str(pred.shape()) + " smaller than the " +
                             std::to_string(cfg.window) + "x" + std::to_string(cfg.window) + " window");
    const Filter2d win = gaussian_window(cfg.window, cfg.sigma);
    const Tensor mu_p = filter2d(pred, win);
    const Tensor mu_g = filter2d(target, win);
    const Tensor mu_pp = square(mu_p);
    const Tensor mu_gg = square(mu_g);
    const Tensor mu_pg = mu_p * mu_g;
    const Tensor var_p = filter2d(square(pred), win) - mu_pp;
    const Tensor var_g = filter2d(square(target), win) - mu_gg;
    const Tensor cov = filter2d(pred * target, win) - mu_pg;
    const Tensor num = add_scalar(scale(mu_pg, 2.0), cfg.c1) * add_scalar(scale(cov, 2.0), cfg.c2);
    const Tensor den = add_scalar(mu_pp + mu_gg, cfg.c1) * add_scalar(var_p + var_g, cfg.c2);
    return rsub_scalar(1.0, mean(num / den));
}

namespace {

Tensor sobel_magnitude(const Tensor& x) {
    static const Filter2d kx{3, 3, {-1, 0, 1, -2, 0, 2, -1, 0, 1}};
    static const Filter2d ky{3, 3, {-1, -2, -1, 0, 0, 0, 1, 2, 1}};
    const Tensor padded = pad2d(x, 1, PadMode::replicate);
    const Tensor gx = filter2d(padded, kx);
    const Tensor gy = filter2d(padded, ky);
    return sqrt(add_scalar(square(gx) + square(gy), kSobelEps));
}

}  // namespace

Tensor gradient_loss(const Tensor& pred, const Tensor& target) {
    require_same(pred, target, "gradient_loss");
    return mean(abs(sobel_magnitude(pred) - sobel_magnitude(target)));
}

Filter2d pyramid_kernel(double gain) {
    static constexpr double k1[5] = {1, 4, 6, 4, 1};
    Filter2d f{5, 5, std::vector<double>(25)};
    for (std::size_t y = 0; y < 5; ++y)
        for (std::size_t x = 0; x < 5; ++x) f.taps[y * 5 + x] = gain * k1[y] * k1[x] / 256.0;
    return f;
}

std::vector<Tensor> laplacian_pyramid(const Tensor& x, std::size_t levels) {
    if (levels == 0) throw ParameterError("laplacian pyramid needs at least one level");
    const std::size_t r = x.ndim();
    const std::size_t div = std::size_t{1} << levels;
    if (x.dim(r - 2) % div || x.dim(r - 1) % div)
        throw ParameterError("laplacian pyramid: " + shape_str(x.shape()) + " not divisible by 2^" +
                             std::to_string(levels));
    const Filter2d blur = pyramid_kernel(1.0);
    const Filter2d blur_up = pyramid_kernel(4.0);
    std::vector<Tensor> out;
    Tensor cur = x;
    for (std::size_t i = 0; i + 1 < levels; ++i) {
        const Tensor down = downsample2(filter2d(pad2d(cur, 2, PadMode::reflect), blur));
        const Tensor up = filter2d(pad2d(upsample_zero2(down), 2, PadMode::reflect), blur_up);
        out.push_back(cur - up);
        cur = down;
    }
    out.push_back(cur);
    return out;
}

Tensor laplacian_loss(const Tensor& pred, const Tensor& target, std::size_t levels) {
    require_same(pred, target, "laplacian_loss");
    const auto lp = laplacian_pyramid(pred, levels);
    const auto lg = laplacian_pyramid(target, levels);
    Tensor total;
    for (std::size_t i = 0; i < levels; ++i) {
        const Tensor term = scale(mean(abs(lp[i] - lg[i])), static_cast<double>(std::size_t{1} << i));
        total = total.defined() ? total + term : term;
    }
    return total;
}

CompositeLoss composite_loss(Task task, const Tensor& prediction, const Tensor& target, const LossOptions& opts) {
    if (!prediction.defined() || !target.defined())
        throw ContractError(std::string("missing prediction or target for the ") + task_name(task) + " task");
    const auto& w = opts.weights;
    CompositeLoss out;
    auto& b = out.parts;
    if (task == Task::seg) {
        const Tensor t_bce = scale(bce_loss(prediction, target), w.bce);
        const Tensor t_iou = scale(soft_iou_loss(prediction, target), w.iou);
        const Tensor t_ssim = scale(ssim_loss(prediction, target, opts.ssim), w.ssim_seg);
        out.total = t_bce + t_iou + t_ssim;
        b.bce = t_bce.item();
        b.iou = t_iou.item();
        b.ssim_seg = t_ssim.item();
        b.seg_total = b.bce + b.iou + b.ssim_seg;
    } else {
        const Tensor t_l1 = scale(l1_loss(prediction, target), w.l1);
        const Tensor t_ssim = scale(ssim_loss(prediction, target, opts.ssim), w.ssim_mat);
        const Tensor t_grad = scale(gradient_loss(prediction, target), w.grad);
        const Tensor t_lap = scale(laplacian_loss(prediction, target, opts.laplacian_levels), w.laplacian);
        out.total = t_l1 + t_ssim + t_grad + t_lap;
        b.l1 = t_l1.item();
        b.ssim_mat = t_ssim.item();
        b.grad = t_grad.item();
        b.laplacian = t_lap.item();
        b.matting_total = b.l1 + b.ssim_mat + b.grad + b.laplacian;
    }
    b.total = b.seg_total + b.matting_total;
    return out;
}

}  // namespace sama
