#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sama/objectives.hpp"
#include "sama/ops.hpp"
#include "support.hpp"

namespace sama::test {

constexpr int kGradSeeds = 20;

struct GradCase {
    std::string name;
    std::function<std::vector<Tensor>(Rng&, int)> make;
    std::function<Tensor(const std::vector<Tensor>&)> fn;
    bool scalar_loss = false;  // fn already returns the scalar to differentiate
};

// Reduces an op output to a scalar with a fixed random projection so every
// output element contributes a distinct weight.
inline Tensor project(const Tensor& out, std::uint64_t seed) {
    Rng rng(seed ^ 0xABCDEFull);
    const Tensor r(out.shape(), random_values(rng, out.numel()));
    return sum(out * r);
}

inline GradCheckResult run_grad_case(const GradCase& c, int seed) {
    Rng rng(static_cast<std::uint64_t>(seed) * 7919 + 1);
    auto inputs = c.make(rng, seed);
    if (c.scalar_loss) {
        // Only the prediction is differentiated; the target stays fixed.
        return gradcheck([&] { return c.fn(inputs); }, std::span<Tensor>(inputs.data(), 1));
    }
    return gradcheck([&] { return project(c.fn(inputs), static_cast<std::uint64_t>(seed)); }, inputs);
}

inline std::size_t span_5_15(int seed) { return 5 + static_cast<std::size_t>(seed) % 11; }

// Values bounded away from zero, with random sign.
inline std::vector<double> away_from_zero(Rng& rng, std::size_t n) {
    auto v = random_values(rng, n, 0.2, 1.0);
    for (auto& x : v)
        if (rng.uniform() < 0.5) x = -x;
    return v;
}

inline Tensor leaf_of(Shape s, std::vector<double> v) {
    Tensor t(std::move(s), std::move(v));
    t.set_requires_grad(true);
    return t;
}

inline std::vector<GradCase> op_grad_cases() {
    using In = const std::vector<Tensor>&;
    std::vector<GradCase> cases;
    auto add = [&](std::string name, auto make, auto fn) { cases.push_back({std::move(name), make, fn}); };

    auto vec = [](Rng& r, int s) { return std::vector<Tensor>{leaf(r, {span_5_15(s)}, -2, 2)}; };
    auto pos = [](Rng& r, int s) { return std::vector<Tensor>{leaf(r, {span_5_15(s)}, 0.2, 2)}; };
    auto nz = [](Rng& r, int s) {
        const auto n = span_5_15(s);
        return std::vector<Tensor>{leaf_of({n}, away_from_zero(r, n))};
    };
    add("neg", vec, [](In in) { return neg(in[0]); });
    add("scale", vec, [](In in) { return scale(in[0], -1.7); });
    add("add_scalar", vec, [](In in) { return add_scalar(in[0], 0.3); });
    add("rsub_scalar", vec, [](In in) { return rsub_scalar(1.0, in[0]); });
    add("sigmoid", vec, [](In in) { return sigmoid(in[0]); });
    add("gelu", vec, [](In in) { return gelu(in[0]); });
    add("exp", vec, [](In in) { return exp(in[0]); });
    add("square", vec, [](In in) { return square(in[0]); });
    add("log", pos, [](In in) { return log(in[0]); });
    add("sqrt", pos, [](In in) { return sqrt(in[0]); });
    add("abs", nz, [](In in) { return abs(in[0]); });
    // Inputs in (+-0.2, +-1) keep clear of the clamp corners at +-0.1 and +-1.5.
    add("clamp", nz, [](In in) { return clamp(scale(in[0], 1.2), -0.1, 1.5); });

    auto two = [](Rng& r, int s) {
        const auto n = span_5_15(s);
        return std::vector<Tensor>{leaf(r, {n}), leaf_of({n}, away_from_zero(r, n)), leaf(r, {1})};
    };
    add("add", two, [](In in) { return in[0] + in[1]; });
    add("sub", two, [](In in) { return in[0] - in[1]; });
    add("mul", two, [](In in) { return in[0] * in[1]; });
    add("div", two, [](In in) { return in[0] / in[1]; });
    add("mul_scalar", two, [](In in) { return in[0] * in[2]; });
    add("scalar_sub", two, [](In in) { return in[2] - in[1]; });

    auto mm = [](Rng& r, int s) {
        const std::size_t m = 1 + s % 3, k = 2 + s % 4, n = 1 + (s / 3) % 3;
        return std::vector<Tensor>{leaf(r, {m, k}), leaf(r, {k, n})};
    };
    add("matmul", mm, [](In in) { return matmul(in[0], in[1]); });
    add("transpose", mm, [](In in) { return transpose(in[0]); });
    add("reshape", mm, [](In in) { return reshape(in[0], {in[0].numel()}); });
    auto rows = [](Rng& r, int s) {
        const std::size_t n = 2 + s % 4;
        return std::vector<Tensor>{leaf(r, {3, n}), leaf(r, {n}), leaf(r, {n}, 0.5, 1.5)};
    };
    add("add_rowvec", rows, [](In in) { return add_rowvec(in[0], in[1]); });
    add("sum", rows, [](In in) { return sum(in[0]); });
    add("mean", rows, [](In in) { return mean(in[0]); });
    add("sum_last", rows, [](In in) { return sum_last(in[0]); });
    add("softmax_last", rows, [](In in) { return softmax(in[0], 1); });
    add("softmax_first", rows, [](In in) { return softmax(in[0], 0); });
    add("layer_norm", rows, [](In in) { return layer_norm(in[0], in[2], in[1]); });

    auto parts = [](Rng& r, int s) {
        const std::size_t n = 2 + s % 3;
        return std::vector<Tensor>{leaf(r, {2, n}), leaf(r, {2, n}), leaf(r, {1, n})};
    };
    add("concat0", parts, [](In in) {
        const Tensor p[] = {in[0], in[2]};
        return concat(p, 0);
    });
    add("concat1", parts, [](In in) {
        const Tensor p[] = {in[0], in[1]};
        return concat(p, 1);
    });
    add("stack", parts, [](In in) {
        const Tensor p[] = {in[0], in[1]};
        return stack(p);
    });
    add("slice", parts, [](In in) { return slice(in[0], 1, 1, in[0].shape()[1] - 1); });
    add("select", parts, [](In in) { return select(in[1], 1); });

    auto plane = [](Rng& r, int s) {
        const std::size_t h = 2 + s % 3, w = 2 + (s / 3) % 3;
        return std::vector<Tensor>{leaf(r, {1, h, w})};
    };
    add("bilinear_up", plane, [](In in) { return bilinear_resize(in[0], 5, 3); });
    add("bilinear_down", plane, [](In in) { return bilinear_resize(in[0], 1, 2); });
    add("crop", plane, [](In in) { return crop2d(in[0], 1, 0, in[0].shape()[1] - 1, 2); });
    add("pad_zero", plane, [](In in) { return pad2d(in[0], 1, PadMode::zero); });
    add("pad_replicate", plane, [](In in) { return pad2d(in[0], 2, PadMode::replicate); });
    add("pad_reflect", plane, [](In in) { return pad2d(in[0], 1, PadMode::reflect); });
    add("upsample_zero2", plane, [](In in) { return upsample_zero2(in[0]); });
    add("filter2d", plane, [](In in) { return filter2d(in[0], Filter2d{2, 2, {0.5, -1.0, 0.25, 2.0}}); });

    auto even = [](Rng& r, int s) {
        const std::size_t h = 2 * (1 + s % 2), w = 2 * (1 + (s / 2) % 2);
        return std::vector<Tensor>{leaf(r, {2, h, w})};
    };
    add("avg_pool", even, [](In in) { return avg_pool2d(in[0], 2); });
    add("downsample2", even, [](In in) { return downsample2(in[0]); });

    auto conv = [](Rng& r, int s) {
        const std::size_t k = s % 2 ? 3 : 1, h = 2 + s % 2, w = 2 + (s / 2) % 2;
        return std::vector<Tensor>{leaf(r, {2, h, w}), leaf(r, {2, 2, k, k}), leaf(r, {2})};
    };
    add("conv2d", conv, [](In in) { return conv2d(in[0], in[1], in[2]); });

    auto bn = [](Rng& r, int s) {
        const std::size_t b = 1 + s % 2;
        return std::vector<Tensor>{leaf(r, {b, 2, 2, 3}), leaf(r, {2}, 0.5, 1.5), leaf(r, {2})};
    };
    add("batch_norm", bn, [](In in) { return batch_norm(in[0], in[1], in[2]); });
    return cases;
}

inline std::vector<GradCase> loss_grad_cases() {
    using In = const std::vector<Tensor>&;
    std::vector<GradCase> cases;
    auto add = [&](std::string name, Shape shape, double lo, double hi, auto loss) {
        auto make = [shape, lo, hi](Rng& r, int) {
            Tensor p = leaf(r, shape, lo, hi);
            return std::vector<Tensor>{p, random_tensor(r, shape, 0, 1)};
        };
        cases.push_back({std::move(name), make, [loss](In in) { return loss(in[0], in[1]); }, true});
    };
    add("bce", {3, 4}, 0.05, 0.95, [](const Tensor& p, const Tensor& g) { return bce_loss(p, g); });
    add("iou", {2, 5}, 0, 1, [](const Tensor& p, const Tensor& g) { return soft_iou_loss(p, g); });
    add("l1", {1, 13}, 0, 1, [](const Tensor& p, const Tensor& g) { return l1_loss(p, g); });
    add("gradient", {3, 4}, 0, 1, [](const Tensor& p, const Tensor& g) { return gradient_loss(p, g); });
    add("ssim_w3", {3, 4}, 0, 1, [](const Tensor& p, const Tensor& g) { return ssim_loss(p, g, {3, 1.5}); });
    add("ssim_w7", {7, 8}, 0, 1, [](const Tensor& p, const Tensor& g) { return ssim_loss(p, g); });
    add("laplacian_2", {4, 4}, 0, 1, [](const Tensor& p, const Tensor& g) { return laplacian_loss(p, g, 2); });
    add("laplacian_3", {8, 8}, 0, 1, [](const Tensor& p, const Tensor& g) { return laplacian_loss(p, g, 3); });
    return cases;
}

}  // namespace sama::test
