#include "sama/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sama/ops.hpp"
#include "sama/rng.hpp"

namespace sama::synth {

Tensor composite(const Tensor& fg, const Tensor& bg, const Tensor& alpha) {
    if (fg.shape() != bg.shape() || fg.ndim() != 3 || alpha.ndim() != 3 || alpha.dim(0) != 1 ||
        alpha.dim(1) != fg.dim(1) || alpha.dim(2) != fg.dim(2))
        throw ShapeError("composite: fg " + shape_str(fg.shape()) + ", bg " + shape_str(bg.shape()) + ", alpha " +
                         shape_str(alpha.shape()));
    const auto a = alpha.data();
    for (double v : a)
        if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("alpha value " + std::to_string(v) + " outside [0, 1]");
    const std::size_t plane = a.size();
    const auto f = fg.data();
    const auto b = bg.data();
    std::vector<double> out(f.size());
    for (std::size_t c = 0; c < fg.dim(0); ++c)
        for (std::size_t i = 0; i < plane; ++i) {
            const std::size_t j = c * plane + i;
            out[j] = a[i] * f[j] + (1.0 - a[i]) * b[j];
        }
    return Tensor(fg.shape(), std::move(out));
}

namespace {

struct Superellipse {
    double cx, cy, ra, rb, power, angle, feather;
};

double coverage(const Superellipse& s, double x, double y) {
    const double dx = x - s.cx, dy = y - s.cy;
    const double c = std::cos(s.angle), sn = std::sin(s.angle);
    const double u = (c * dx + sn * dy) / s.ra;
    const double v = (-sn * dx + c * dy) / s.rb;
    const double r = std::pow(std::pow(std::abs(u), s.power) + std::pow(std::abs(v), s.power), 1.0 / s.power);
    const double signed_dist = (r - 1.0) * std::min(s.ra, s.rb);
    return 0.5 * std::erfc(signed_dist / (s.feather * std::numbers::sqrt2));
}

Tensor texture(Rng& rng, std::size_t size, bool bright) {
    std::vector<double> v(3 * size * size);
    for (std::size_t c = 0; c < 3; ++c) {
        const bool hi = rng.uniform() < 0.5 ? bright : !bright;
        const double base = hi ? rng.uniform(0.55, 0.9) : rng.uniform(0.1, 0.45);
        const double gx = rng.uniform(-0.2, 0.2), gy = rng.uniform(-0.2, 0.2);
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x) {
                const double fx = (x + 0.5) / size - 0.5, fy = (y + 0.5) / size - 0.5;
                const double val = base + gx * fx + gy * fy + rng.normal(0.0, 0.02);
                v[(c * size + y) * size + x] = std::clamp(val, 0.0, 1.0);
            }
    }
    return Tensor({3, size, size}, std::move(v));
}

}  // namespace

SynthSample generate_sample(std::uint64_t seed, std::size_t size) {
    if (size == 0 || size % 32 != 0)
        throw ShapeError("synthetic image size " + std::to_string(size) + " must be a positive multiple of 32");
    Rng rng(seed);
    const double s = static_cast<double>(size);
    const std::size_t count = 1 + rng.below(3);
    std::vector<Superellipse> shapes;
    for (std::size_t i = 0; i < count; ++i) {
        Superellipse e;
        e.cx = rng.uniform(0.3, 0.7) * s;
        e.cy = rng.uniform(0.3, 0.7) * s;
        e.ra = rng.uniform(0.12, 0.3) * s;
        e.rb = rng.uniform(0.12, 0.3) * s;
        e.power = rng.uniform(1.5, 4.0);
        e.angle = rng.uniform(0.0, std::numbers::pi);
        e.feather = rng.uniform(0.6, 2.0);
        shapes.push_back(e);
    }
    std::vector<double> alpha(size * size), mask(size * size);
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
            double a = 0.0;
            for (const auto& e : shapes) a = std::max(a, coverage(e, x + 0.5, y + 0.5));
            alpha[y * size + x] = a;
            mask[y * size + x] = a >= 0.5 ? 1.0 : 0.0;
        }
    const bool bright_fg = rng.uniform() < 0.5;
    SynthSample out;
    out.seed = seed;
    out.fg = texture(rng, size, bright_fg);
    out.bg = texture(rng, size, !bright_fg);
    out.alpha = Tensor({1, size, size}, std::move(alpha));
    out.mask = Tensor({1, size, size}, std::move(mask));
    out.image = composite(out.fg, out.bg, out.alpha);
    return out;
}

PromptMode PromptMode::parse(const std::string& text) {
    PromptMode m;
    if (text == "box") return m;
    if (text == "noisy_box") return m.kind = Kind::noisy_box, m;
    if (text == "coarse_mask") return m.kind = Kind::coarse_mask, m;
    if (text == "points") return m.kind = Kind::points, m;
    if (text.rfind("points:", 0) == 0) {
        m.kind = Kind::points;
        const std::string num = text.substr(7);
        std::size_t used = 0;
        long k = -1;
        try {
            k = std::stol(num, &used);
        } catch (const std::exception&) {
        }
        if (k < 1 || used != num.size()) throw ConfigError("prompt mode '" + text + "': k must be a positive integer");
        m.k = static_cast<std::size_t>(k);
        return m;
    }
    throw ConfigError("unknown prompt mode '" + text + "' (box, noisy_box, coarse_mask, points:<k>)");
}

std::string PromptMode::str() const {
    switch (kind) {
        case Kind::box: return "box";
        case Kind::noisy_box: return "noisy_box";
        case Kind::coarse_mask: return "coarse_mask";
        case Kind::points: return "points:" + std::to_string(k);
    }
    return {};
}

namespace {

void require_mask(const Tensor& mask) {
    if (mask.ndim() != 3 || mask.dim(0) != 1) throw ShapeError("prompt mask must be [1, H, W], got " + shape_str(mask.shape()));
}

std::vector<std::size_t> foreground(const Tensor& mask) {
    std::vector<std::size_t> idx;
    const auto d = mask.data();
    for (std::size_t i = 0; i < d.size(); ++i)
        if (d[i] >= 0.5) idx.push_back(i);
    return idx;
}

}  // namespace

Box tight_box(const Tensor& mask) {
    require_mask(mask);
    const std::size_t h = mask.dim(1), w = mask.dim(2);
    const auto fg = foreground(mask);
    if (fg.empty()) throw ContractError("cannot derive a box from an empty mask");
    std::size_t x0 = w, y0 = h, x1 = 0, y1 = 0;
    for (std::size_t i : fg) {
        const std::size_t y = i / w, x = i % w;
        x0 = std::min(x0, x), x1 = std::max(x1, x);
        y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
    auto widen = [](std::size_t& lo, std::size_t& hi, std::size_t extent) {
        if (lo != hi) return;
        if (hi + 1 < extent) ++hi;
        else if (lo > 0) --lo;
    };
    widen(x0, x1, w);
    widen(y0, y1, h);
    return {static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1), static_cast<double>(y1)};
}

PromptSet sample_prompts(const Tensor& mask, std::uint64_t seed, const PromptMode& mode) {
    require_mask(mask);
    const std::size_t h = mask.dim(1), w = mask.dim(2);
    Rng rng(seed);
    PromptSet p;
    switch (mode.kind) {
        case PromptMode::Kind::box: p.box = tight_box(mask); break;
        case PromptMode::Kind::noisy_box: {
            Box b = tight_box(mask);
            const double sw = b.x1 - b.x0, sh = b.y1 - b.y0;
            const double maxx = static_cast<double>(w - 1), maxy = static_cast<double>(h - 1);
            b.x0 = std::clamp(b.x0 + rng.uniform(-kBoxJitter, kBoxJitter) * sw, 0.0, maxx);
            b.y0 = std::clamp(b.y0 + rng.uniform(-kBoxJitter, kBoxJitter) * sh, 0.0, maxy);
            b.x1 = std::clamp(b.x1 + rng.uniform(-kBoxJitter, kBoxJitter) * sw, 0.0, maxx);
            b.y1 = std::clamp(b.y1 + rng.uniform(-kBoxJitter, kBoxJitter) * sh, 0.0, maxy);
            p.box = b;
            break;
        }
        case PromptMode::Kind::points: {
            const auto fg = foreground(mask);
            if (fg.empty()) throw ContractError("cannot sample foreground points from an empty mask");
            for (std::size_t i = 0; i < mode.k; ++i) {
                const std::size_t idx = fg[rng.below(fg.size())];
                p.points.push_back({static_cast<double>(idx % w), static_cast<double>(idx / w), PointLabel::foreground});
            }
            break;
        }
        case PromptMode::Kind::coarse_mask: {
            if (h % kCoarseFactor || w % kCoarseFactor)
                throw ShapeError("coarse mask needs dimensions divisible by " + std::to_string(kCoarseFactor));
            NoGradGuard guard;
            p.coarse_mask = bilinear_resize(avg_pool2d(mask, kCoarseFactor), h, w).detach();
            break;
        }
    }
    return p;
}

}  // namespace sama::synth
