#include <doctest.h>

#include "sama/ops.hpp"
#include "sama/synth.hpp"
#include "support.hpp"

using namespace sama;
using namespace sama::synth;

namespace {

// Regression band for the mean alpha of seeds 0..99 at 64x64 (measured 0.2199).
constexpr double kMeanAlphaLo = 0.20;
constexpr double kMeanAlphaHi = 0.24;

Tensor disc_mask(std::size_t s, double cy, double cx, double r) {
    Tensor m({1, s, s}, 0.0);
    auto d = m.mutable_data();
    for (std::size_t y = 0; y < s; ++y)
        for (std::size_t x = 0; x < s; ++x)
            d[y * s + x] = std::hypot(static_cast<double>(y) - cy, static_cast<double>(x) - cx) <= r ? 1.0 : 0.0;
    return m;
}

}  // namespace

TEST_CASE("composite follows the compositing law") {
    Rng rng(1);
    const Tensor fg = test::random_tensor(rng, {3, 4, 4}, 0, 1), bg = test::random_tensor(rng, {3, 4, 4}, 0, 1);
    CHECK(test::bit_equal(composite(fg, bg, Tensor({1, 4, 4}, 1.0)).data(), fg.data()));
    CHECK(test::bit_equal(composite(fg, bg, Tensor({1, 4, 4}, 0.0)).data(), bg.data()));
    const Tensor half = composite(Tensor({3, 2, 2}, 1.0), Tensor({3, 2, 2}, 0.0), Tensor({1, 2, 2}, 0.5));
    for (double v : half.data()) CHECK(v == 0.5);
    CHECK_THROWS_AS(composite(fg, bg, Tensor({1, 4, 4}, 1.5)), ValidationError);
    CHECK_THROWS_AS(composite(fg, bg, Tensor({1, 4, 2}, 0.5)), ShapeError);
}

TEST_CASE("generated samples are deterministic and internally consistent") {
    double mean_alpha = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto s = generate_sample(seed, 64);
        CHECK(s.image.shape() == Shape{3, 64, 64});
        CHECK(s.alpha.shape() == Shape{1, 64, 64});
        double err = 0, m = 0;
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < 64 * 64; ++i) {
                const double a = s.alpha.data()[i];
                const double want = a * s.fg.data()[c * 4096 + i] + (1 - a) * s.bg.data()[c * 4096 + i];
                err = std::max(err, std::abs(s.image.data()[c * 4096 + i] - want));
            }
        CHECK(err <= 1e-12);
        std::size_t out_of_range = 0, mask_mismatch = 0;
        for (std::size_t i = 0; i < 4096; ++i) {
            const double a = s.alpha.data()[i];
            m += a;
            out_of_range += a < 0.0 || a > 1.0;
            mask_mismatch += s.mask.data()[i] != (a >= 0.5 ? 1.0 : 0.0);
        }
        CHECK(out_of_range == 0);
        CHECK(mask_mismatch == 0);
        mean_alpha += m / 4096 / 100;
    }
    CHECK(mean_alpha >= kMeanAlphaLo);
    CHECK(mean_alpha <= kMeanAlphaHi);

    const auto a = generate_sample(77, 64), b = generate_sample(77, 64);
    CHECK(test::bit_equal(a.image.data(), b.image.data()));
    CHECK(test::bit_equal(a.alpha.data(), b.alpha.data()));
    CHECK_FALSE(test::bit_equal(a.alpha.data(), generate_sample(78, 64).alpha.data()));
    CHECK_THROWS_AS(generate_sample(1, 48), ShapeError);
    CHECK(generate_sample(1, 96).image.shape() == Shape{3, 96, 96});
}

TEST_CASE("soft boundaries exist") {
    const auto s = generate_sample(3, 64);
    std::size_t soft = 0;
    for (double a : s.alpha.data()) soft += a > 0.05 && a < 0.95;
    CHECK(soft > 0);
}

TEST_CASE("box prompts") {
    const Tensor full({1, 32, 32}, 1.0);
    const Box b = tight_box(full);
    CHECK(b.x0 == 0.0);
    CHECK(b.y0 == 0.0);
    CHECK(b.x1 == 31.0);
    CHECK(b.y1 == 31.0);

    Tensor dot({1, 32, 32}, 0.0);
    dot.mutable_data()[5 * 32 + 9] = 1.0;
    const Box d = tight_box(dot);
    CHECK(d.x0 < d.x1);
    CHECK(d.y0 < d.y1);
    CHECK_THROWS_AS(tight_box(Tensor({1, 32, 32}, 0.0)), ContractError);
    CHECK_THROWS_AS(sample_prompts(Tensor({1, 32, 32}, 0.0), 1, PromptMode::parse("points:2")), ContractError);

    const Tensor disc = disc_mask(64, 30, 25, 10);
    const Box tb = tight_box(disc);
    const double sw = tb.x1 - tb.x0, sh = tb.y1 - tb.y0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto p = sample_prompts(disc, seed, PromptMode::parse("noisy_box"));
        REQUIRE(p.box);
        CHECK(std::abs(p.box->x0 - tb.x0) <= kBoxJitter * sw);
        CHECK(std::abs(p.box->x1 - tb.x1) <= kBoxJitter * sw);
        CHECK(std::abs(p.box->y0 - tb.y0) <= kBoxJitter * sh);
        CHECK(std::abs(p.box->y1 - tb.y1) <= kBoxJitter * sh);
        CHECK_NOTHROW(p.validate(64, 64));
    }
}

TEST_CASE("point prompts land on the foreground") {
    const Tensor disc = disc_mask(64, 40, 20, 7);
    for (std::size_t k : {1u, 3u, 5u, 10u}) {
        const auto p = sample_prompts(disc, 9, PromptMode{PromptMode::Kind::points, k});
        CHECK(p.points.size() == k);
        CHECK(p.token_count() == k);
        for (const auto& pt : p.points) {
            CHECK(pt.label == PointLabel::foreground);
            CHECK(disc.at({0, static_cast<std::size_t>(pt.y), static_cast<std::size_t>(pt.x)}) == 1.0);
        }
    }
    const auto a = sample_prompts(disc, 5, PromptMode::parse("points:4"));
    const auto b = sample_prompts(disc, 5, PromptMode::parse("points:4"));
    for (std::size_t i = 0; i < 4; ++i) CHECK(a.points[i].x == b.points[i].x);
}

TEST_CASE("coarse mask prompt is a block-averaged, resampled mask") {
    const Tensor disc = disc_mask(64, 32, 32, 12);
    const auto p = sample_prompts(disc, 0, PromptMode::parse("coarse_mask"));
    REQUIRE(p.coarse_mask);
    const Tensor want = bilinear_resize(avg_pool2d(disc, kCoarseFactor), 64, 64);
    CHECK(test::max_abs_diff(p.coarse_mask->data(), want.data()) < 1e-15);
    CHECK_FALSE(p.box);
    CHECK(p.points.empty());
}

TEST_CASE("prompt mode strings round trip") {
    for (const char* s : {"box", "noisy_box", "coarse_mask", "points:3"}) CHECK(PromptMode::parse(s).str() == s);
    CHECK(PromptMode::parse("points").k == 1);
    CHECK_THROWS(PromptMode::parse("lasso"));
    CHECK_THROWS(PromptMode::parse("points:0"));
}
