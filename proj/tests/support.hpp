#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "sama/gradcheck.hpp"
#include "sama/image.hpp"
#include "sama/rng.hpp"
#include "sama/tensor.hpp"

namespace sama::test {

inline std::vector<double> random_values(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0, bool grad = false) {
    const std::size_t n = numel_of(shape);
    Tensor t(std::move(shape), random_values(rng, n, lo, hi));
    t.set_requires_grad(grad);
    return t;
}

inline Tensor leaf(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    return random_tensor(rng, std::move(shape), lo, hi, true);
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline bool bit_equal(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
    return true;
}

inline GrayImage random_gray(Rng& rng, std::size_t h, std::size_t w) {
    GrayImage g(h, w);
    for (auto& v : g.v) v = rng.uniform();
    return g;
}

inline GrayImage random_binary(Rng& rng, std::size_t h, std::size_t w, double p = 0.5) {
    GrayImage g(h, w);
    for (auto& v : g.v) v = rng.uniform() < p ? 1.0 : 0.0;
    return g;
}

}  // namespace sama::test
