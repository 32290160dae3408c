#include <algorithm>
#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sama/kernels.hpp"

namespace sama::kernels {

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace parallel {

using idx = std::int64_t;

void gemm(const Gemm& g, std::span<const double> a, std::span<const double> b, std::span<double> c) {
    const auto [m, k, n] = g.dims;
    if (g.trans_b) {
#pragma omp parallel for schedule(static)
        for (idx i = 0; i < static_cast<idx>(m); ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const double* brow = b.data() + j * k;
                double s = 0.0;
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = g.trans_a ? a[p * m + i] : a[i * k + p];
                    s += av * brow[p];
                }
                c[i * n + j] = s;
            }
        }
        return;
    }
#pragma omp parallel for schedule(static)
    for (idx i = 0; i < static_cast<idx>(m); ++i) {
        double* crow = c.data() + i * n;
        std::fill(crow, crow + n, 0.0);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = g.trans_a ? a[p * m + i] : a[i * k + p];
            const double* brow = b.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void conv2d_forward(const ConvDims& d, std::span<const double> in, std::span<const double> w,
                    std::span<const double> bias, std::span<double> out) {
    const auto pad = static_cast<idx>(d.k / 2);
    const auto H = static_cast<idx>(d.h);
    const auto W = static_cast<idx>(d.w);
#pragma omp parallel for schedule(static)
    for (idx row = 0; row < static_cast<idx>(d.cout) * H; ++row) {
        const auto co = static_cast<std::size_t>(row / H);
        const idx y = row % H;
        double* orow = out.data() + (co * d.h + static_cast<std::size_t>(y)) * d.w;
        std::fill(orow, orow + d.w, bias[co]);
        for (std::size_t ci = 0; ci < d.cin; ++ci) {
            for (std::size_t ky = 0; ky < d.k; ++ky) {
                const idx iy = y + static_cast<idx>(ky) - pad;
                if (iy < 0 || iy >= H) continue;
                const double* irow = in.data() + (ci * d.h + static_cast<std::size_t>(iy)) * d.w;
                for (std::size_t kx = 0; kx < d.k; ++kx) {
                    const double wv = w[((co * d.cin + ci) * d.k + ky) * d.k + kx];
                    const idx shift = static_cast<idx>(kx) - pad;
                    const idx x0 = std::max<idx>(0, -shift);
                    const idx x1 = std::min<idx>(W, W - shift);
                    for (idx x = x0; x < x1; ++x) orow[x] += wv * irow[x + shift];
                }
            }
        }
    }
}

void conv2d_backward_input(const ConvDims& d, std::span<const double> gout, std::span<const double> w,
                           std::span<double> gin) {
    const auto pad = static_cast<idx>(d.k / 2);
    const auto H = static_cast<idx>(d.h);
    const auto W = static_cast<idx>(d.w);
#pragma omp parallel for schedule(static)
    for (idx row = 0; row < static_cast<idx>(d.cin) * H; ++row) {
        const auto ci = static_cast<std::size_t>(row / H);
        const idx y = row % H;
        double* grow = gin.data() + (ci * d.h + static_cast<std::size_t>(y)) * d.w;
        std::fill(grow, grow + d.w, 0.0);
        for (std::size_t co = 0; co < d.cout; ++co) {
            for (std::size_t ky = 0; ky < d.k; ++ky) {
                const idx oy = y - static_cast<idx>(ky) + pad;
                if (oy < 0 || oy >= H) continue;
                const double* orow = gout.data() + (co * d.h + static_cast<std::size_t>(oy)) * d.w;
                for (std::size_t kx = 0; kx < d.k; ++kx) {
                    const double wv = w[((co * d.cin + ci) * d.k + ky) * d.k + kx];
                    const idx shift = pad - static_cast<idx>(kx);
                    const idx x0 = std::max<idx>(0, -shift);
                    const idx x1 = std::min<idx>(W, W - shift);
                    for (idx x = x0; x < x1; ++x) grow[x] += orow[x + shift] * wv;
                }
            }
        }
    }
}

void conv2d_backward_weight(const ConvDims& d, std::span<const double> gout, std::span<const double> in,
                            std::span<double> gw, std::span<double> gbias) {
    const auto pad = static_cast<idx>(d.k / 2);
    const auto H = static_cast<idx>(d.h);
    const auto W = static_cast<idx>(d.w);
#pragma omp parallel for schedule(static)
    for (idx co_i = 0; co_i < static_cast<idx>(d.cout); ++co_i) {
        const auto co = static_cast<std::size_t>(co_i);
        double sb = 0.0;
        for (std::size_t i = 0; i < d.h * d.w; ++i) sb += gout[co * d.h * d.w + i];
        gbias[co] = sb;
        for (std::size_t ci = 0; ci < d.cin; ++ci) {
            for (std::size_t ky = 0; ky < d.k; ++ky) {
                for (std::size_t kx = 0; kx < d.k; ++kx) {
                    double s = 0.0;
                    const idx shift = static_cast<idx>(kx) - pad;
                    const idx x0 = std::max<idx>(0, -shift);
                    const idx x1 = std::min<idx>(W, W - shift);
                    for (idx y = 0; y < H; ++y) {
                        const idx iy = y + static_cast<idx>(ky) - pad;
                        if (iy < 0 || iy >= H) continue;
                        const double* orow = gout.data() + (co * d.h + static_cast<std::size_t>(y)) * d.w;
                        const double* irow = in.data() + (ci * d.h + static_cast<std::size_t>(iy)) * d.w;
                        for (idx x = x0; x < x1; ++x) s += orow[x] * irow[x + shift];
                    }
                    gw[((co * d.cin + ci) * d.k + ky) * d.k + kx] = s;
                }
            }
        }
    }
}

void bilinear_forward(const Plane& src, std::size_t out_h, std::size_t out_w, std::span<const double> in,
                      std::span<double> out) {
    std::vector<BilinearTap> xs(out_w);
    for (std::size_t ox = 0; ox < out_w; ++ox) xs[ox] = bilinear_tap(ox, src.w, out_w);
#pragma omp parallel for schedule(static)
    for (idx row = 0; row < static_cast<idx>(src.n * out_h); ++row) {
        const auto c = static_cast<std::size_t>(row) / out_h;
        const auto oy = static_cast<std::size_t>(row) % out_h;
        const double* p = in.data() + c * src.h * src.w;
        const auto ty = bilinear_tap(oy, src.h, out_h);
        for (std::size_t ox = 0; ox < out_w; ++ox) {
            const auto& tx = xs[ox];
            const double top = (1.0 - tx.frac) * p[ty.i0 * src.w + tx.i0] + tx.frac * p[ty.i0 * src.w + tx.i1];
            const double bot = (1.0 - tx.frac) * p[ty.i1 * src.w + tx.i0] + tx.frac * p[ty.i1 * src.w + tx.i1];
            out[(c * out_h + oy) * out_w + ox] = (1.0 - ty.frac) * top + ty.frac * bot;
        }
    }
}

void bilinear_backward(const Plane& src, std::size_t out_h, std::size_t out_w, std::span<const double> gout,
                       std::span<double> gin) {
    std::vector<BilinearTap> xs(out_w);
    for (std::size_t ox = 0; ox < out_w; ++ox) xs[ox] = bilinear_tap(ox, src.w, out_w);
    // Scatter stays sequential within a plane so accumulation order is fixed.
#pragma omp parallel for schedule(static)
    for (idx ci = 0; ci < static_cast<idx>(src.n); ++ci) {
        const auto c = static_cast<std::size_t>(ci);
        double* g = gin.data() + c * src.h * src.w;
        std::fill(g, g + src.h * src.w, 0.0);
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            const auto ty = bilinear_tap(oy, src.h, out_h);
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                const auto& tx = xs[ox];
                const double go = gout[(c * out_h + oy) * out_w + ox];
                const double gt = (1.0 - ty.frac) * go;
                const double gb = ty.frac * go;
                g[ty.i0 * src.w + tx.i0] += (1.0 - tx.frac) * gt;
                g[ty.i0 * src.w + tx.i1] += tx.frac * gt;
                g[ty.i1 * src.w + tx.i0] += (1.0 - tx.frac) * gb;
                g[ty.i1 * src.w + tx.i1] += tx.frac * gb;
            }
        }
    }
}

void avg_pool_forward(const Plane& src, std::size_t k, std::span<const double> in, std::span<double> out) {
    const std::size_t oh = src.h / k, ow = src.w / k;
    const double inv = static_cast<double>(k * k);
#pragma omp parallel for schedule(static)
    for (idx row = 0; row < static_cast<idx>(src.n * oh); ++row) {
        const auto c = static_cast<std::size_t>(row) / oh;
        const auto oy = static_cast<std::size_t>(row) % oh;
        for (std::size_t ox = 0; ox < ow; ++ox) {
            double s = 0.0;
            for (std::size_t dy = 0; dy < k; ++dy)
                for (std::size_t dx = 0; dx < k; ++dx) s += in[(c * src.h + oy * k + dy) * src.w + ox * k + dx];
            out[(c * oh + oy) * ow + ox] = s / inv;
        }
    }
}

void avg_pool_backward(const Plane& src, std::size_t k, std::span<const double> gout, std::span<double> gin) {
    const std::size_t oh = src.h / k, ow = src.w / k;
    const double inv = static_cast<double>(k * k);
#pragma omp parallel for schedule(static)
    for (idx ci = 0; ci < static_cast<idx>(src.n); ++ci) {
        const auto c = static_cast<std::size_t>(ci);
        double* g = gin.data() + c * src.h * src.w;
        std::fill(g, g + src.h * src.w, 0.0);
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const double v = gout[(c * oh + oy) * ow + ox] / inv;
                for (std::size_t dy = 0; dy < k; ++dy)
                    for (std::size_t dx = 0; dx < k; ++dx) g[(oy * k + dy) * src.w + ox * k + dx] = v;
            }
    }
}

}  // namespace parallel
}  // namespace sama::kernels
