#include <algorithm>
#include <cmath>

#include "sama/kernels.hpp"

namespace sama::kernels {

BilinearTap bilinear_tap(std::size_t dst, std::size_t in_size, std::size_t out_size) {
    const double scale = static_cast<double>(in_size) / static_cast<double>(out_size);
    double src = (static_cast<double>(dst) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    auto i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > in_size - 1) i0 = in_size - 1;
    const std::size_t i1 = std::min(i0 + 1, in_size - 1);
    const double frac = (i1 == i0) ? 0.0 : src - static_cast<double>(i0);
    return {i0, i1, frac};
}

namespace serial {

void gemm(const Gemm& g, std::span<const double> a, std::span<const double> b, std::span<double> c) {
    const auto [m, k, n] = g.dims;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = g.trans_a ? a[p * m + i] : a[i * k + p];
                const double bv = g.trans_b ? b[j * k + p] : b[p * n + j];
                s += av * bv;
            }
            c[i * n + j] = s;
        }
    }
}

void conv2d_forward(const ConvDims& d, std::span<const double> in, std::span<const double> w,
                    std::span<const double> bias, std::span<double> out) {
    const auto pad = static_cast<std::ptrdiff_t>(d.k / 2);
    const auto H = static_cast<std::ptrdiff_t>(d.h);
    const auto W = static_cast<std::ptrdiff_t>(d.w);
    for (std::size_t co = 0; co < d.cout; ++co) {
        for (std::ptrdiff_t y = 0; y < H; ++y) {
            for (std::ptrdiff_t x = 0; x < W; ++x) {
                double s = bias[co];
                for (std::size_t ci = 0; ci < d.cin; ++ci) {
                    for (std::size_t ky = 0; ky < d.k; ++ky) {
                        const std::ptrdiff_t iy = y + static_cast<std::ptrdiff_t>(ky) - pad;
                        if (iy < 0 || iy >= H) continue;
                        for (std::size_t kx = 0; kx < d.k; ++kx) {
                            const std::ptrdiff_t ix = x + static_cast<std::ptrdiff_t>(kx) - pad;
                            if (ix < 0 || ix >= W) continue;
                            s += w[((co * d.cin + ci) * d.k + ky) * d.k + kx] *
                                 in[(ci * d.h + static_cast<std::size_t>(iy)) * d.w + static_cast<std::size_t>(ix)];
                        }
                    }
                }
                out[(co * d.h + static_cast<std::size_t>(y)) * d.w + static_cast<std::size_t>(x)] = s;
            }
        }
    }
}

void conv2d_backward_input(const ConvDims& d, std::span<const double> gout, std::span<const double> w,
                           std::span<double> gin) {
    const auto pad = static_cast<std::ptrdiff_t>(d.k / 2);
    const auto H = static_cast<std::ptrdiff_t>(d.h);
    const auto W = static_cast<std::ptrdiff_t>(d.w);
    for (std::size_t ci = 0; ci < d.cin; ++ci) {
        for (std::ptrdiff_t y = 0; y < H; ++y) {
            for (std::ptrdiff_t x = 0; x < W; ++x) {
                double s = 0.0;
                for (std::size_t co = 0; co < d.cout; ++co) {
                    for (std::size_t ky = 0; ky < d.k; ++ky) {
                        const std::ptrdiff_t oy = y - static_cast<std::ptrdiff_t>(ky) + pad;
                        if (oy < 0 || oy >= H) continue;
                        for (std::size_t kx = 0; kx < d.k; ++kx) {
                            const std::ptrdiff_t ox = x - static_cast<std::ptrdiff_t>(kx) + pad;
                            if (ox < 0 || ox >= W) continue;
                            s += gout[(co * d.h + static_cast<std::size_t>(oy)) * d.w + static_cast<std::size_t>(ox)] *
                                 w[((co * d.cin + ci) * d.k + ky) * d.k + kx];
                        }
                    }
                }
                gin[(ci * d.h + static_cast<std::size_t>(y)) * d.w + static_cast<std::size_t>(x)] = s;
            }
        }
    }
}

void conv2d_backward_weight(const ConvDims& d, std::span<const double> gout, std::span<const double> in,
                            std::span<double> gw, std::span<double> gbias) {
    const auto pad = static_cast<std::ptrdiff_t>(d.k / 2);
    const auto H = static_cast<std::ptrdiff_t>(d.h);
    const auto W = static_cast<std::ptrdiff_t>(d.w);
    for (std::size_t co = 0; co < d.cout; ++co) {
        double sb = 0.0;
        for (std::size_t i = 0; i < d.h * d.w; ++i) sb += gout[co * d.h * d.w + i];
        gbias[co] = sb;
        for (std::size_t ci = 0; ci < d.cin; ++ci) {
            for (std::size_t ky = 0; ky < d.k; ++ky) {
                for (std::size_t kx = 0; kx < d.k; ++kx) {
                    double s = 0.0;
                    for (std::ptrdiff_t y = 0; y < H; ++y) {
                        const std::ptrdiff_t iy = y + static_cast<std::ptrdiff_t>(ky) - pad;
                        if (iy < 0 || iy >= H) continue;
                        for (std::ptrdiff_t x = 0; x < W; ++x) {
                            const std::ptrdiff_t ix = x + static_cast<std::ptrdiff_t>(kx) - pad;
                            if (ix < 0 || ix >= W) continue;
                            s += gout[(co * d.h + static_cast<std::size_t>(y)) * d.w + static_cast<std::size_t>(x)] *
                                 in[(ci * d.h + static_cast<std::size_t>(iy)) * d.w + static_cast<std::size_t>(ix)];
                        }
                    }
                    gw[((co * d.cin + ci) * d.k + ky) * d.k + kx] = s;
                }
            }
        }
    }
}

void bilinear_forward(const Plane& src, std::size_t out_h, std::size_t out_w, std::span<const double> in,
                      std::span<double> out) {
    for (std::size_t c = 0; c < src.n; ++c) {
        const double* p = in.data() + c * src.h * src.w;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            const auto ty = bilinear_tap(oy, src.h, out_h);
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                const auto tx = bilinear_tap(ox, src.w, out_w);
                const double top = (1.0 - tx.frac) * p[ty.i0 * src.w + tx.i0] + tx.frac * p[ty.i0 * src.w + tx.i1];
                const double bot = (1.0 - tx.frac) * p[ty.i1 * src.w + tx.i0] + tx.frac * p[ty.i1 * src.w + tx.i1];
                out[(c * out_h + oy) * out_w + ox] = (1.0 - ty.frac) * top + ty.frac * bot;
            }
        }
    }
}

void bilinear_backward(const Plane& src, std::size_t out_h, std::size_t out_w, std::span<const double> gout,
                       std::span<double> gin) {
    std::fill(gin.begin(), gin.end(), 0.0);
    for (std::size_t c = 0; c < src.n; ++c) {
        double* g = gin.data() + c * src.h * src.w;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            const auto ty = bilinear_tap(oy, src.h, out_h);
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                const auto tx = bilinear_tap(ox, src.w, out_w);
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
    for (std::size_t c = 0; c < src.n; ++c) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double s = 0.0;
                for (std::size_t dy = 0; dy < k; ++dy)
                    for (std::size_t dx = 0; dx < k; ++dx)
                        s += in[(c * src.h + oy * k + dy) * src.w + ox * k + dx];
                out[(c * oh + oy) * ow + ox] = s / inv;
            }
        }
    }
}

void avg_pool_backward(const Plane& src, std::size_t k, std::span<const double> gout, std::span<double> gin) {
    const std::size_t oh = src.h / k, ow = src.w / k;
    const double inv = static_cast<double>(k * k);
    std::fill(gin.begin(), gin.end(), 0.0);
    for (std::size_t c = 0; c < src.n; ++c)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const double g = gout[(c * oh + oy) * ow + ox] / inv;
                for (std::size_t dy = 0; dy < k; ++dy)
                    for (std::size_t dx = 0; dx < k; ++dx) gin[(c * src.h + oy * k + dy) * src.w + ox * k + dx] = g;
            }
}

}  // namespace serial
}  // namespace sama::kernels
