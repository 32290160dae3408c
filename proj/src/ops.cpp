#include "sama/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sama/kernels.hpp"

namespace sama {

namespace k = kernels::parallel;

namespace {

using detail::Node;

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

std::size_t trailing(const Shape& s, std::size_t from) {
    std::size_t n = 1;
    for (std::size_t i = from; i < s.size(); ++i) n *= s[i];
    return n;
}

std::size_t leading(const Shape& s, std::size_t upto) {
    std::size_t n = 1;
    for (std::size_t i = 0; i < upto; ++i) n *= s[i];
    return n;
}

void require_spatial(const Tensor& t, const char* op) {
    if (t.ndim() < 2) throw ShapeError(std::string(op) + " needs a [..., H, W] tensor, got " + shape_str(t.shape()));
}

kernels::Plane plane_of(const Shape& s) {
    const std::size_t r = s.size();
    return {leading(s, r - 2), s[r - 2], s[r - 1]};
}

// Pointwise unary op: f(x) and df/dx given (x, y).
template <class F, class D>
Tensor unary(const char* name, const Tensor& a, F f, D df) {
    auto in = a.data();
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
    return make_result(name, a.shape(), std::move(out), {a}, [df](Node& self) {
        auto& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(p.data[i], self.data[i]);
    });
}

enum class Bin { add, sub, mul, div };

Tensor binary(const char* name, const Tensor& a, const Tensor& b, Bin op) {
    const bool same = a.shape() == b.shape();
    const bool a_scalar = a.numel() == 1;
    const bool b_scalar = b.numel() == 1;
    if (!same && !a_scalar && !b_scalar)
        throw ShapeError(std::string(name) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    const Shape out_shape = same ? a.shape() : (a_scalar ? b.shape() : a.shape());
    const std::size_t n = numel_of(out_shape);
    const std::size_t sa = (a.numel() == n) ? 1 : 0;
    const std::size_t sb = (b.numel() == n) ? 1 : 0;
    auto x = a.data();
    auto y = b.data();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = x[i * sa], v = y[i * sb];
        switch (op) {
            case Bin::add: out[i] = u + v; break;
            case Bin::sub: out[i] = u - v; break;
            case Bin::mul: out[i] = u * v; break;
            case Bin::div: out[i] = u / v; break;
        }
    }
    return make_result(name, out_shape, std::move(out), {a, b}, [op, sa, sb, n](Node& self) {
        auto& pa = parent(self, 0);
        auto& pb = parent(self, 1);
        if (pa.requires_grad) {
            auto& g = pa.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                double d = 1.0;
                if (op == Bin::mul) d = pb.data[i * sb];
                if (op == Bin::div) d = 1.0 / pb.data[i * sb];
                g[i * sa] += self.grad[i] * d;
            }
        }
        if (pb.requires_grad) {
            auto& g = pb.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                double d = 1.0;
                if (op == Bin::sub) d = -1.0;
                if (op == Bin::mul) d = pa.data[i * sa];
                if (op == Bin::div) {
                    const double v = pb.data[i * sb];
                    d = -pa.data[i * sa] / (v * v);
                }
                g[i * sb] += self.grad[i] * d;
            }
        }
    });
}

}  // namespace

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2)
        throw ShapeError("matmul needs 2-D operands, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    const std::size_t m = a.dim(0), kk = a.dim(1), n = b.dim(1);
    if (b.dim(0) != kk)
        throw ShapeError("matmul inner dims differ: " + shape_str(a.shape()) + " . " + shape_str(b.shape()));
    std::vector<double> out(m * n);
    k::gemm({{m, kk, n}}, a.data(), b.data(), out);
    return make_result("matmul", {m, n}, std::move(out), {a, b}, [m, kk, n](Node& self) {
        auto& pa = parent(self, 0);
        auto& pb = parent(self, 1);
        if (pa.requires_grad) {
            std::vector<double> tmp(m * kk);
            k::gemm({{m, n, kk}, false, true}, self.grad, pb.data, tmp);  // dC . B^T
            auto& g = pa.ensure_grad();
            for (std::size_t i = 0; i < tmp.size(); ++i) g[i] += tmp[i];
        }
        if (pb.requires_grad) {
            std::vector<double> tmp(kk * n);
            k::gemm({{kk, m, n}, true, false}, pa.data, self.grad, tmp);  // A^T . dC
            auto& g = pb.ensure_grad();
            for (std::size_t i = 0; i < tmp.size(); ++i) g[i] += tmp[i];
        }
    });
}

Tensor transpose(const Tensor& a) {
    if (a.ndim() != 2) throw ShapeError("transpose needs a 2-D tensor, got " + shape_str(a.shape()));
    const std::size_t r = a.dim(0), c = a.dim(1);
    auto in = a.data();
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
    return make_result("transpose", {c, r}, std::move(out), {a}, [r, c](Node& self) {
        auto& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (numel_of(shape) != a.numel())
        throw ShapeError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape) + " changes element count");
    std::vector<double> out(a.data().begin(), a.data().end());
    return make_result("reshape", std::move(shape), std::move(out), {a}, [](Node& self) {
        auto& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", a, b, Bin::add); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", a, b, Bin::sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", a, b, Bin::mul); }
Tensor div(const Tensor& a, const Tensor& b) { return binary("div", a, b, Bin::div); }

Tensor neg(const Tensor& a) {
    return unary("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& a, double s) {
    return unary("scale", a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
    return unary("add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor rsub_scalar(double s, const Tensor& a) {
    return unary("rsub_scalar", a, [s](double x) { return s - x; }, [](double, double) { return -1.0; });
}

Tensor sigmoid(const Tensor& a) {
    return unary(
        "sigmoid", a,
        [](double x) {
            if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Tensor gelu(const Tensor& a) {
    return unary(
        "gelu", a,
        [](double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); },
        [](double x, double) {
            const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
            return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
        });
}

Tensor exp(const Tensor& a) {
    return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor abs(const Tensor& a) {
    return unary("abs", a, [](double x) { return std::fabs(x); },
                 [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor sqrt(const Tensor& a) {
    return unary("sqrt", a, [](double x) { return std::sqrt(x); },
                 [](double, double y) { return y > 0 ? 0.5 / y : 0.0; });
}

Tensor square(const Tensor& a) {
    return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    if (lo > hi) throw ParameterError("clamp bounds reversed");
    return unary("clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
                 [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
    const std::size_t n = x.shape().back();
    if (v.numel() != n)
        throw ShapeError("add_rowvec: vector of " + std::to_string(v.numel()) + " for rows of " + std::to_string(n));
    const std::size_t rows = x.numel() / n;
    auto xd = x.data();
    auto vd = v.data();
    std::vector<double> out(x.numel());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) out[r * n + j] = xd[r * n + j] + vd[j];
    return make_result("add_rowvec", x.shape(), std::move(out), {x, v}, [rows, n](Node& self) {
        auto& px = parent(self, 0);
        auto& pv = parent(self, 1);
        if (px.requires_grad) {
            auto& g = px.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pv.requires_grad) {
            auto& g = pv.ensure_grad();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[r * n + j];
        }
    });
}

// ---------------------------------------------------------------------------

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return make_result("sum", {1}, {s}, {a}, [](Node& self) {
        auto& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (auto& v : g) v += self.grad[0];
    });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor sum_last(const Tensor& a) {
    const std::size_t n = a.shape().back();
    const std::size_t rows = a.numel() / n;
    Shape out_shape(a.shape().begin(), a.shape().end() - 1);
    if (out_shape.empty()) out_shape = {1};
    auto in = a.data();
    std::vector<double> out(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += in[r * n + j];
        out[r] = s;
    }
    return make_result("sum_last", std::move(out_shape), std::move(out), {a}, [rows, n](Node& self) {
        auto& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j) g[r * n + j] += self.grad[r];
    });
}

Tensor softmax(const Tensor& a, std::size_t axis) {
    if (axis >= a.ndim()) throw ShapeError("softmax axis out of range for " + shape_str(a.shape()));
    const std::size_t len = a.dim(axis);
    const std::size_t outer = leading(a.shape(), axis);
    const std::size_t inner = trailing(a.shape(), axis + 1);
    auto in = a.data();
    std::vector<double> out(a.numel());
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t base = o * len * inner + i;
            double mx = in[base];
            for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, in[base + j * inner]);
            double z = 0.0;
            for (std::size_t j = 0; j < len; ++j) {
                const double e = std::exp(in[base + j * inner] - mx);
                out[base + j * inner] = e;
                z += e;
            }
            for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= z;
        }
    return make_result("softmax", a.shape(), std::move(out), {a}, [outer, inner, len](Node& self) {
        auto& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < inner; ++i) {
                const std::size_t base = o * len * inner + i;
                double dot = 0.0;
                for (std::size_t j = 0; j < len; ++j) dot += self.grad[base + j * inner] * self.data[base + j * inner];
                for (std::size_t j = 0; j < len; ++j) {
                    const std::size_t idx = base + j * inner;
                    g[idx] += self.data[idx] * (self.grad[idx] - dot);
                }
            }
    });
}

// ---------------------------------------------------------------------------

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat of zero tensors");
    const Shape& ref = parts[0].shape();
    if (axis >= ref.size()) throw ShapeError("concat axis out of range for " + shape_str(ref));
    Shape out_shape = ref;
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == ref.size();
        for (std::size_t d = 0; ok && d < s.size(); ++d)
            if (d != axis && s[d] != ref[d]) ok = false;
        if (!ok) throw ShapeError("concat: " + shape_str(s) + " incompatible with " + shape_str(ref));
        out_shape[axis] += s[axis];
    }
    const std::size_t outer = leading(ref, axis);
    const std::size_t inner = trailing(ref, axis + 1);
    const std::size_t row = out_shape[axis] * inner;
    std::vector<double> out(numel_of(out_shape));
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        const std::size_t block = p.dim(axis) * inner;
        auto d = p.data();
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(o * block), block,
                        out.begin() + static_cast<std::ptrdiff_t>(o * row + off));
        off += block;
    }
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    return make_result("concat", std::move(out_shape), std::move(out), std::move(inputs),
                       [outer, row, offsets](Node& self) {
                           for (std::size_t i = 0; i < self.parents.size(); ++i) {
                               auto& p = parent(self, i);
                               if (!p.requires_grad) continue;
                               auto& g = p.ensure_grad();
                               const std::size_t block = g.size() / outer;
                               for (std::size_t o = 0; o < outer; ++o)
                                   for (std::size_t j = 0; j < block; ++j)
                                       g[o * block + j] += self.grad[o * row + offsets[i] + j];
                           }
                       });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t len) {
    if (axis >= a.ndim()) throw ShapeError("slice axis out of range for " + shape_str(a.shape()));
    if (len == 0 || start + len > a.dim(axis))
        throw ShapeError("slice [" + std::to_string(start) + ", +" + std::to_string(len) + ") out of range for " +
                         shape_str(a.shape()));
    Shape out_shape = a.shape();
    out_shape[axis] = len;
    const std::size_t outer = leading(a.shape(), axis);
    const std::size_t inner = trailing(a.shape(), axis + 1);
    const std::size_t src_row = a.dim(axis) * inner;
    const std::size_t block = len * inner;
    const std::size_t off = start * inner;
    auto in = a.data();
    std::vector<double> out(outer * block);
    for (std::size_t o = 0; o < outer; ++o)
        std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(o * src_row + off), block,
                    out.begin() + static_cast<std::ptrdiff_t>(o * block));
    return make_result("slice", std::move(out_shape), std::move(out), {a}, [outer, src_row, block, off](Node& self) {
        auto& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t j = 0; j < block; ++j) g[o * src_row + off + j] += self.grad[o * block + j];
    });
}

Tensor stack(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("stack of zero tensors");
    std::vector<Tensor> lifted;
    lifted.reserve(parts.size());
    for (const auto& p : parts) {
        if (p.shape() != parts[0].shape())
            throw ShapeError("stack: " + shape_str(p.shape()) + " differs from " + shape_str(parts[0].shape()));
        Shape s{1};
        s.insert(s.end(), p.shape().begin(), p.shape().end());
        lifted.push_back(reshape(p, std::move(s)));
    }
    return concat(lifted, 0);
}

Tensor select(const Tensor& a, std::size_t index) {
    if (a.ndim() < 2) throw ShapeError("select needs rank >= 2, got " + shape_str(a.shape()));
    Shape rest(a.shape().begin() + 1, a.shape().end());
    return reshape(slice(a, 0, index, 1), std::move(rest));
}

// ---------------------------------------------------------------------------

Tensor bilinear_resize(const Tensor& t, std::size_t out_h, std::size_t out_w) {
    require_spatial(t, "bilinear_resize");
    if (out_h == 0 || out_w == 0) throw ShapeError("bilinear_resize target dims must be >= 1");
    const auto pl = plane_of(t.shape());
    Shape out_shape = t.shape();
    out_shape[out_shape.size() - 2] = out_h;
    out_shape[out_shape.size() - 1] = out_w;
    std::vector<double> out(pl.n * out_h * out_w);
    k::bilinear_forward(pl, out_h, out_w, t.data(), out);
    return make_result("bilinear_resize", std::move(out_shape), std::move(out), {t}, [pl, out_h, out_w](Node& self) {
        auto& p = parent(self, 0);
        if (!p.requires_grad) return;
        std::vector<double> tmp(p.data.size());
        k::bilinear_backward(pl, out_h, out_w, self.grad, tmp);
        auto& g = p.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += tmp[i];
    });
}

Tensor avg_pool2d(const Tensor& t, std::size_t kernel) {
    require_spatial(t, "avg_pool2d");
    const auto pl = plane_of(t.shape());
    if (kernel == 0 || kernel > std::min(pl.h, pl.w))
        throw ParameterError("avg_pool2d kernel " + std::to_string(kernel) + " invalid for " + shape_str(t.shape()));
    Shape out_shape = t.shape();
    out_shape[out_shape.size() - 2] = pl.h / kernel;
    out_shape[out_shape.size() - 1] = pl.w / kernel;
    std::vector<double> out(numel_of(out_shape));
    k::avg_pool_forward(pl, kernel, t.data(), out);
    return make_result("avg_pool2d", std::move(out_shape), std::move(out), {t}, [pl, kernel](Node& self) {
        auto& p = parent(self, 0);
        if (!p.requires_grad) return;
        std::vector<double> tmp(p.data.size());
        k::avg_pool_backward(pl, kernel, self.grad, tmp);
        auto& g = p.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += tmp[i];
    });
}

Tensor conv2d(const Tensor& t, const Tensor& weight, const Tensor& bias) {
    if (t.ndim() < 3) throw ShapeError("conv2d needs [..., Cin, H, W], got " + shape_str(t.shape()));
    if (weight.ndim() != 4) throw ShapeError("conv2d weight must be [Cout, Cin, k, k]");
    const std::size_t r = t.ndim();
    const std::size_t cin = t.dim(r - 3), h = t.dim(r - 2), w = t.dim(r - 1);
    const std::size_t cout = weight.dim(0), ks = weight.dim(2);
    if (ks != weight.dim(3) || (ks != 1 && ks != 3))
        throw ParameterError("conv2d supports 1x1 and 3x3 kernels, got " + shape_str(weight.shape()));
    if (weight.dim(1) != cin)
        throw ShapeError("conv2d channel mismatch: input " + shape_str(t.shape()) + ", weight " +
                         shape_str(weight.shape()));
    if (bias.numel() != cout) throw ShapeError("conv2d bias length must equal Cout");
    const std::size_t batch = leading(t.shape(), r - 3);
    const kernels::ConvDims d{cin, cout, h, w, ks};
    const std::size_t in_sz = cin * h * w, out_sz = cout * h * w;
    Shape out_shape = t.shape();
    out_shape[r - 3] = cout;
    std::vector<double> out(batch * out_sz);
    auto in = t.data();
    for (std::size_t b = 0; b < batch; ++b)
        k::conv2d_forward(d, in.subspan(b * in_sz, in_sz), weight.data(), bias.data(),
                          std::span<double>(out).subspan(b * out_sz, out_sz));
    return make_result("conv2d", std::move(out_shape), std::move(out), {t, weight, bias},
                       [d, batch, in_sz, out_sz](Node& self) {
                           auto& px = parent(self, 0);
                           auto& pw = parent(self, 1);
                           auto& pb = parent(self, 2);
                           std::span<const double> gout(self.grad);
                           if (px.requires_grad) {
                               auto& g = px.ensure_grad();
                               std::vector<double> tmp(in_sz);
                               for (std::size_t b = 0; b < batch; ++b) {
                                   k::conv2d_backward_input(d, gout.subspan(b * out_sz, out_sz), pw.data, tmp);
                                   for (std::size_t i = 0; i < in_sz; ++i) g[b * in_sz + i] += tmp[i];
                               }
                           }
                           if (pw.requires_grad || pb.requires_grad) {
                               std::vector<double> gw(pw.data.size()), gb(pb.data.size());
                               std::span<const double> xin(px.data);
                               for (std::size_t b = 0; b < batch; ++b) {
                                   k::conv2d_backward_weight(d, gout.subspan(b * out_sz, out_sz),
                                                             xin.subspan(b * in_sz, in_sz), gw, gb);
                                   if (pw.requires_grad) {
                                       auto& g = pw.ensure_grad();
                                       for (std::size_t i = 0; i < gw.size(); ++i) g[i] += gw[i];
                                   }
                                   if (pb.requires_grad) {
                                       auto& g = pb.ensure_grad();
                                       for (std::size_t i = 0; i < gb.size(); ++i) g[i] += gb[i];
                                   }
                               }
                           }
                       });
}

Tensor crop2d(const Tensor& t, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
    require_spatial(t, "crop2d");
    const std::size_t r = t.ndim();
    return slice(slice(t, r - 2, y0, h), r - 1, x0, w);
}

namespace {

// Maps padded coordinate to source coordinate; -1 means zero padding.
std::ptrdiff_t pad_source(std::ptrdiff_t i, std::ptrdiff_t n, PadMode mode) {
    if (i >= 0 && i < n) return i;
    switch (mode) {
        case PadMode::zero: return -1;
        case PadMode::replicate: return std::clamp<std::ptrdiff_t>(i, 0, n - 1);
        case PadMode::reflect: return i < 0 ? -i : 2 * (n - 1) - i;
    }
    return -1;
}

}  // namespace

Tensor pad2d(const Tensor& t, std::size_t pad, PadMode mode) {
    require_spatial(t, "pad2d");
    const auto pl = plane_of(t.shape());
    if (mode == PadMode::reflect && (pad >= pl.h || pad >= pl.w))
        throw ParameterError("reflect padding " + std::to_string(pad) + " too large for " + shape_str(t.shape()));
    const std::size_t oh = pl.h + 2 * pad, ow = pl.w + 2 * pad;
    std::vector<std::ptrdiff_t> src(oh * ow);
    for (std::size_t y = 0; y < oh; ++y) {
        const auto sy = pad_source(static_cast<std::ptrdiff_t>(y) - static_cast<std::ptrdiff_t>(pad),
                                   static_cast<std::ptrdiff_t>(pl.h), mode);
        for (std::size_t x = 0; x < ow; ++x) {
            const auto sx = pad_source(static_cast<std::ptrdiff_t>(x) - static_cast<std::ptrdiff_t>(pad),
                                       static_cast<std::ptrdiff_t>(pl.w), mode);
            src[y * ow + x] = (sy < 0 || sx < 0) ? -1 : sy * static_cast<std::ptrdiff_t>(pl.w) + sx;
        }
    }
    auto in = t.data();
    std::vector<double> out(pl.n * oh * ow, 0.0);
    for (std::size_t c = 0; c < pl.n; ++c)
        for (std::size_t i = 0; i < oh * ow; ++i)
            if (src[i] >= 0) out[c * oh * ow + i] = in[c * pl.h * pl.w + static_cast<std::size_t>(src[i])];
    Shape out_shape = t.shape();
    out_shape[out_shape.size() - 2] = oh;
    out_shape[out_shape.size() - 1] = ow;
    return make_result("pad2d", std::move(out_shape), std::move(out), {t}, [pl, oh, ow, src](Node& self) {
        auto& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (std::size_t c = 0; c < pl.n; ++c)
            for (std::size_t i = 0; i < oh * ow; ++i)
                if (src[i] >= 0) g[c * pl.h * pl.w + static_cast<std::size_t>(src[i])] += self.grad[c * oh * ow + i];
    });
}

Tensor filter2d(const Tensor& t, const Filter2d& f) {
    require_spatial(t, "filter2d");
    const auto pl = plane_of(t.shape());
    if (f.taps.size() != f.h * f.w) throw ParameterError("filter2d taps do not match its size");
    if (f.h > pl.h || f.w > pl.w)
        throw ParameterError("filter2d window " + std::to_string(f.h) + "x" + std::to_string(f.w) +
                             " larger than image " + shape_str(t.shape()));
    const std::size_t oh = pl.h - f.h + 1, ow = pl.w - f.w + 1;
    auto in = t.data();
    std::vector<double> out(pl.n * oh * ow);
    for (std::size_t c = 0; c < pl.n; ++c)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
                double s = 0.0;
                for (std::size_t dy = 0; dy < f.h; ++dy)
                    for (std::size_t dx = 0; dx < f.w; ++dx)
                        s += f.taps[dy * f.w + dx] * in[(c * pl.h + y + dy) * pl.w + x + dx];
                out[(c * oh + y) * ow + x] = s;
            }
    Shape out_shape = t.shape();
    out_shape[out_shape.size() - 2] = oh;
    out_shape[out_shape.size() - 1] = ow;
    return make_result("filter2d", std::move(out_shape), std::move(out), {t}, [pl, oh, ow, f](Node& self) {
        auto& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (std::size_t c = 0; c < pl.n; ++c)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t x = 0; x < ow; ++x) {
                    const double go = self.grad[(c * oh + y) * ow + x];
                    for (std::size_t dy = 0; dy < f.h; ++dy)
                        for (std::size_t dx = 0; dx < f.w; ++dx)
                            g[(c * pl.h + y + dy) * pl.w + x + dx] += f.taps[dy * f.w + dx] * go;
                }
    });
}

Tensor downsample2(const Tensor& t) {
    require_spatial(t, "downsample2");
    const auto pl = plane_of(t.shape());
    const std::size_t oh = (pl.h + 1) / 2, ow = (pl.w + 1) / 2;
    auto in = t.data();
    std::vector<double> out(pl.n * oh * ow);
    for (std::size_t c = 0; c < pl.n; ++c)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) out[(c * oh + y) * ow + x] = in[(c * pl.h + 2 * y) * pl.w + 2 * x];
    Shape out_shape = t.shape();
    out_shape[out_shape.size() - 2] = oh;
    out_shape[out_shape.size() - 1] = ow;
    return make_result("downsample2", std::move(out_shape), std::move(out), {t}, [pl, oh, ow](Node& self) {
        auto& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (std::size_t c = 0; c < pl.n; ++c)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t x = 0; x < ow; ++x)
                    g[(c * pl.h + 2 * y) * pl.w + 2 * x] += self.grad[(c * oh + y) * ow + x];
    });
}

Tensor upsample_zero2(const Tensor& t) {
    require_spatial(t, "upsample_zero2");
    const auto pl = plane_of(t.shape());
    const std::size_t oh = 2 * pl.h, ow = 2 * pl.w;
    auto in = t.data();
    std::vector<double> out(pl.n * oh * ow, 0.0);
    for (std::size_t c = 0; c < pl.n; ++c)
        for (std::size_t y = 0; y < pl.h; ++y)
            for (std::size_t x = 0; x < pl.w; ++x) out[(c * oh + 2 * y) * ow + 2 * x] = in[(c * pl.h + y) * pl.w + x];
    Shape out_shape = t.shape();
    out_shape[out_shape.size() - 2] = oh;
    out_shape[out_shape.size() - 1] = ow;
    return make_result("upsample_zero2", std::move(out_shape), std::move(out), {t}, [pl, oh, ow](Node& self) {
        auto& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (std::size_t c = 0; c < pl.n; ++c)
            for (std::size_t y = 0; y < pl.h; ++y)
                for (std::size_t x = 0; x < pl.w; ++x)
                    g[(c * pl.h + y) * pl.w + x] += self.grad[(c * oh + 2 * y) * ow + 2 * x];
    });
}

// ---------------------------------------------------------------------------

namespace {

// Normalizes groups of elements. Element e belongs to group group_of(e) and
// has affine index affine_of(e) into gamma/beta.
struct NormLayout {
    std::size_t groups;
    std::vector<std::vector<std::size_t>> members;  // indices per group
    std::vector<std::size_t> affine;                // per element
};

Tensor normalize(const char* name, const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                 NormLayout layout) {
    auto xd = x.data();
    auto gd = gamma.data();
    auto bd = beta.data();
    std::vector<double> xhat(x.numel());
    std::vector<double> inv_std(layout.groups);
    std::vector<double> out(x.numel());
    for (std::size_t gi = 0; gi < layout.groups; ++gi) {
        const auto& m = layout.members[gi];
        double mu = 0.0;
        for (auto e : m) mu += xd[e];
        mu /= static_cast<double>(m.size());
        double var = 0.0;
        for (auto e : m) var += (xd[e] - mu) * (xd[e] - mu);
        var /= static_cast<double>(m.size());
        inv_std[gi] = 1.0 / std::sqrt(var + eps);
        for (auto e : m) {
            xhat[e] = (xd[e] - mu) * inv_std[gi];
            out[e] = xhat[e] * gd[layout.affine[e]] + bd[layout.affine[e]];
        }
    }
    return make_result(name, x.shape(), std::move(out), {x, gamma, beta},
                       [layout = std::move(layout), xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                           auto& px = parent(self, 0);
                           auto& pg = parent(self, 1);
                           auto& pb = parent(self, 2);
                           if (pg.requires_grad) {
                               auto& g = pg.ensure_grad();
                               for (std::size_t e = 0; e < xhat.size(); ++e)
                                   g[layout.affine[e]] += self.grad[e] * xhat[e];
                           }
                           if (pb.requires_grad) {
                               auto& g = pb.ensure_grad();
                               for (std::size_t e = 0; e < xhat.size(); ++e) g[layout.affine[e]] += self.grad[e];
                           }
                           if (!px.requires_grad) return;
                           auto& g = px.ensure_grad();
                           for (std::size_t gi = 0; gi < layout.groups; ++gi) {
                               const auto& m = layout.members[gi];
                               const double n = static_cast<double>(m.size());
                               double s1 = 0.0, s2 = 0.0;
                               for (auto e : m) {
                                   const double dxh = self.grad[e] * pg.data[layout.affine[e]];
                                   s1 += dxh;
                                   s2 += dxh * xhat[e];
                               }
                               for (auto e : m) {
                                   const double dxh = self.grad[e] * pg.data[layout.affine[e]];
                                   g[e] += inv_std[gi] * (dxh - s1 / n - xhat[e] * s2 / n);
                               }
                           }
                       });
}

}  // namespace

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const std::size_t d = x.shape().back();
    if (gamma.numel() != d || beta.numel() != d) throw ShapeError("layer_norm affine size must match last dim");
    const std::size_t rows = x.numel() / d;
    NormLayout layout{rows, std::vector<std::vector<std::size_t>>(rows), std::vector<std::size_t>(x.numel())};
    for (std::size_t r = 0; r < rows; ++r) {
        layout.members[r].resize(d);
        for (std::size_t j = 0; j < d; ++j) {
            layout.members[r][j] = r * d + j;
            layout.affine[r * d + j] = j;
        }
    }
    return normalize("layer_norm", x, gamma, beta, eps, std::move(layout));
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (x.ndim() != 3 && x.ndim() != 4) throw ShapeError("batch_norm needs [B,C,H,W] or [C,H,W]");
    const std::size_t r = x.ndim();
    const std::size_t c = x.dim(r - 3);
    const std::size_t hw = x.dim(r - 2) * x.dim(r - 1);
    const std::size_t b = r == 4 ? x.dim(0) : 1;
    if (gamma.numel() != c || beta.numel() != c) throw ShapeError("batch_norm affine size must match channels");
    NormLayout layout{c, std::vector<std::vector<std::size_t>>(c), std::vector<std::size_t>(x.numel())};
    for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t i = 0; i < hw; ++i) {
                const std::size_t e = (bi * c + ci) * hw + i;
                layout.members[ci].push_back(e);
                layout.affine[e] = ci;
            }
    return normalize("batch_norm", x, gamma, beta, eps, std::move(layout));
}

}  // namespace sama
