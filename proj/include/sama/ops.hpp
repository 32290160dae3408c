#pragma once

#include <span>
#include <vector>

#include "sama/tensor.hpp"

namespace sama {

// Linear algebra ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);  // [M x K] . [K x N]
Tensor transpose(const Tensor& a);                // 2-D only
Tensor reshape(const Tensor& a, Shape shape);

// Elementwise ---------------------------------------------------------------
// Binary ops accept identical shapes, or one operand with a single element.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor rsub_scalar(double s, const Tensor& a);  // s - a

Tensor sigmoid(const Tensor& a);
Tensor gelu(const Tensor& a);  // tanh approximation
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);

// Adds a length-N vector to every row of a [..., N] tensor.
Tensor add_rowvec(const Tensor& x, const Tensor& v);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

// Reductions ----------------------------------------------------------------

Tensor sum(const Tensor& a);       // -> [1]
Tensor mean(const Tensor& a);      // -> [1]
Tensor sum_last(const Tensor& a);  // [..., N] -> [...]  ([N] -> [1])
Tensor softmax(const Tensor& a, std::size_t axis);

// Structure -----------------------------------------------------------------

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t len);
Tensor stack(std::span<const Tensor> parts);  // new leading axis
Tensor select(const Tensor& a, std::size_t index);  // drops the leading axis

// Spatial ops act on the trailing two axes [..., H, W]; leading axes are
// treated as independent planes.

Tensor bilinear_resize(const Tensor& t, std::size_t out_h, std::size_t out_w);
Tensor avg_pool2d(const Tensor& t, std::size_t k);
// t: [..., Cin, H, W], weight: [Cout, Cin, k, k], bias: [Cout]; k in {1, 3}.
Tensor conv2d(const Tensor& t, const Tensor& weight, const Tensor& bias);
Tensor crop2d(const Tensor& t, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w);

enum class PadMode { zero, replicate, reflect };
Tensor pad2d(const Tensor& t, std::size_t pad, PadMode mode);

// Fixed (non-trainable) correlation filter, valid mode.
struct Filter2d {
    std::size_t h, w;
    std::vector<double> taps;  // row-major h x w
};
Tensor filter2d(const Tensor& t, const Filter2d& f);

Tensor downsample2(const Tensor& t);     // keeps even rows/cols
Tensor upsample_zero2(const Tensor& t);  // zero insertion, 2H x 2W

// Normalization ---------------------------------------------------------------

// Per-row normalization over the trailing axis of [..., D].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
// Per-channel normalization of [B, C, H, W] (or [C, H, W] as B = 1) using the
// statistics of the current batch. With B = 1 this is instance normalization.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

}  // namespace sama
