#pragma once

// Raw data-parallel kernels behind the tensor ops.
//
// Every kernel exists twice: `serial` is the plain reference loop nest, and
// `parallel` is the OpenMP version used by the ops. Both evaluate each output
// element with the same summation order, so their results are bit-identical
// regardless of thread count. Buffers are row-major; outputs are overwritten.

#include <cstddef>
#include <span>

namespace sama::kernels {

struct GemmDims {
    std::size_t m, k, n;
};

/// c[i,j] = sum_k opA(i,k) * opB(k,j), where opA is A (m x k) or, with
/// trans_a, the transpose of a stored (k x m) matrix; likewise for B.
struct Gemm {
    GemmDims dims;
    bool trans_a = false;
    bool trans_b = false;
};

struct ConvDims {
    std::size_t cin, cout, h, w, k;  // k in {1, 3}; zero padding k/2
};

struct Plane {
    std::size_t n, h, w;  // n independent planes of h x w
};

#define SAMA_DECLARE_KERNELS                                                                         \
    void gemm(const Gemm& g, std::span<const double> a, std::span<const double> b,                   \
              std::span<double> c);                                                                  \
    void conv2d_forward(const ConvDims& d, std::span<const double> in, std::span<const double> w,    \
                        std::span<const double> bias, std::span<double> out);                        \
    void conv2d_backward_input(const ConvDims& d, std::span<const double> gout,                     \
                               std::span<const double> w, std::span<double> gin);                    \
    void conv2d_backward_weight(const ConvDims& d, std::span<const double> gout,                    \
                                std::span<const double> in, std::span<double> gw,                    \
                                std::span<double> gbias);                                            \
    void bilinear_forward(const Plane& src, std::size_t out_h, std::size_t out_w,                    \
                          std::span<const double> in, std::span<double> out);                       \
    void bilinear_backward(const Plane& src, std::size_t out_h, std::size_t out_w,                   \
                           std::span<const double> gout, std::span<double> gin);                     \
    void avg_pool_forward(const Plane& src, std::size_t k, std::span<const double> in,               \
                          std::span<double> out);                                                    \
    void avg_pool_backward(const Plane& src, std::size_t k, std::span<const double> gout,            \
                           std::span<double> gin);

namespace serial {
SAMA_DECLARE_KERNELS
}
namespace parallel {
SAMA_DECLARE_KERNELS
}

#undef SAMA_DECLARE_KERNELS

// Bilinear source coordinate for align_corners=false sampling.
struct BilinearTap {
    std::size_t i0, i1;
    double frac;  // weight of i1; weight of i0 is 1 - frac
};
BilinearTap bilinear_tap(std::size_t dst, std::size_t in_size, std::size_t out_size);

int max_threads();

}  // namespace sama::kernels
