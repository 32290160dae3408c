// Serial reference kernels against their OpenMP counterparts.
//
//   bench_kernels [--reps N] [--threads T]

#include <CLI11.hpp>
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "sama/kernels.hpp"
#include "sama/rng.hpp"

using namespace sama;
namespace k = sama::kernels;

namespace {

std::vector<double> random_buffer(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

double best_ms(std::size_t reps, const std::function<void()>& fn) {
    double best = 1e300;
    for (std::size_t r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
}

void report(const char* name, std::size_t reps, const std::function<void()>& serial,
            const std::function<void()>& parallel) {
    const double s = best_ms(reps, serial), p = best_ms(reps, parallel);
    std::printf("%-26s %10.3f %10.3f %8.2fx\n", name, s, p, s / p);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Kernel benchmark: serial reference vs OpenMP"};
    std::size_t reps = 5;
    int threads = 0;
    app.add_option("--reps", reps, "Repetitions per kernel (best time is reported)")->check(CLI::PositiveNumber);
    app.add_option("--threads", threads, "OpenMP threads (0 keeps the runtime default)");
    CLI11_PARSE(app, argc, argv);
    if (threads > 0) omp_set_num_threads(threads);

    std::printf("threads: %d\n", k::max_threads());
    std::printf("%-26s %10s %10s %9s\n", "kernel", "serial ms", "omp ms", "speedup");

    Rng rng(1);
    {
        const k::Gemm g{{256, 256, 256}};
        const auto a = random_buffer(rng, 256 * 256), b = random_buffer(rng, 256 * 256);
        std::vector<double> c(256 * 256);
        report("gemm 256^3", reps, [&] { k::serial::gemm(g, a, b, c); }, [&] { k::parallel::gemm(g, a, b, c); });
        const k::Gemm gt{{256, 256, 256}, true, true};
        report("gemm 256^3 (A^T B^T)", reps, [&] { k::serial::gemm(gt, a, b, c); },
               [&] { k::parallel::gemm(gt, a, b, c); });
    }
    {
        const k::ConvDims d{32, 32, 64, 64, 3};
        const auto in = random_buffer(rng, 32 * 64 * 64), w = random_buffer(rng, 32 * 32 * 9),
                   bias = random_buffer(rng, 32), gout = random_buffer(rng, 32 * 64 * 64);
        std::vector<double> out(32 * 64 * 64), gw(32 * 32 * 9), gb(32);
        report("conv3x3 fwd 32ch 64^2", reps, [&] { k::serial::conv2d_forward(d, in, w, bias, out); },
               [&] { k::parallel::conv2d_forward(d, in, w, bias, out); });
        report("conv3x3 bwd-input", reps, [&] { k::serial::conv2d_backward_input(d, gout, w, out); },
               [&] { k::parallel::conv2d_backward_input(d, gout, w, out); });
        report("conv3x3 bwd-weight", reps, [&] { k::serial::conv2d_backward_weight(d, gout, in, gw, gb); },
               [&] { k::parallel::conv2d_backward_weight(d, gout, in, gw, gb); });
    }
    {
        const k::Plane p{32, 64, 64};
        const auto in = random_buffer(rng, 32 * 64 * 64), gout = random_buffer(rng, 32 * 256 * 256);
        std::vector<double> out(32 * 256 * 256), gin(32 * 64 * 64);
        report("bilinear 64->256 fwd", reps, [&] { k::serial::bilinear_forward(p, 256, 256, in, out); },
               [&] { k::parallel::bilinear_forward(p, 256, 256, in, out); });
        report("bilinear 64->256 bwd", reps, [&] { k::serial::bilinear_backward(p, 256, 256, gout, gin); },
               [&] { k::parallel::bilinear_backward(p, 256, 256, gout, gin); });
        std::vector<double> pooled(32 * 8 * 8);
        report("avg pool k=8 fwd", reps, [&] { k::serial::avg_pool_forward(p, 8, in, pooled); },
               [&] { k::parallel::avg_pool_forward(p, 8, in, pooled); });
    }
    return 0;
}
