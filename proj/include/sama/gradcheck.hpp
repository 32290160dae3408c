#pragma once

#include <functional>
#include <span>
#include <string>

#include "sama/tensor.hpp"

namespace sama {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t entries = 0;
    std::string worst;  // "input[i][j] analytic=... numeric=..."

    bool ok(double tol = 1e-4) const { return max_rel_error < tol; }
};

// |a - n| / max(1, |a|, |n|)
double gradient_rel_error(double analytic, double numeric);

/// Compares reverse-mode gradients of `loss` against central differences.
///
/// `inputs` are leaves that `loss` reads; each must require grad. The loss is
/// re-evaluated twice per input entry with that entry shifted by +/- h.
GradCheckResult gradcheck(const std::function<Tensor()>& loss, std::span<Tensor> inputs, double h = 1e-5);

}  // namespace sama
