#include "sama/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

namespace sama {

double gradient_rel_error(double analytic, double numeric) {
    const double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
    return std::fabs(analytic - numeric) / denom;
}

GradCheckResult gradcheck(const std::function<Tensor()>& loss, std::span<Tensor> inputs, double h) {
    for (auto& t : inputs) {
        if (!t.requires_grad()) throw ContractError("gradcheck inputs must require grad");
        t.zero_grad();
    }
    loss().backward();

    std::vector<std::vector<double>> analytic;
    for (auto& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());

    GradCheckResult res;
    NoGradGuard no_grad;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        auto data = inputs[i].mutable_data();
        for (std::size_t j = 0; j < data.size(); ++j) {
            const double orig = data[j];
            data[j] = orig + h;
            const double up = loss().item();
            data[j] = orig - h;
            const double down = loss().item();
            data[j] = orig;
            const double numeric = (up - down) / (2.0 * h);
            const double err = gradient_rel_error(analytic[i][j], numeric);
            ++res.entries;
            if (err > res.max_rel_error || res.worst.empty()) {
                res.max_rel_error = std::max(res.max_rel_error, err);
                if (err >= res.max_rel_error) {
                    std::ostringstream os;
                    os << "input[" << i << "][" << j << "] analytic=" << analytic[i][j] << " numeric=" << numeric;
                    res.worst = os.str();
                }
            }
        }
    }
    return res;
}

}  // namespace sama
