#include <doctest.h>

#include "grad_cases.hpp"

using namespace sama;

namespace {

void check_all(const std::vector<test::GradCase>& cases) {
    for (const auto& c : cases)
        for (int seed = 0; seed < test::kGradSeeds; ++seed) {
            const auto res = test::run_grad_case(c, seed);
            INFO(c.name << " seed " << seed << " " << res.worst);
            CHECK(res.ok());
        }
}

}  // namespace

TEST_CASE("every differentiable op matches central differences") { check_all(test::op_grad_cases()); }

TEST_CASE("every loss kernel matches central differences") { check_all(test::loss_grad_cases()); }

TEST_CASE("gradient relative error") {
    CHECK(gradient_rel_error(1.0, 1.0) == 0.0);
    CHECK(gradient_rel_error(0.0, 1e-6) == doctest::Approx(1e-6));
    CHECK(gradient_rel_error(200.0, 202.0) == doctest::Approx(2.0 / 202.0));
}
