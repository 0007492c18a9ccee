#include <catch2/catch_amalgamated.hpp>

#include <cbmd/core.hpp>
#include <cbmd/optimize.hpp>

#include <cmath>
#include <vector>

using namespace cbmd;
using Catch::Approx;

TEST_CASE("quadratic bowl with interior minimum") {
    auto f = [](std::span<const double> x) {
        double a = x[0] - 0.7, b = x[1] + 0.3;
        return 3.0 * a * a + 0.5 * b * b + 2.0;
    };
    std::vector<double> x0{0.0, 0.0}, lo{-2.0, -2.0}, hi{2.0, 2.0};
    auto res = minimize_box(f, x0, lo, hi);
    REQUIRE(res.converged);
    CHECK(res.x[0] == Approx(0.7).margin(1e-5));
    CHECK(res.x[1] == Approx(-0.3).margin(1e-5));
    CHECK(res.value == Approx(2.0).margin(1e-9));
}

TEST_CASE("solution clipped to an active bound") {
    auto f = [](std::span<const double> x) {
        double a = x[0] - 5.0;
        return a * a;
    };
    std::vector<double> x0{0.5}, lo{0.0}, hi{1.0};
    auto res = minimize_box(f, x0, lo, hi);
    REQUIRE(res.converged);
    CHECK(res.x[0] == Approx(1.0).margin(1e-8));
}

TEST_CASE("rosenbrock valley inside a box") {
    auto f = [](std::span<const double> x) {
        double a = 1.0 - x[0];
        double b = x[1] - x[0] * x[0];
        return a * a + 100.0 * b * b;
    };
    std::vector<double> x0{-1.2, 1.0}, lo{-2.0, -2.0}, hi{2.0, 2.0};
    BoxOptimOptions opt;
    opt.max_iter = 2000;
    opt.grad_tol = 1e-8;
    opt.rel_obj_tol = 1e-14;
    auto res = minimize_box(f, x0, lo, hi, opt);
    CHECK(res.x[0] == Approx(1.0).margin(2e-3));
    CHECK(res.x[1] == Approx(1.0).margin(4e-3));
    CHECK(res.value < 1e-5);
}

TEST_CASE("finite difference probes never leave the box") {
    // sqrt is undefined left of zero, so a careless probe would produce NaN
    auto f = [](std::span<const double> x) { return std::sqrt(x[0]); };
    std::vector<double> x0{0.5}, lo{0.0}, hi{4.0};
    auto res = minimize_box(f, x0, lo, hi);
    REQUIRE(std::isfinite(res.value));
    CHECK(res.x[0] == Approx(0.0).margin(1e-4));
    CHECK(res.value == Approx(0.0).margin(1e-2));
}

TEST_CASE("iteration budget is honored") {
    auto f = [](std::span<const double> x) {
        double s = 0.0;
        for (double v : x) s += std::cos(3.0 * v) + v * v;
        return s;
    };
    std::vector<double> x0{1.0, -1.0}, lo{-3.0, -3.0}, hi{3.0, 3.0};
    BoxOptimOptions opt;
    opt.max_iter = 3;
    auto res = minimize_box(f, x0, lo, hi, opt);
    CHECK(res.iterations <= 3);
}

TEST_CASE("monotone improvement over the start") {
    auto f = [](std::span<const double> x) {
        return std::pow(x[0] - 0.2, 4) + std::abs(x[1]) * 0.01;
    };
    std::vector<double> x0{1.5, 0.9}, lo{-2.0, -2.0}, hi{2.0, 2.0};
    auto res = minimize_box(f, x0, lo, hi);
    CHECK(res.value <= f(x0) + 1e-15);
}

TEST_CASE("bound arrays must match the start point") {
    auto f = [](std::span<const double> x) { return x[0] * x[0]; };
    std::vector<double> x0{0.5}, lo{0.0, 0.0}, hi{1.0};
    CHECK_THROWS_AS(minimize_box(f, x0, lo, hi), data_error);
}
