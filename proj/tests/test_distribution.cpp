#include <catch2/catch_amalgamated.hpp>

#include <cbmd/core.hpp>
#include <cbmd/distribution.hpp>

#include <cmath>
#include <vector>

using namespace cbmd;
using Catch::Approx;

namespace {

CbmdParams make_vm_wc(double k1, double k2, double rho1, double rho2, int q2) {
    CbmdParams p;
    p.marginals = {UnivariateCircular::von_mises(1.0, k1),
                   UnivariateCircular::von_mises(4.2, k2)};
    p.circula = CirculaParams::wrapped_cauchy({rho1, rho2}, {1, q2});
    return p;
}

CbmdParams make_trivariate() {
    CbmdParams p;
    p.marginals = {UnivariateCircular::von_mises(0.5, 2.0),
                   UnivariateCircular::wrapped_cauchy(2.0, 0.5),
                   UnivariateCircular::von_mises(4.0, 1.2)};
    p.circula = CirculaParams::wrapped_cauchy({0.4, 0.6, 0.5}, {1, -1, 1});
    return p;
}

} // namespace

TEST_CASE("dataset accessors and validation") {
    Dataset data(3, 2);
    REQUIRE(data.values.size() == 6);
    data.values = {0.1, 0.2, 1.1, 1.2, 2.1, 2.2};
    CHECK(data.row(1)[0] == Approx(1.1));
    CHECK(data.row(2)[1] == Approx(2.2));
    CHECK(data.weight(0) == Approx(1.0));
    data.weights = {1.0, 2.0, 0.5};
    CHECK(data.weight(1) == Approx(2.0));
    CHECK_NOTHROW(data.validate());
    data.weights = {1.0};
    CHECK_THROWS_AS(data.validate(), data_error);
    data.weights.clear();
    data.values.pop_back();
    CHECK_THROWS_AS(data.validate(), data_error);
}

TEST_CASE("model validation catches mismatched blocks") {
    auto p = make_vm_wc(2.0, 3.0, 0.4, 0.6, 1);
    CHECK_NOTHROW(p.validate());
    CHECK(p.dim() == 2);
    p.marginals.pop_back();
    CHECK_THROWS_AS(p.validate(), data_error);
}

TEST_CASE("uniform binding factorizes into the marginals") {
    CbmdParams p;
    p.marginals = {UnivariateCircular::von_mises(1.0, 3.0),
                   UnivariateCircular::wrapped_cauchy(2.5, 0.6),
                   UnivariateCircular::uniform()};
    p.circula = CirculaParams::uniform(3);
    RandomSource rng(3);
    for (int i = 0; i < 25; ++i) {
        std::vector<double> theta{rng.uniform(0.0, two_pi), rng.uniform(0.0, two_pi),
                                  rng.uniform(0.0, two_pi)};
        double want = 0.0;
        for (int j = 0; j < 3; ++j) want += log_pdf(p.marginals[j], theta[j]);
        CHECK(cbmd_logpdf(p, theta) == Approx(want).epsilon(1e-13));
    }
}

TEST_CASE("evaluator agrees with the free function") {
    auto p = make_trivariate();
    CbmdEvaluator ev(p);
    RandomSource rng(7);
    for (int i = 0; i < 25; ++i) {
        std::vector<double> theta{rng.uniform(0.0, two_pi), rng.uniform(0.0, two_pi),
                                  rng.uniform(0.0, two_pi)};
        CHECK(ev.logpdf(theta) == Approx(cbmd_logpdf(p, theta)).epsilon(1e-15));
    }
    std::vector<double> u(3);
    std::vector<double> theta{0.3, 1.1, 5.9};
    ev.to_circula_space(theta, u);
    for (int j = 0; j < 3; ++j) {
        CHECK(u[j] == Approx(ev.transform(j).u(theta[j])).epsilon(1e-15));
    }
}

TEST_CASE("loglik sums pointwise logpdf with weights") {
    auto p = make_vm_wc(2.0, 4.0, 0.3, 0.7, -1);
    Dataset data(4, 2);
    data.values = {0.1, 0.9, 2.2, 3.3, 4.4, 5.5, 6.0, 0.5};
    data.weights = {1.0, 2.0, 0.5, 1.5};
    double want = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        want += data.weights[i] * cbmd_logpdf(p, data.row(i));
    }
    CHECK(cbmd_loglik(p, data) == Approx(want).epsilon(1e-14));
}

TEST_CASE("probability integral transform yields uniform coordinates") {
    auto p = make_trivariate();
    RandomSource rng(11);
    auto draws = cbmd_sample(p, rng, 20000);
    auto u = pit_transform(p, draws);
    REQUIRE(u.n == draws.n);
    REQUIRE(u.d == 3);
    for (std::size_t j = 0; j < 3; ++j) {
        double c = 0.0, s = 0.0;
        for (std::size_t i = 0; i < u.n; ++i) {
            double v = u.values[i * 3 + j];
            REQUIRE(v >= 0.0);
            REQUIRE(v < two_pi);
            c += std::cos(v);
            s += std::sin(v);
        }
        double rbar = std::hypot(c / u.n, s / u.n);
        CHECK(rbar < 4.0 / std::sqrt(static_cast<double>(u.n)));
    }
}

TEST_CASE("samples reproduce the marginal moments") {
    auto p = make_trivariate();
    RandomSource rng(13);
    auto draws = cbmd_sample(p, rng, 40000);
    std::vector<double> col(draws.n);
    for (std::size_t j = 0; j < 3; ++j) {
        for (std::size_t i = 0; i < draws.n; ++i) col[i] = draws.values[i * 3 + j];
        auto m = circular_moment(col);
        CHECK(angle_difference(m.mean, p.marginals[j].mu) == Approx(0.0).margin(0.03));
        CHECK(m.rbar == Approx(mean_resultant(p.marginals[j])).margin(0.01));
    }
}

TEST_CASE("joint density integrates to one") {
    auto p = make_vm_wc(2.0, 3.5, 0.45, 0.7, -1);
    const int n = 256;
    double h = two_pi / n;
    auto grid = grid_density2(p, n);
    REQUIRE(grid.size() == static_cast<std::size_t>(n) * n);
    double mass = deterministic_sum(grid) * h * h;
    CHECK(mass == Approx(1.0).epsilon(1e-6));
}

TEST_CASE("grid density matches pointwise evaluation") {
    auto p = make_vm_wc(1.5, 2.5, 0.35, 0.6, 1);
    const int n = 32;
    double h = two_pi / n;
    auto grid = grid_density2(p, n);
    for (int i : {0, 5, 17, 31}) {
        for (int j : {2, 11, 30}) {
            std::vector<double> theta{(i + 0.5) * h, (j + 0.5) * h};
            CHECK(grid[static_cast<std::size_t>(i) * n + j] ==
                  Approx(std::exp(cbmd_logpdf(p, theta))).epsilon(1e-12));
        }
    }
    auto p3 = make_trivariate();
    CHECK_THROWS_AS(grid_density2(p3, 32), data_error);
}

TEST_CASE("trivariate grid mean recovers unit mass") {
    auto p = make_trivariate();
    double mean = grid_density_mean3(p, 64);
    CHECK(mean * two_pi * two_pi * two_pi == Approx(1.0).epsilon(2e-4));
    auto p2 = make_vm_wc(2.0, 3.0, 0.4, 0.6, 1);
    CHECK_THROWS_AS(grid_density_mean3(p2, 64), data_error);
}

TEST_CASE("integrating out a coordinate gives the closed marginal") {
    auto p = make_trivariate();
    std::vector<std::size_t> keep{0, 2};
    auto marg = cbmd_marginal(p, keep);
    REQUIRE(marg.dim() == 2);
    CHECK(marg.marginals[0].mu == Approx(p.marginals[0].mu));
    CHECK(marg.marginals[1].conc == Approx(p.marginals[2].conc));

    const int n = 1024;
    double h = two_pi / n;
    std::vector<double> logs(n);
    RandomSource rng(17);
    for (int rep = 0; rep < 4; ++rep) {
        std::vector<double> full{rng.uniform(0.0, two_pi), 0.0, rng.uniform(0.0, two_pi)};
        for (int k = 0; k < n; ++k) {
            full[1] = (k + 0.5) * h;
            logs[k] = cbmd_logpdf(p, full);
        }
        double integral = logsumexp(logs) + std::log(h);
        std::vector<double> pair{full[0], full[2]};
        CHECK(cbmd_logpdf(marg, pair) == Approx(integral).margin(1e-8));
    }
}

TEST_CASE("joint splits into marginal plus conditional") {
    auto p = make_trivariate();
    RandomSource rng(19);
    std::vector<std::size_t> given_idx{1};
    std::vector<std::size_t> target_idx{0, 2};
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> theta{rng.uniform(0.0, two_pi), rng.uniform(0.0, two_pi),
                                  rng.uniform(0.0, two_pi)};
        std::vector<double> given{theta[1]};
        std::vector<double> target{theta[0], theta[2]};
        double joint = cbmd_logpdf(p, theta);
        auto marg = cbmd_marginal(p, given_idx);
        double lm = cbmd_logpdf(marg, given);
        double lc = cbmd_conditional_logpdf(p, given_idx, given, target_idx, target);
        CHECK(joint == Approx(lm + lc).margin(1e-12));
    }
}

TEST_CASE("conditional of an independent model is the marginal") {
    CbmdParams p;
    p.marginals = {UnivariateCircular::von_mises(1.0, 3.0),
                   UnivariateCircular::wrapped_cauchy(2.5, 0.6)};
    p.circula = CirculaParams::uniform(2);
    std::vector<std::size_t> g{0}, t{1};
    std::vector<double> gv{0.7}, tv{3.3};
    double lc = cbmd_conditional_logpdf(p, g, gv, t, tv);
    CHECK(lc == Approx(log_pdf(p.marginals[1], tv[0])).epsilon(1e-13));
}

TEST_CASE("conditional density integrates to one") {
    auto p = make_trivariate();
    std::vector<std::size_t> g{0, 1}, t{2};
    std::vector<double> gv{1.2, 3.9};
    const int n = 512;
    double h = two_pi / n;
    std::vector<double> logs(n);
    for (int k = 0; k < n; ++k) {
        std::vector<double> tv{(k + 0.5) * h};
        logs[k] = cbmd_conditional_logpdf(p, g, gv, t, tv);
    }
    double mass = std::exp(logsumexp(logs) + std::log(h));
    CHECK(mass == Approx(1.0).epsilon(1e-6));
}

TEST_CASE("conditional input validation") {
    auto p = make_trivariate();
    std::vector<std::size_t> g{0}, t{0};
    std::vector<double> gv{0.1}, tv{0.2};
    CHECK_THROWS_AS(cbmd_conditional_logpdf(p, g, gv, t, tv), data_error);
    std::vector<std::size_t> t2;
    std::vector<double> tv2;
    CHECK_THROWS_AS(cbmd_conditional_logpdf(p, g, gv, t2, tv2), data_error);
    std::vector<double> gv_bad{0.1, 0.2};
    std::vector<std::size_t> t3{2};
    CHECK_THROWS_AS(cbmd_conditional_logpdf(p, g, gv_bad, t3, tv), data_error);
}

TEST_CASE("conditioning on a vanishing density is rejected") {
    CbmdParams p;
    p.marginals = {UnivariateCircular::von_mises(0.0, 700.0),
                   UnivariateCircular::von_mises(0.0, 2.0)};
    p.circula = CirculaParams::wrapped_cauchy({0.4, 0.4 + 1e-3}, {1, 1});
    std::vector<std::size_t> g{0}, t{1};
    std::vector<double> gv{pi}, tv{0.5};
    CHECK_THROWS_AS(cbmd_conditional_logpdf(p, g, gv, t, tv), numeric_error);
}

TEST_CASE("sampling is reproducible by seed") {
    auto p = make_vm_wc(3.0, 2.0, 0.5, 0.5 + 1e-3, 1);
    RandomSource a(77), b(77), c(78);
    auto da = cbmd_sample(p, a, 100);
    auto db = cbmd_sample(p, b, 100);
    auto dc = cbmd_sample(p, c, 100);
    CHECK(da.values == db.values);
    CHECK(da.values != dc.values);
}
