#include <catch2/catch_amalgamated.hpp>

#include <cbmd/core.hpp>
#include <cbmd/synth.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace cbmd;
using Catch::Approx;

TEST_CASE("bivariate correlations at eta one are uniform") {
    RandomSource rng(1);
    const int n = 10000;
    std::vector<double> draws(n);
    for (auto& r : draws) {
        auto m = sample_lkj_correlation(2, 1.0, rng);
        CHECK(m(0, 0) == Approx(1.0));
        CHECK(m(0, 1) == Approx(m(1, 0)));
        r = m(0, 1);
    }
    std::sort(draws.begin(), draws.end());
    double ks = 0.0;
    for (int i = 0; i < n; ++i) {
        double f = (draws[i] + 1.0) / 2.0;
        ks = std::max(ks, std::abs((i + 1.0) / n - f));
        ks = std::max(ks, std::abs(static_cast<double>(i) / n - f));
    }
    CHECK(ks <= 0.02);
}

TEST_CASE("higher eta concentrates mass near independence") {
    RandomSource rng(2);
    double acc_flat = 0.0, acc_peaked = 0.0;
    const int n = 2000;
    for (int i = 0; i < n; ++i) {
        acc_flat += std::abs(sample_lkj_correlation(2, 1.0, rng)(0, 1));
        acc_peaked += std::abs(sample_lkj_correlation(2, 20.0, rng)(0, 1));
    }
    CHECK(acc_peaked / n < acc_flat / n);
}

TEST_CASE("sampled matrices are valid correlation matrices") {
    RandomSource rng(3);
    for (int trial = 0; trial < 40; ++trial) {
        auto m = sample_lkj_correlation(5, 1.0, rng);
        REQUIRE(m.rows() == 5);
        for (int i = 0; i < 5; ++i) {
            CHECK(m(i, i) == Approx(1.0));
            for (int j = 0; j < 5; ++j) {
                CHECK(m(i, j) == Approx(m(j, i)).margin(1e-14));
                CHECK(std::abs(m(i, j)) <= 1.0 + 1e-12);
            }
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
        CHECK(es.eigenvalues().minCoeff() > 0.0);
        double det = m.determinant();
        CHECK(det > 0.0);
        CHECK(det <= 1.0 + 1e-12);
    }
}

TEST_CASE("lkj sampler input validation") {
    RandomSource rng(4);
    CHECK_THROWS_AS(sample_lkj_correlation(1, 1.0, rng), data_error);
    CHECK_THROWS_AS(sample_lkj_correlation(3, 0.0, rng), data_error);
    CHECK_THROWS_AS(sample_lkj_correlation(3, -1.0, rng), data_error);
}

TEST_CASE("wrapped normal sampling recovers means and spread") {
    RandomSource rng(5);
    std::vector<double> mean{1.0, 3.0, 5.5};
    std::vector<double> var{0.25, 0.5, 0.09};
    Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(3, 3);
    auto data = wrapped_mvn_sample(mean, corr, var, 20000, rng);
    REQUIRE(data.n == 20000);
    REQUIRE(data.d == 3);
    std::vector<double> col(data.n);
    for (int j = 0; j < 3; ++j) {
        for (std::size_t i = 0; i < data.n; ++i) col[i] = data.values[i * 3 + j];
        auto m = circular_moment(col);
        CHECK(angle_difference(m.mean, mean[j]) == Approx(0.0).margin(0.02));
        // wrapped normal resultant is exp(-var/2)
        CHECK(m.rbar == Approx(std::exp(-var[j] / 2.0)).margin(0.01));
    }
}

TEST_CASE("zero variance degenerates to the mean point") {
    RandomSource rng(6);
    std::vector<double> mean{0.3, 4.0};
    std::vector<double> var{0.0, 0.0};
    Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(2, 2);
    auto data = wrapped_mvn_sample(mean, corr, var, 50, rng);
    for (std::size_t i = 0; i < data.n; ++i) {
        CHECK(data.values[i * 2] == Approx(0.3).margin(1e-12));
        CHECK(data.values[i * 2 + 1] == Approx(4.0).margin(1e-12));
    }
}

TEST_CASE("correlation sign carries through the wrapping") {
    RandomSource rng(7);
    std::vector<double> mean{0.0, 0.0};
    std::vector<double> var{0.3, 0.3};
    Eigen::MatrixXd corr(2, 2);
    corr << 1.0, 0.85, 0.85, 1.0;
    auto data = wrapped_mvn_sample(mean, corr, var, 5000, rng);
    double num = 0.0, d1 = 0.0, d2 = 0.0;
    for (std::size_t i = 0; i < data.n; ++i) {
        double s1 = std::sin(angle_difference(data.values[i * 2], 0.0));
        double s2 = std::sin(angle_difference(data.values[i * 2 + 1], 0.0));
        num += s1 * s2;
        d1 += s1 * s1;
        d2 += s2 * s2;
    }
    double r = num / std::sqrt(d1 * d2);
    CHECK(r > 0.6);

    corr(0, 1) = corr(1, 0) = -0.85;
    auto data2 = wrapped_mvn_sample(mean, corr, var, 5000, rng);
    num = d1 = d2 = 0.0;
    for (std::size_t i = 0; i < data2.n; ++i) {
        double s1 = std::sin(data2.values[i * 2]);
        double s2 = std::sin(data2.values[i * 2 + 1]);
        num += s1 * s2;
        d1 += s1 * s1;
        d2 += s2 * s2;
    }
    CHECK(num / std::sqrt(d1 * d2) < -0.6);
}

TEST_CASE("wrapped normal sampling input validation") {
    RandomSource rng(8);
    std::vector<double> mean{0.0, 0.0};
    std::vector<double> var{0.1, 0.1};
    Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(3, 3);
    CHECK_THROWS_AS(wrapped_mvn_sample(mean, corr, var, 10, rng), data_error);

    Eigen::MatrixXd bad(2, 2);
    bad << 1.0, 1.2, 1.2, 1.0;
    CHECK_THROWS_AS(wrapped_mvn_sample(mean, bad, var, 10, rng), numeric_error);

    Eigen::MatrixXd eye2 = Eigen::MatrixXd::Identity(2, 2);
    std::vector<double> negvar{0.1, -0.2};
    CHECK_THROWS_AS(wrapped_mvn_sample(mean, eye2, negvar, 10, rng), data_error);
}

TEST_CASE("benchmark produces ordered likelihoods and stable reruns") {
    SynthSpec spec;
    spec.dim = 2;
    spec.n_samples = 400;
    spec.n_repeats = 3;
    spec.seed = 1;
    auto rep = run_rank1_benchmark(spec);
    CHECK(rep.repeats_completed == 3);
    CHECK(rep.repeats_failed == 0);
    REQUIRE(rep.records.size() == 9);

    double n = static_cast<double>(spec.n_samples);
    double d = static_cast<double>(spec.dim);
    double slack = n * d * (d - 1.0) * binding_rho_lo * binding_rho_lo + 1e-9;
    for (std::size_t r = 0; r < 3; ++r) {
        double ind = 0.0, heu = 0.0, exh = 0.0;
        for (const auto& rec : rep.records) {
            if (rec.repeat != r) continue;
            if (rec.method == "independent_vm") ind = rec.loglik;
            if (rec.method == "heuristic") heu = rec.loglik;
            if (rec.method == "exhaustive") exh = rec.loglik;
        }
        CHECK(exh >= heu - 1e-9);
        CHECK(heu >= ind - slack);
    }

    double acc = 0.0;
    for (const auto& rec : rep.records)
        if (rec.method == "heuristic") acc += rec.loglik;
    CHECK(rep.mean_loglik_heuristic == Approx(acc / 3.0).epsilon(1e-12));

    auto again = run_rank1_benchmark(spec);
    REQUIRE(again.records.size() == rep.records.size());
    for (std::size_t i = 0; i < rep.records.size(); ++i) {
        CHECK(again.records[i].loglik == rep.records[i].loglik);
        CHECK(again.records[i].method == rep.records[i].method);
    }
}

TEST_CASE("benchmark accepts explicit and factor correlation sources") {
    SynthSpec spec;
    spec.dim = 2;
    spec.n_samples = 300;
    spec.n_repeats = 2;
    spec.seed = 3;
    spec.source = CorrelationSource::explicit_matrix;
    spec.matrix = Eigen::MatrixXd(2, 2);
    spec.matrix << 1.0, 0.8, 0.8, 1.0;
    auto rep = run_rank1_benchmark(spec);
    CHECK(rep.repeats_completed == 2);
    // strong explicit correlation: the coupled fit must clearly win
    CHECK(rep.mean_loglik_heuristic > rep.mean_loglik_independent);

    SynthSpec fs;
    fs.dim = 3;
    fs.n_samples = 300;
    fs.n_repeats = 2;
    fs.seed = 4;
    fs.source = CorrelationSource::factor;
    fs.factor = Eigen::VectorXd(3);
    fs.factor << 0.7, -0.5, 0.6;
    auto frep = run_rank1_benchmark(fs);
    CHECK(frep.repeats_completed == 2);
    CHECK(frep.mean_loglik_exhaustive >= frep.mean_loglik_heuristic - 1e-9);
}

TEST_CASE("benchmark input validation") {
    SynthSpec spec;
    spec.dim = 13;
    CHECK_THROWS_AS(run_rank1_benchmark(spec), data_error);
    spec.dim = 1;
    CHECK_THROWS_AS(run_rank1_benchmark(spec), data_error);
    spec.dim = 2;
    spec.n_repeats = 0;
    CHECK_THROWS_AS(run_rank1_benchmark(spec), data_error);
    spec.n_repeats = 1;
    spec.variance_hi = 3.0;
    CHECK_THROWS_AS(run_rank1_benchmark(spec), data_error);
    spec.variance_hi = 1.0;
    spec.source = CorrelationSource::explicit_matrix;
    CHECK_THROWS_AS(run_rank1_benchmark(spec), data_error);
}
