#include <catch2/catch_amalgamated.hpp>

#include <cbmd/core.hpp>
#include <cbmd/distribution.hpp>
#include <cbmd/modes.hpp>
#include <cbmd/special.hpp>

#include <cmath>
#include <vector>

using namespace cbmd;
using Catch::Approx;

TEST_CASE("independent bivariate von mises has the product critical set") {
    CbmdParams p;
    p.marginals = {UnivariateCircular::von_mises(1.0, 3.0),
                   UnivariateCircular::von_mises(4.0, 2.0)};
    p.circula = CirculaParams::uniform(2);
    auto rep = count_modes(p, 96);
    REQUIRE(!rep.plateau);
    CHECK(rep.mode_count == 1);
    REQUIRE(rep.index_counts.size() == 3);
    CHECK(rep.index_counts[2] == 1);
    CHECK(rep.index_counts[1] == 2);
    CHECK(rep.index_counts[0] == 1);
    CHECK(rep.euler_sum == 0);
    // the single mode sits at the marginal locations and leads the ranking
    REQUIRE(!rep.points.empty());
    CHECK(angle_difference(rep.points[0].location[0], 1.0) == Approx(0.0).margin(1e-5));
    CHECK(angle_difference(rep.points[0].location[1], 4.0) == Approx(0.0).margin(1e-5));
    for (std::size_t i = 1; i < rep.points.size(); ++i)
        CHECK(rep.points[i].logpdf <= rep.points[i - 1].logpdf + 1e-12);
}

TEST_CASE("univariate model reduces to the circle") {
    CbmdParams p;
    p.marginals = {UnivariateCircular::von_mises(2.5, 2.0)};
    p.circula = CirculaParams::uniform(1);
    auto rep = count_modes(p, 128);
    CHECK(rep.mode_count == 1);
    CHECK(rep.index_counts[1] == 1);
    CHECK(rep.index_counts[0] == 1);
    CHECK(rep.euler_sum == 0);
}

TEST_CASE("strong symmetric binding splits the bivariate density into three modes") {
    double kappa_m = inverse_mean_resultant(0.9);
    double kappa_b = inverse_mean_resultant(std::sqrt(0.6));
    CbmdParams p;
    p.marginals = {UnivariateCircular::von_mises(0.0, kappa_m),
                   UnivariateCircular::von_mises(0.0, kappa_m)};
    p.circula = CirculaParams::von_mises({kappa_b, kappa_b}, {1, 1});
    auto rep = count_modes(p, 64);
    CHECK(rep.mode_count == 3);
    CHECK(rep.euler_sum == 0);
    CHECK(rep.index_counts[2] - rep.index_counts[1] + rep.index_counts[0] == 0);
}

TEST_CASE("independent trivariate von mises has the expected index counts") {
    CbmdParams p;
    p.marginals = {UnivariateCircular::von_mises(0.5, 2.0),
                   UnivariateCircular::von_mises(2.0, 3.0),
                   UnivariateCircular::von_mises(5.0, 1.5)};
    p.circula = CirculaParams::uniform(3);
    auto rep = count_modes(p, 64);
    CHECK(rep.mode_count == 1);
    REQUIRE(rep.index_counts.size() == 4);
    CHECK(rep.index_counts[3] == 1);
    CHECK(rep.index_counts[2] == 3);
    CHECK(rep.index_counts[1] == 3);
    CHECK(rep.index_counts[0] == 1);
    CHECK(rep.euler_sum == 0);
}

TEST_CASE("flat density is reported as a plateau") {
    CbmdParams p;
    p.marginals = {UnivariateCircular::uniform(), UnivariateCircular::uniform()};
    p.circula = CirculaParams::uniform(2);
    auto rep = count_modes(p, 64);
    CHECK(rep.plateau);
    CHECK(rep.points.empty());
    CHECK(rep.mode_count == 0);
}

TEST_CASE("critical points are deduplicated and classified") {
    CbmdParams p;
    p.marginals = {UnivariateCircular::von_mises(1.0, 2.0),
                   UnivariateCircular::wrapped_cauchy(3.0, 0.5)};
    p.circula = CirculaParams::wrapped_cauchy({0.5, 0.6}, {1, -1});
    auto rep = count_modes(p, 96);
    for (std::size_t i = 0; i < rep.points.size(); ++i) {
        CHECK(!rep.points[i].degenerate);
        CHECK(rep.points[i].index <= 2);
        for (std::size_t j = i + 1; j < rep.points.size(); ++j) {
            CHECK(geodesic_dist2(rep.points[i].location, rep.points[j].location) >= 1e-4);
        }
    }
    CHECK(rep.euler_sum == 0);
    CHECK(rep.mode_count >= 1);
}

TEST_CASE("input validation") {
    CbmdParams p;
    p.marginals = {UnivariateCircular::von_mises(0.0, 2.0),
                   UnivariateCircular::von_mises(0.0, 2.0)};
    p.circula = CirculaParams::uniform(2);
    CHECK_THROWS_AS(count_modes(p, 32), data_error);

    CbmdParams wide;
    for (int j = 0; j < 4; ++j)
        wide.marginals.push_back(UnivariateCircular::von_mises(0.0, 2.0));
    wide.circula = CirculaParams::uniform(4);
    CHECK_THROWS_AS(count_modes(wide, 64), data_error);
}
