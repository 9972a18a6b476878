// Distribution functions against externally computed reference values
// (frozen from an independent scientific-computing library).

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mrt/error.hpp"
#include "mrt/stats.hpp"

using namespace mrt;

TEST_CASE("regularized incomplete beta matches reference values")
{
    CHECK(stats::inc_beta(2.5, 3.5, 0.3) == Catch::Approx(0.29675298929566646).epsilon(1e-12));
    CHECK(stats::inc_beta(0.5, 17.0, 0.1) == Catch::Approx(0.9397479284975953).epsilon(1e-12));
    CHECK(stats::inc_beta(2.0, 3.0, 0.0) == 0.0);
    CHECK(stats::inc_beta(2.0, 3.0, 1.0) == 1.0);
    // Symmetry: I_x(a,b) + I_{1-x}(b,a) = 1.
    const double lhs = stats::inc_beta(1.7, 4.2, 0.37);
    const double rhs = stats::inc_beta(4.2, 1.7, 0.63);
    CHECK(lhs + rhs == Catch::Approx(1.0).epsilon(1e-13));
    CHECK_THROWS_AS(stats::inc_beta(0.0, 1.0, 0.5), MrtError);
    CHECK_THROWS_AS(stats::inc_beta(1.0, -2.0, 0.5), MrtError);
}

TEST_CASE("F distribution CDF and survival function")
{
    CHECK(stats::f_cdf(1.0, 3, 10) == Catch::Approx(0.567662796978303).epsilon(1e-12));
    CHECK(stats::f_cdf(0.0, 3, 10) == 0.0);
    CHECK(stats::f_sf(0.0, 3, 10) == 1.0);
    // CDF + SF = 1 away from the tails.
    for (double x : {0.2, 1.0, 2.5, 7.0})
        CHECK(stats::f_cdf(x, 1, 34) + stats::f_sf(x, 1, 34) ==
              Catch::Approx(1.0).epsilon(1e-12));
    // Values behind the reported tests: F = (est/se)^2 on df (1, n - q).
    CHECK(stats::f_sf(3.814925, 1, 34) == Catch::Approx(0.059068).margin(5e-6));
    CHECK(stats::f_sf(11.273584, 1, 32) == Catch::Approx(0.002041).margin(5e-6));
    CHECK_THROWS_AS(stats::f_cdf(1.0, 0, 5), MrtError);
    CHECK_THROWS_AS(stats::f_sf(1.0, 5, -1), MrtError);
}

TEST_CASE("t distribution CDF matches reference values")
{
    CHECK(stats::t_cdf(0.0, 7) == 0.5);
    CHECK(stats::t_cdf(1.5, 7) == Catch::Approx(0.911350756505015).epsilon(1e-12));
    CHECK(stats::t_cdf(-2.3, 3) == Catch::Approx(0.05249418032223499).epsilon(1e-12));
    // t^2 with nu df is F(1, nu): P(|T| > x) = P(F > x^2).
    const double x = 1.8, nu = 12.0;
    CHECK(2.0 * (1.0 - stats::t_cdf(x, nu)) ==
          Catch::Approx(stats::f_sf(x * x, 1, nu)).epsilon(1e-12));
    CHECK_THROWS_AS(stats::t_cdf(1.0, 0.0), MrtError);
}

TEST_CASE("t quantile inverts the CDF and matches reference values")
{
    struct Case { double nu, q; };
    const Case cases[] = {
        {1, 12.706204736432},   {2, 4.302652729696},  {5, 2.570581835636},
        {10, 2.228138851965},   {32, 2.036933343460}, {34, 2.032244509318},
        {100, 1.983971518450},  {500, 1.964719837467},
    };
    for (const auto& c : cases)
        CHECK(stats::t_quantile(0.975, c.nu) == Catch::Approx(c.q).epsilon(1e-10));

    CHECK(stats::t_quantile(0.5, 9) == 0.0);
    CHECK(stats::t_quantile(0.025, 34) ==
          Catch::Approx(-2.032244509318).epsilon(1e-10));
    // Round trip at assorted probabilities.
    for (double p : {0.6, 0.9, 0.99, 0.999})
        CHECK(stats::t_cdf(stats::t_quantile(p, 17), 17) ==
              Catch::Approx(p).epsilon(1e-12));
    CHECK_THROWS_AS(stats::t_quantile(0.0, 5), MrtError);
    CHECK_THROWS_AS(stats::t_quantile(1.0, 5), MrtError);
    CHECK_THROWS_AS(stats::t_quantile(0.5, 0.0), MrtError);
}
