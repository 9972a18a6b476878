// Local polynomial smoothing: polynomial reproduction, linearity and
// invariance properties, kernel boundary behavior, window failure modes, and
// the effect-versus-day curve against its closed-form truth.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "mrt/loess.hpp"
#include "mrt/simulate.hpp"

using namespace mrt;

namespace {

LoessSpec spec_with(std::vector<double> grid, double span = 2.0 / 3.0, int degree = 2)
{
    LoessSpec s;
    s.span = span;
    s.degree = degree;
    s.grid = std::move(grid);
    return s;
}

} // namespace

TEST_CASE("degree-2 smoother reproduces a global quadratic exactly")
{
    std::vector<double> x, y, w;
    for (int i = 0; i <= 20; ++i) {
        const double xi = static_cast<double>(i);
        x.push_back(xi);
        y.push_back(2.0 + 3.0 * (xi - 1.0) - 0.5 * (xi - 1.0) * (xi - 1.0));
        w.push_back(1.0);
    }
    const EffectCurve c = loess_fit(x, y, w, spec_with({0, 4.5, 10, 20}));
    REQUIRE(c.estimate.size() == 4);
    for (std::size_t k = 0; k < c.grid.size(); ++k) {
        const double g = c.grid[k];
        const double truth = 2.0 + 3.0 * (g - 1.0) - 0.5 * (g - 1.0) * (g - 1.0);
        CHECK(c.estimate[k] == Catch::Approx(truth).margin(1e-10));
    }
}

TEST_CASE("constant data smooths to the constant")
{
    std::vector<double> x, y, w;
    for (int i = 0; i < 12; ++i) {
        x.push_back(i);
        y.push_back(-3.25);
        w.push_back(1.0);
    }
    const EffectCurve c = loess_fit(x, y, w, spec_with({1, 6, 11}));
    for (double v : c.estimate) CHECK(v == Catch::Approx(-3.25).margin(1e-12));
}

TEST_CASE("odd data about a symmetric window vanishes at the center")
{
    std::vector<double> x, y, w;
    for (int i = -10; i <= 10; ++i) {
        x.push_back(i);
        y.push_back(static_cast<double>(i * i * i));
        w.push_back(1.0);
    }
    const EffectCurve c = loess_fit(x, y, w, spec_with({0.0}, 1.0, 2));
    CHECK(c.estimate[0] == Catch::Approx(0.0).margin(1e-10));
}

TEST_CASE("the smoother is affine in the response")
{
    std::vector<double> x, y, w;
    for (int i = 0; i < 15; ++i) {
        x.push_back(i);
        y.push_back(std::sin(0.7 * i));
        w.push_back(1.0);
    }
    const LoessSpec s = spec_with({2, 7, 12});
    const EffectCurve base = loess_fit(x, y, w, s);
    std::vector<double> y2 = y;
    for (double& v : y2) v = -4.0 + 2.5 * v;
    const EffectCurve shifted = loess_fit(x, y2, w, s);
    for (std::size_t k = 0; k < base.estimate.size(); ++k)
        CHECK(shifted.estimate[k] ==
              Catch::Approx(-4.0 + 2.5 * base.estimate[k]).epsilon(1e-12).margin(1e-12));
}

TEST_CASE("duplicated rows equal doubled base weights")
{
    // span * n integral on both datasets so the window radii coincide.
    std::vector<double> x1, y1, w1, x2, y2, w2;
    for (int i = 0; i < 10; ++i) {
        const double xi = i, yi = std::cos(0.5 * i) + 0.1 * i;
        x2.push_back(xi);
        y2.push_back(yi);
        w2.push_back(2.0);
        for (int rep = 0; rep < 2; ++rep) {
            x1.push_back(xi);
            y1.push_back(yi);
            w1.push_back(1.0);
        }
    }
    const LoessSpec s = spec_with({0, 3, 6, 9}, 0.5, 2);
    const EffectCurve dup = loess_fit(x1, y1, w1, s);
    const EffectCurve wt = loess_fit(x2, y2, w2, s);
    for (std::size_t k = 0; k < dup.estimate.size(); ++k)
        CHECK(dup.estimate[k] ==
              Catch::Approx(wt.estimate[k]).epsilon(1e-10).margin(1e-12));
}

TEST_CASE("tricube kernel is zero exactly at the window boundary")
{
    const std::vector<double> x = {0, 1, 2, 3, 4};
    // span 0.6 of 5 points: k = 3, so the boundary point x = 2 has u = 1.
    const std::vector<double> w = detail::tricube_weights(x, 0.0, 0.6);
    CHECK(w[0] == 1.0); // u = 0
    CHECK(w[1] > 0.0);
    CHECK(w[2] == 0.0); // boundary tie
    CHECK(w[3] == 0.0);
    CHECK(w[4] == 0.0);
    // Interior weights follow (1 - u^3)^3 with u = dist / dmax.
    const double u = 0.5;
    CHECK(w[1] == Catch::Approx(std::pow(1.0 - u * u * u, 3)).epsilon(1e-15));
}

TEST_CASE("window failure modes")
{
    // Coincident nearest abscissae: zero window radius.
    {
        const std::vector<double> x = {5, 5, 5};
        const std::vector<double> y = {1, 2, 3};
        const std::vector<double> w = {1, 1, 1};
        try {
            loess_fit(x, y, w, spec_with({5.0}, 1.0, 0));
            FAIL("expected an error");
        } catch (const MrtError& e) {
            CHECK(e.code() == Err::WindowRankDeficient);
        }
    }
    // Enough points but too few distinct abscissae for a quadratic.
    {
        const std::vector<double> x = {0, 0, 1, 1, 9};
        const std::vector<double> y = {1, 2, 3, 4, 5};
        const std::vector<double> w = {1, 1, 1, 1, 1};
        try {
            loess_fit(x, y, w, spec_with({0.0}, 1.0, 2));
            FAIL("expected an error");
        } catch (const MrtError& e) {
            CHECK(e.code() == Err::WindowRankDeficient);
        }
    }
    // Boundary ties can empty the window below the coefficient count.
    {
        const std::vector<double> x = {0, 1, 2, 3, 4};
        const std::vector<double> y = {0, 1, 2, 3, 4};
        const std::vector<double> w = {1, 1, 1, 1, 1};
        try {
            loess_fit(x, y, w, spec_with({0.0}, 0.6, 2));
            FAIL("expected an error");
        } catch (const MrtError& e) {
            CHECK(e.code() == Err::WindowRankDeficient);
        }
    }
}

TEST_CASE("spec validation and the default grid")
{
    LoessSpec def;
    const std::vector<double> grid = def.grid_or_default();
    REQUIRE(grid.size() == 42);
    CHECK(grid.front() == 0.0);
    CHECK(grid.back() == 41.0);

    CHECK_THROWS_AS(spec_with({}, 0.0).validate(30), MrtError);
    CHECK_THROWS_AS(spec_with({}, 1.5).validate(30), MrtError);
    CHECK_THROWS_AS(spec_with({}, 0.5, -1).validate(30), MrtError);
    // span times distinct-abscissae count must cover the coefficients.
    CHECK_THROWS_AS(spec_with({}, 0.5, 2).validate(4), MrtError);
    CHECK_NOTHROW(spec_with({}, 0.5, 2).validate(6));
    CHECK_THROWS_AS(spec_with({1, 1}).grid_or_default(), MrtError);
    CHECK_THROWS_AS(spec_with({2, 1}).grid_or_default(), MrtError);

    // Mismatched input lengths and empty input.
    CHECK_THROWS_AS(loess_fit({1, 2}, {1}, {1, 1}, def), MrtError);
    CHECK_THROWS_AS(loess_fit({}, {}, {}, def), MrtError);
}

TEST_CASE("effect curve recovers a linear time-varying effect exactly")
{
    // Zero noise: the local weighted fit and the linear comparator are both
    // exact, so the curve equals the closed-form effect at every day.
    AvailabilityParams p;
    p.n = 40;
    p.T = 24;
    p.noise_sd = 0.0;
    const MrtDataset ds = simulate(p, 31);

    ModelSpec m;
    m.arms = {"treat"};
    m.control_terms = {{"x"}, {"day"}};
    m.moderator_terms["treat"] = {{"day"}};
    m.numerator = Numerator::EmpiricalArmMean;

    LoessSpec ls;
    ls.grid = {0, 4, 8, 12, 16, 20, 23};
    const EffectCurve c = effect_over_time(ds, m, ls);
    REQUIRE(c.estimate.size() == ls.grid.size());
    for (std::size_t k = 0; k < c.grid.size(); ++k) {
        const double truth = availability_beta(p, static_cast<long>(c.grid[k]));
        CHECK(c.estimate[k] == Catch::Approx(truth).margin(1e-7));
        CHECK(c.comparator[k] == Catch::Approx(truth).margin(1e-7));
    }
}

TEST_CASE("comparator band brackets the comparator and gaps stay moderate")
{
    AvailabilityParams p;
    p.n = 150;
    p.T = 24;
    p.beta_start = 0.15;
    p.beta_end = 0.426;
    const MrtDataset ds = simulate(p, 2024);

    ModelSpec m;
    m.arms = {"treat"};
    m.control_terms = {{"x"}, {"day"}};
    m.moderator_terms["treat"] = {{"day"}};
    m.numerator = Numerator::EmpiricalArmMean;

    LoessSpec ls;
    for (int d = 0; d < 24; ++d) ls.grid.push_back(d);
    const EffectCurve c = effect_over_time(ds, m, ls);
    for (std::size_t k = 0; k < c.grid.size(); ++k) {
        CHECK(c.lcl[k] <= c.comparator[k]);
        CHECK(c.comparator[k] <= c.ucl[k]);
        CHECK(c.local_se[k] > 0.0);
        // The truth is linear here, so the standardized gap between the
        // smoothed and linear fits should not be extreme.
        CHECK(std::abs(c.estimate[k] - c.comparator[k]) / c.local_se[k] < 4.0);
    }
}

TEST_CASE("effect curve input guards")
{
    AvailabilityParams p;
    p.n = 20;
    const MrtDataset ds = simulate(p, 6);
    LoessSpec ls;
    ls.grid = {0, 5, 10};

    // Moderator must be exactly (1, day).
    ModelSpec no_day;
    no_day.arms = {"treat"};
    no_day.control_terms = {{"x"}, {"day"}};
    no_day.moderator_terms["treat"] = {};
    CHECK_THROWS_AS(effect_over_time(ds, no_day, ls), MrtError);

    ModelSpec two;
    two.arms = {"treat"};
    two.control_terms = {{"x"}, {"day"}};
    two.moderator_terms["treat"] = {{"day"}, {"x"}};
    CHECK_THROWS_AS(effect_over_time(ds, two, ls), MrtError);

    // Multi-arm designs are out of scope.
    MultiArmParams mp;
    mp.n = 10;
    mp.T = 30;
    const MrtDataset multi = simulate(mp, 3);
    ModelSpec mm;
    mm.arms = {"walking", "antisedentary"};
    CHECK_THROWS_AS(effect_over_time(multi, mm, ls), MrtError);
}
