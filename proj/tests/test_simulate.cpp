// Scenario generators: exact conditional means under zero noise, seed
// determinism, closed-form scenario quantities, JSON round trips, and the
// Monte Carlo driver's pairing/threading guarantees.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "mrt/simulate.hpp"

using namespace mrt;
using nlohmann::json;

TEST_CASE("zero-noise conditional means are exact")
{
    StationaryAr1Params p;
    p.n = 3;
    p.T = 4;
    p.noise_sd = 0.0;
    p.x_const = 0.0;
    p.y1_const = 0.0;
    p.force_a = 1;
    const MrtDataset treated = simulate(p, 1);
    // t = 1 row: intercept + effect * (1 - prob).
    CHECK(treated.outcome[0] == Catch::Approx(1.65766).margin(1e-12));
    p.force_a = 0;
    const MrtDataset control = simulate(p, 1);
    CHECK(control.outcome[0] == Catch::Approx(1.53476).margin(1e-12));
    // The lag then propagates deterministically: y(2) uses y(1).
    CHECK(control.outcome[1] ==
          Catch::Approx(p.intercept + p.lag_coef * 1.53476 +
                        p.effect * (0.0 - p.prob))
              .margin(1e-12));
    // ylag column carries the previous outcome.
    CHECK(control.covariate("ylag")[1] == control.outcome[0]);
}

TEST_CASE("stationary AR scenario columns and derived day index")
{
    StationaryAr1Params p;
    p.n = 2;
    p.T = 210;
    const MrtDataset ds = simulate(p, 77);
    CHECK(ds.arms == std::vector<std::string>{"suggestion"});
    CHECK(ds.covariate_names ==
          std::vector<std::string>{"x", "ylag", "day", "planning"});
    CHECK(ds.n_rows() == 2 * 210);
    // day = floor((t-1) * 42 / T): five decision points per day, 42 days.
    const auto& day = ds.covariate("day");
    CHECK(day[0] == 0.0);
    CHECK(day[4] == 0.0);
    CHECK(day[5] == 1.0);
    CHECK(day[209] == 41.0);
    // planning is binary, x respects the truncation floor.
    const auto& x = ds.covariate("x");
    const auto& planning = ds.covariate("planning");
    for (std::size_t i = 0; i < ds.n_rows(); ++i) {
        CHECK((planning[i] == 0.0 || planning[i] == 1.0));
        CHECK(x[i] >= p.x_zero_value);
        CHECK(ds.probs[0][i] == p.prob);
        CHECK(ds.avail[i] == 1);
    }
}

TEST_CASE("stationary initialization constants")
{
    const StationaryAr1Params p;
    CHECK(truncated_normal_mean(3.5, 2.0, std::log(0.5)) ==
          Catch::Approx(3.590227426511769).epsilon(1e-12));
    const auto [mean, sd] = stationary_ar1_moments(p);
    CHECK(mean == Catch::Approx(2.5320443879431362).epsilon(1e-12));
    CHECK(sd == Catch::Approx(2.7218449735367507).epsilon(1e-12));
}

TEST_CASE("identical seeds give identical datasets, different seeds differ")
{
    const StationaryAr1Params p;
    SimScenario sc = p;
    const MrtDataset a = simulate(sc, 123);
    const MrtDataset b = simulate(sc, 123);
    CHECK(a == b);
    const MrtDataset c = simulate(sc, 124);
    CHECK_FALSE(a == c);
}

TEST_CASE("endogenous scenario: the second-period covariate is the first outcome")
{
    EndogenousParams p;
    p.n = 40;
    const MrtDataset ds = simulate(p, 9);
    CHECK(ds.n_rows() == 80);
    const auto& x = ds.covariate("x");
    for (std::size_t i = 0; i < p.n; ++i) {
        CHECK(ds.t[2 * i] == 1);
        CHECK(ds.t[2 * i + 1] == 2);
        // Endogeneity by construction: X at t=2 equals Y observed after t=1.
        CHECK(x[2 * i + 1] == ds.outcome[2 * i]);
    }
    // The escape hatch breaks that identity.
    p.exogenous = true;
    const MrtDataset ex = simulate(p, 9);
    bool any_diff = false;
    const auto& x2 = ex.covariate("x");
    for (std::size_t i = 0; i < p.n; ++i)
        if (x2[2 * i + 1] != ex.outcome[2 * i]) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("availability scenario laws and closed-form target")
{
    AvailabilityParams p;
    CHECK(availability_q(p, 0) == p.q_start);
    CHECK(availability_q(p, p.T - 1) == Catch::Approx(p.q_end).margin(1e-15));
    CHECK(availability_beta(p, 0) == Catch::Approx(p.beta_start).margin(1e-15));
    CHECK(availability_beta(p, p.T - 1) == Catch::Approx(p.beta_end).margin(1e-15));
    CHECK(availability_marginal_target(p) ==
          Catch::Approx(0.33623188405797105).epsilon(1e-12));
    // Quadratic bump raises the curve everywhere except the middle day.
    AvailabilityParams q = p;
    q.beta_quad = 0.01;
    const double mid = static_cast<double>(p.T - 1) / 2.0;
    CHECK(availability_beta(q, 0) ==
          Catch::Approx(p.beta_start + 0.01 * mid * mid).margin(1e-12));

    p.n = 30;
    const MrtDataset ds = simulate(p, 4);
    CHECK(ds.covariate_names == std::vector<std::string>{"x", "day"});
    const auto& day = ds.covariate("day");
    std::size_t unavailable = 0;
    for (std::size_t i = 0; i < ds.n_rows(); ++i) {
        CHECK(day[i] == static_cast<double>(ds.t[i] - 1));
        const double expect_prob = ds.covariate("x")[i] > 0.0 ? p.p_hi : p.p_lo;
        CHECK(ds.probs[0][i] == expect_prob);
        if (!ds.avail[i]) {
            ++unavailable;
            CHECK(ds.arm_idx[i] == -1);
            // Outcomes are still recorded off-availability.
            CHECK(std::isfinite(ds.outcome[i]));
        }
    }
    // Average availability is about (0.9 + 0.3) / 2.
    const double frac_avail =
        1.0 - static_cast<double>(unavailable) / static_cast<double>(ds.n_rows());
    CHECK(frac_avail == Catch::Approx(0.6).margin(0.08));
}

TEST_CASE("multi-arm scenario stores arms alphabetically")
{
    MultiArmParams p;
    p.n = 60;
    p.T = 40;
    const MrtDataset ds = simulate(p, 8);
    CHECK(ds.arms == std::vector<std::string>{"antisedentary", "walking"});
    std::size_t walk = 0, anti = 0;
    for (std::size_t i = 0; i < ds.n_rows(); ++i) {
        CHECK(ds.probs[0][i] == p.p_antisedentary);
        CHECK(ds.probs[1][i] == p.p_walking);
        if (ds.arm_idx[i] == 1) ++walk;
        if (ds.arm_idx[i] == 0) ++anti;
        const double loc = ds.covariate("location")[i];
        CHECK((loc == 0.0 || loc == 1.0));
    }
    const double N = static_cast<double>(ds.n_rows());
    CHECK(static_cast<double>(walk) / N == Catch::Approx(0.3).margin(0.03));
    CHECK(static_cast<double>(anti) / N == Catch::Approx(0.3).margin(0.03));
}

TEST_CASE("scenario JSON round trip and strict key checking")
{
    AvailabilityParams p;
    p.n = 12;
    p.beta_quad = 0.005;
    SimScenario sc = p;
    const SimScenario back = scenario_from_json(json::parse(scenario_to_json(sc).dump()));
    CHECK(scenario_kind(back) == "availability_marginal");
    CHECK(simulate(back, 5) == simulate(sc, 5));

    auto expect_parse_error = [](const char* text) {
        try {
            scenario_from_json(json::parse(text));
            FAIL(text);
        } catch (const MrtError& e) {
            CHECK(e.code() == Err::ParseError);
        }
    };
    expect_parse_error(R"({"n": 5})");                        // missing kind
    expect_parse_error(R"({"kind": "nope"})");                // unknown kind
    expect_parse_error(R"({"kind": "stationary_ar1", "nn": 5})"); // typo key
    expect_parse_error(R"({"kind": "stationary_ar1", "n": "x"})"); // wrong type
}

TEST_CASE("scenario truth vectors")
{
    StationaryAr1Params a;
    CHECK(scenario_true_beta(a).size() == 1);
    CHECK(scenario_true_beta(a)[0] == a.effect);
    EndogenousParams e;
    const Eigen::VectorXd be = scenario_true_beta(e);
    CHECK(be.size() == 2);
    CHECK(be[0] == e.b0);
    CHECK(be[1] == e.b1);
    AvailabilityParams v;
    CHECK(scenario_true_beta(v)[0] ==
          Catch::Approx(availability_marginal_target(v)).epsilon(1e-15));
    MultiArmParams m;
    const Eigen::VectorXd bm = scenario_true_beta(m);
    REQUIRE(bm.size() == 4);
    CHECK(bm[0] == m.walking0);
    CHECK(bm[1] == m.walking_loc);
    CHECK(bm[2] == m.antisedentary0);
    CHECK(bm[3] == m.antisedentary_loc);
}

TEST_CASE("parameter validation rejects degenerate configurations")
{
    auto throws_invalid = [](auto params) {
        try {
            Rng rng(1);
            simulate(SimScenario{params}, rng);
            FAIL("expected an error");
        } catch (const MrtError& e) {
            CHECK(e.code() == Err::InvalidArgument);
        }
    };
    StationaryAr1Params a;
    a.n = 0;
    throws_invalid(a);
    StationaryAr1Params a2;
    a2.prob = 0.0;
    throws_invalid(a2);
    StationaryAr1Params a3;
    a3.noise_sd = -1.0;
    throws_invalid(a3);
    AvailabilityParams v;
    v.q_start = 1.2;
    throws_invalid(v);
    MultiArmParams m;
    m.p_walking = 0.6;
    m.p_antisedentary = 0.4;
    throws_invalid(m);
}

TEST_CASE("monte carlo driver pairs estimators and is thread-invariant")
{
    StationaryAr1Params p;
    p.n = 12;
    p.T = 8;
    SimScenario sc = p;
    ModelSpec m;
    m.arms = {"suggestion"};
    m.control_terms = {{"x"}};
    m.moderator_terms["suggestion"] = {};
    m.numerator = Numerator::MatchDenominator;
    EstimatorSpec e1{"one", false, m, {}};
    EstimatorSpec e2{"two", false, m, {}};
    Eigen::VectorXd truth(1);
    truth << p.effect;

    const McReport serial = run_mc(sc, {e1, e2}, 24, truth, 555, 1);
    const McReport parallel = run_mc(sc, {e1, e2}, 24, truth, 555, 4);
    REQUIRE(serial.rep_estimates.size() == 2);
    // Identical estimator specs see identical data within each replication.
    CHECK((serial.rep_estimates[0].array() == serial.rep_estimates[1].array()).all());
    // Scheduling cannot change any stream.
    CHECK((serial.rep_estimates[0].array() == parallel.rep_estimates[0].array()).all());
    CHECK(serial.estimators[0].reps_used == 24);
    CHECK(serial.estimators[0].coef_names == std::vector<std::string>{"suggestion"});
    // Loose sanity on the summaries.
    CHECK(std::abs(serial.estimators[0].bias[0]) <
          5.0 * serial.estimators[0].bias_mc_se[0] + 0.05);
    CHECK(serial.estimators[0].coverage[0] >= 0.7);

    // Shape mismatch between the truth vector and the estimator output.
    Eigen::VectorXd wrong(2);
    wrong << 0.0, 0.0;
    CHECK_THROWS_AS(run_mc(sc, {e1}, 4, wrong, 1), MrtError);
    CHECK_THROWS_AS(run_mc(sc, {}, 4, truth, 1), MrtError);
    CHECK_THROWS_AS(run_mc(sc, {e1}, 0, truth, 1), MrtError);
}

TEST_CASE("replication failures beyond the budget abort the study")
{
    StationaryAr1Params p;
    p.n = 6;
    p.T = 4;
    SimScenario sc = p;
    ModelSpec bad;
    bad.arms = {"suggestion"};
    bad.control_terms = {{"no_such_column"}};
    EstimatorSpec e{"broken", false, bad, {}};
    Eigen::VectorXd truth(1);
    truth << 0.0;
    try {
        run_mc(sc, {e}, 6, truth, 2, 1, 2); // budget 2, all 6 fail
        FAIL("expected an error");
    } catch (const MrtError& err) {
        CHECK(err.code() == Err::ReplicationFailure);
        CHECK(std::string(err.what()).find("replication") != std::string::npos);
    }
}
