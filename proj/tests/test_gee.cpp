// The comparison GEE: independence reduces to pooled least squares, the
// two-period working structures coincide, the moment estimates behave, and
// the estimating-equation decomposition isolates the endogeneity cross terms.

#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "mrt/estimator.hpp"
#include "mrt/gee.hpp"
#include "mrt/simulate.hpp"

using namespace mrt;

namespace {

GeeSpec x_model(WorkingCorr w)
{
    GeeSpec g;
    g.covariates = {"x"};
    g.interactions = {"x"};
    g.working = w;
    return g;
}

MrtDataset endo_data(std::size_t n, std::uint64_t seed)
{
    EndogenousParams p;
    p.n = n;
    return simulate(p, seed);
}

} // namespace

TEST_CASE("independence working correlation is pooled least squares")
{
    const MrtDataset ds = endo_data(60, 17);
    const GeeResult fit = gee_fit(ds, x_model(WorkingCorr::Independence));
    CHECK(fit.converged);
    CHECK(fit.iterations == 1);
    CHECK(fit.rho == 0.0);
    CHECK(fit.colnames == std::vector<std::string>{"intercept", "x", "treatment",
                                                   "treatment:x"});

    // Dense OLS oracle over the same rows.
    const Eigen::Index N = static_cast<Eigen::Index>(ds.n_rows());
    Eigen::MatrixXd X(N, 4);
    Eigen::VectorXd y(N);
    const auto& x = ds.covariate("x");
    for (Eigen::Index i = 0; i < N; ++i) {
        const double A = ds.arm_idx[static_cast<std::size_t>(i)] == 0 ? 1.0 : 0.0;
        X(i, 0) = 1.0;
        X(i, 1) = x[static_cast<std::size_t>(i)];
        X(i, 2) = A;
        X(i, 3) = A * x[static_cast<std::size_t>(i)];
        y[i] = ds.outcome[static_cast<std::size_t>(i)];
    }
    const Eigen::VectorXd ols =
        (X.transpose() * X).fullPivLu().solve(X.transpose() * y);
    for (Eigen::Index j = 0; j < 4; ++j)
        CHECK(fit.coef[j] == Catch::Approx(ols[j]).epsilon(1e-11).margin(1e-12));
}

TEST_CASE("exchangeable and AR(1) agree on two-period panels")
{
    const MrtDataset ds = endo_data(80, 23);
    const GeeResult ex = gee_fit(ds, x_model(WorkingCorr::Exchangeable));
    const GeeResult ar = gee_fit(ds, x_model(WorkingCorr::Ar1));
    CHECK(ex.converged);
    CHECK(ar.converged);
    CHECK(ex.iterations >= 2);
    // With exactly two points per participant the structures are identical.
    CHECK(ar.rho == Catch::Approx(ex.rho).margin(1e-12));
    for (Eigen::Index j = 0; j < 4; ++j)
        CHECK(ar.coef[j] == Catch::Approx(ex.coef[j]).margin(1e-12));
    CHECK(ex.sigma2 > 0.0);
}

TEST_CASE("exchangeable rho picks up the shared random effect")
{
    // tau = 1.5 against residual SDs 0.5/2.0 induces substantial positive
    // within-person correlation.
    const MrtDataset ds = endo_data(2000, 31);
    const GeeResult fit = gee_fit(ds, x_model(WorkingCorr::Exchangeable));
    CHECK(fit.rho > 0.25);
    CHECK(fit.rho < 0.75);
    CHECK(fit.n_participants == 2000);
}

TEST_CASE("weighted centered fit equals independence GEE up to reparameterization")
{
    // Constant randomization and match-denominator weights make the two
    // models the same least-squares problem in different bases:
    //   alpha_wcls = alpha_gee + p * beta_gee, beta_wcls = beta_gee.
    const MrtDataset ds = endo_data(150, 47);
    ModelSpec m;
    m.arms = {"treat"};
    m.control_terms = {{"x"}};
    m.moderator_terms["treat"] = {{"x"}};
    m.numerator = Numerator::MatchDenominator;
    const FitResult wcls = wcls_fit(ds, m);
    const GeeResult gee = gee_fit(ds, x_model(WorkingCorr::Independence));

    const double p = ds.probs[0][0]; // constant by construction
    CHECK(wcls.beta_hat[0] == Catch::Approx(gee.coef[2]).epsilon(1e-10).margin(1e-12));
    CHECK(wcls.beta_hat[1] == Catch::Approx(gee.coef[3]).epsilon(1e-10).margin(1e-12));
    CHECK(wcls.alpha_hat[0] ==
          Catch::Approx(gee.coef[0] + p * gee.coef[2]).epsilon(1e-10).margin(1e-12));
    CHECK(wcls.alpha_hat[1] ==
          Catch::Approx(gee.coef[1] + p * gee.coef[3]).epsilon(1e-10).margin(1e-12));
}

TEST_CASE("decomposition entries at the fitted coefficients")
{
    const MrtDataset ds = endo_data(2000, 59);
    const GeeSpec spec = x_model(WorkingCorr::Exchangeable);
    const GeeResult fit = gee_fit(ds, spec);
    const Eigen::Vector4d dec = bias_decomposition(ds, spec, fit);
    // The intercept estimating equation forces the total residual sum to
    // zero, so the intercept cross term vanishes at the fit.
    CHECK(std::abs(dec[0]) < 1e-10);
    // The covariate cross term is the endogeneity fingerprint: strictly
    // negative and far from zero under these dynamics.
    CHECK(dec[1] < -0.1);

    // With an independence fit rho is zero, so every entry is exactly zero.
    const GeeSpec ind = x_model(WorkingCorr::Independence);
    const GeeResult fit0 = gee_fit(ds, ind);
    const Eigen::Vector4d dec0 = bias_decomposition(ds, ind, fit0);
    for (int k = 0; k < 4; ++k) CHECK(dec0[k] == 0.0);
}

TEST_CASE("decomposition rejects other shapes")
{
    const MrtDataset ds = endo_data(50, 3);
    const GeeSpec spec = x_model(WorkingCorr::Exchangeable);
    const GeeResult fit = gee_fit(ds, spec);
    GeeSpec two = spec;
    two.covariates = {"x", "x"};
    try {
        bias_decomposition(ds, two, fit);
        FAIL("expected an error");
    } catch (const MrtError& e) {
        CHECK(e.code() == Err::ShapeError);
    }

    // Three decision points per participant: wrong panel shape.
    StationaryAr1Params p3;
    p3.n = 20;
    p3.T = 3;
    const MrtDataset ds3 = simulate(p3, 5);
    GeeSpec g3 = x_model(WorkingCorr::Exchangeable);
    const GeeResult fit3 = gee_fit(ds3, g3);
    try {
        bias_decomposition(ds3, g3, fit3);
        FAIL("expected an error");
    } catch (const MrtError& e) {
        CHECK(e.code() == Err::ShapeError);
    }
}

TEST_CASE("gee spec validation and input guards")
{
    const MrtDataset ds = endo_data(10, 1);
    GeeSpec bad;
    bad.tol = 0.0;
    CHECK_THROWS_AS(gee_fit(ds, bad), MrtError);
    GeeSpec bad2;
    bad2.max_iter = 0;
    CHECK_THROWS_AS(gee_fit(ds, bad2), MrtError);

    // Multi-arm data is out of scope for the comparison model.
    MultiArmParams mp;
    mp.n = 10;
    mp.T = 4;
    const MrtDataset multi = simulate(mp, 2);
    try {
        gee_fit(multi, x_model(WorkingCorr::Independence));
        FAIL("expected an error");
    } catch (const MrtError& e) {
        CHECK(e.code() == Err::InvalidArgument);
    }
}
