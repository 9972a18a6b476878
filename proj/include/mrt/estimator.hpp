#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mrt/dataset.hpp"
#include "mrt/design.hpp"
#include "mrt/error.hpp"
#include "mrt/stats.hpp"

namespace mrt {

struct Diagnostics {
    double ee_residual = 0.0;    // norm of the estimating-equation gradient
    double bread_condition = 0.0;
    std::size_t rows_total = 0;
    std::size_t rows_avail = 0;
    Eigen::Index n_participants = 0; // clusters with positive weight
    Eigen::Index q = 0;
};

struct CoefRow {
    std::string name;
    bool is_beta = false;
    double estimate = 0.0;
    double lcl = 0.0;
    double ucl = 0.0;
    double se = 0.0;
    double hotelling = 0.0;
    double p_value = 0.0;
};

struct FitResult {
    Eigen::VectorXd theta;     // stacked (alpha, beta)
    Eigen::VectorXd alpha_hat;
    Eigen::VectorXd beta_hat;  // arm blocks stacked in spec order
    Eigen::MatrixXd vcov;
    Eigen::MatrixXd vcov_corrected;
    Eigen::VectorXd se;             // corrected
    Eigen::VectorXd se_uncorrected;
    std::pair<int, Eigen::Index> df{1, 0};
    std::vector<CoefRow> table;
    std::vector<std::string> colnames;
    std::vector<int> is_beta;
    Eigen::Index q_alpha = 0;
    std::vector<Eigen::Index> q_beta;
    Diagnostics diag;
};

// Hotelling statistic, F p-value and t confidence interval for one
// coefficient, on F(1, n - q) / t(n - q) reference distributions.
struct InferenceRow {
    double hotelling = 0.0;
    double p_value = 1.0;
    double lcl = 0.0;
    double ucl = 0.0;
};

inline InferenceRow inference(double estimate, double se, Eigen::Index df2)
{
    if (df2 <= 0)
        throw MrtError(Err::InvalidArgument, "nonpositive residual degrees of freedom");
    InferenceRow r;
    if (se > 0.0) {
        const double t = estimate / se;
        r.hotelling = t * t;
        r.p_value = stats::f_sf(r.hotelling, 1.0, static_cast<double>(df2));
        const double half = stats::t_quantile(0.975, static_cast<double>(df2)) * se;
        r.lcl = estimate - half;
        r.ucl = estimate + half;
    } else {
        // Degenerate (saturated) fits carry zero SEs; report the point mass.
        r.hotelling = std::numeric_limits<double>::quiet_NaN();
        r.p_value = std::numeric_limits<double>::quiet_NaN();
        r.lcl = estimate;
        r.ucl = estimate;
    }
    return r;
}

namespace detail {

// Bread, meat, and corrected meat of the clustered sandwich. The corrected
// meat inflates each participant's residual by (I − H_i)⁻¹ using the
// Woodbury form, so only q×q systems are ever factored.
struct SandwichParts {
    Eigen::MatrixXd bread;     // Σ_i D_iᵀ Ω_i D_i
    Eigen::MatrixXd meat;      // Σ_i U_i U_iᵀ
    Eigen::MatrixXd meat_corr; // Σ_i Ũ_i Ũ_iᵀ
    Eigen::Index n_used = 0;   // clusters with positive total weight
};

inline SandwichParts sandwich_parts(const Design& d, const Eigen::VectorXd& theta,
                                    bool corrected = true)
{
    const Eigen::Index q = d.X.cols();
    SandwichParts parts;
    parts.bread = Eigen::MatrixXd::Zero(q, q);
    parts.meat = Eigen::MatrixXd::Zero(q, q);
    parts.meat_corr = Eigen::MatrixXd::Zero(q, q);

    const Eigen::VectorXd fitted = d.X * theta;
    const Eigen::VectorXd resid = d.y - fitted;
    // A cluster whose weighted residual is zero at this scale contributes
    // nothing to either meat; treating it as exactly zero keeps saturated
    // and perfectly-fitted clusters out of the leverage inversion below.
    const double wr_tol =
        1e-12 * (d.w.cwiseProduct(d.y).lpNorm<Eigen::Infinity>() +
                 d.w.cwiseProduct(fitted).lpNorm<Eigen::Infinity>());

    std::vector<Eigen::MatrixXd> cluster_bread;
    std::vector<Eigen::VectorXd> cluster_score;
    cluster_bread.reserve(d.clusters.size());
    cluster_score.reserve(d.clusters.size());
    for (const auto& [start, len] : d.clusters) {
        const auto rows = Eigen::seqN(static_cast<Eigen::Index>(start),
                                      static_cast<Eigen::Index>(len));
        const Eigen::MatrixXd Di = d.X(rows, Eigen::all);
        const Eigen::VectorXd wi = d.w(rows);
        const Eigen::VectorXd wr = wi.cwiseProduct(resid(rows));
        const Eigen::MatrixXd Bi = Di.transpose() * wi.asDiagonal() * Di;
        const Eigen::VectorXd Ui = Di.transpose() * wr;
        parts.bread += Bi;
        parts.meat += Ui * Ui.transpose();
        if (wi.sum() > 0.0) ++parts.n_used;
        cluster_bread.push_back(Bi);
        cluster_score.push_back(Ui);
    }

    if (!corrected) return parts;

    Eigen::LDLT<Eigen::MatrixXd> bread_ldlt(parts.bread);
    if (bread_ldlt.info() != Eigen::Success)
        throw MrtError(Err::SingularBread, "bread matrix is not positive definite");

    const Eigen::MatrixXd Iq = Eigen::MatrixXd::Identity(q, q);
    for (std::size_t k = 0; k < d.clusters.size(); ++k) {
        const auto& [start, len] = d.clusters[k];
        const auto rows = Eigen::seqN(static_cast<Eigen::Index>(start),
                                      static_cast<Eigen::Index>(len));
        const Eigen::VectorXd wi = d.w(rows);
        const Eigen::VectorXd wr = wi.cwiseProduct(resid(rows));
        if (wr.lpNorm<Eigen::Infinity>() <= wr_tol) continue;
        const Eigen::MatrixXd Di = d.X(rows, Eigen::all);
        const Eigen::VectorXd gi = bread_ldlt.solve(cluster_score[k]);
        const Eigen::MatrixXd Si = Iq - bread_ldlt.solve(cluster_bread[k]);
        Eigen::FullPivLU<Eigen::MatrixXd> lu(Si);
        if (!lu.isInvertible())
            throw MrtError(Err::LeverageSingular,
                           "participant leverage correction is singular");
        const Eigen::VectorXd ci = lu.solve(gi);
        const Eigen::VectorXd infl = resid(rows) + Di * ci;
        const Eigen::VectorXd Ut = Di.transpose() * wi.cwiseProduct(infl);
        parts.meat_corr += Ut * Ut.transpose();
    }
    return parts;
}

inline Eigen::MatrixXd wrap_bread(const Eigen::MatrixXd& bread,
                                  const Eigen::MatrixXd& meat)
{
    Eigen::LDLT<Eigen::MatrixXd> ldlt(bread);
    const Eigen::MatrixXd half = ldlt.solve(meat);
    Eigen::MatrixXd v = ldlt.solve(half.transpose()).transpose();
    return 0.5 * (v + v.transpose());
}

} // namespace detail

// Robust clustered covariance of (α̂, β̂) at the given coefficients.
inline Eigen::MatrixXd sandwich_vcov(const Design& d, const Eigen::VectorXd& theta)
{
    const auto parts = detail::sandwich_parts(d, theta, /*corrected=*/false);
    return detail::wrap_bread(parts.bread, parts.meat);
}

// Mancl–DeRouen corrected covariance and the (1, n − q) degrees of freedom.
inline std::pair<Eigen::MatrixXd, std::pair<int, Eigen::Index>>
small_sample_correct(const Design& d, const Eigen::VectorXd& theta)
{
    const auto parts = detail::sandwich_parts(d, theta);
    const Eigen::Index df2 = parts.n_used - d.X.cols();
    return {detail::wrap_bread(parts.bread, parts.meat_corr), {1, df2}};
}

inline FitResult wcls_fit(const Design& d)
{
    const Eigen::Index q = d.X.cols();
    if (d.rows_avail == 0)
        throw MrtError(Err::NoAvailableRows, "no available rows to fit");

    // Weighted least squares on the centered design via column-pivoted QR.
    const Eigen::VectorXd sw = d.w.cwiseSqrt();
    const Eigen::MatrixXd Xw = sw.asDiagonal() * d.X;
    const Eigen::VectorXd yw = sw.cwiseProduct(d.y);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xw);
    if (qr.rank() < q) {
        const auto perm = qr.colsPermutation().indices();
        std::string names;
        for (Eigen::Index j = qr.rank(); j < q; ++j) {
            if (!names.empty()) names += ", ";
            names += d.colnames[static_cast<std::size_t>(perm[j])];
        }
        throw MrtError(Err::RankDeficient, "collinear design columns: " + names);
    }
    const Eigen::VectorXd diag = qr.matrixR().diagonal().head(q).cwiseAbs();
    const double cond = diag.maxCoeff() / diag.minCoeff();
    // QR condition of the weighted design; the bread's condition is its square.
    if (cond * cond > 1e12)
        throw MrtError(Err::SingularBread,
                       "bread condition estimate exceeds 1e12");

    FitResult fit;
    fit.theta = qr.solve(yw);
    fit.colnames = d.colnames;
    fit.is_beta = d.is_beta;
    fit.q_alpha = d.q_alpha;
    fit.q_beta = d.q_beta;
    fit.alpha_hat = fit.theta.head(d.q_alpha);
    fit.beta_hat = fit.theta.tail(q - d.q_alpha);

    // Estimating-equation residual: the gradient of the weighted objective.
    const Eigen::VectorXd resid = d.y - d.X * fit.theta;
    const double ee = (d.X.transpose() * d.w.cwiseProduct(resid)).norm();
    const double ee_tol = 1e-8 * (1.0 + d.y.norm());
    if (ee > ee_tol)
        throw MrtError(Err::NotConverged,
                       "estimating equation residual " + csv::format_double(ee) +
                           " exceeds tolerance");

    const auto parts = detail::sandwich_parts(d, fit.theta);
    fit.vcov = detail::wrap_bread(parts.bread, parts.meat);
    fit.vcov_corrected = detail::wrap_bread(parts.bread, parts.meat_corr);
    fit.df = {1, parts.n_used - q};
    fit.se = fit.vcov_corrected.diagonal().cwiseMax(0.0).cwiseSqrt();
    fit.se_uncorrected = fit.vcov.diagonal().cwiseMax(0.0).cwiseSqrt();
    fit.diag.ee_residual = ee;
    fit.diag.bread_condition = cond * cond;
    fit.diag.rows_total = d.rows_total;
    fit.diag.rows_avail = d.rows_avail;
    fit.diag.n_participants = parts.n_used;
    fit.diag.q = q;

    for (Eigen::Index j = 0; j < q; ++j) {
        CoefRow row;
        row.name = d.colnames[static_cast<std::size_t>(j)];
        row.is_beta = d.is_beta[static_cast<std::size_t>(j)] != 0;
        row.estimate = fit.theta[j];
        row.se = fit.se[j];
        if (fit.df.second > 0) {
            const InferenceRow inf = inference(row.estimate, row.se, fit.df.second);
            row.hotelling = inf.hotelling;
            row.p_value = inf.p_value;
            row.lcl = inf.lcl;
            row.ucl = inf.ucl;
        } else {
            // Saturated fits (participants ≤ parameters) have no residual
            // degrees of freedom; estimates are valid, inference is not.
            row.hotelling = std::numeric_limits<double>::quiet_NaN();
            row.p_value = std::numeric_limits<double>::quiet_NaN();
            row.lcl = row.estimate;
            row.ucl = row.estimate;
        }
        fit.table.push_back(std::move(row));
    }
    return fit;
}

inline FitResult wcls_fit(const MrtDataset& ds, const ModelSpec& spec)
{
    return wcls_fit(build_design(ds, spec));
}

} // namespace mrt
