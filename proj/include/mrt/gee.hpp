#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mrt/dataset.hpp"
#include "mrt/error.hpp"

namespace mrt {

enum class WorkingCorr { Independence, Exchangeable, Ar1 };

inline std::string working_corr_name(WorkingCorr c)
{
    switch (c) {
    case WorkingCorr::Independence: return "independence";
    case WorkingCorr::Exchangeable: return "exchangeable";
    case WorkingCorr::Ar1: return "ar1";
    }
    return "";
}

// Mean model: intercept + covariates + treatment indicator + treatment
// interactions, with an identity link and Gaussian working variance. This is
// deliberately minimal: just enough to contrast against the weighted,
// centered estimator.
struct GeeSpec {
    std::vector<std::string> covariates;
    std::vector<std::string> interactions;
    WorkingCorr working = WorkingCorr::Exchangeable;
    int max_iter = 200;
    double tol = 1e-10;

    void validate() const
    {
        if (tol <= 0.0) throw MrtError(Err::InvalidArgument, "gee tol must be > 0");
        if (max_iter < 1) throw MrtError(Err::InvalidArgument, "gee max_iter must be >= 1");
    }
};

struct GeeResult {
    Eigen::VectorXd coef;
    std::vector<std::string> colnames;
    double rho = 0.0;
    double sigma2 = 1.0;
    Eigen::MatrixXd vcov_robust;
    Eigen::VectorXd se;
    bool converged = false;
    int iterations = 0;
    Eigen::Index n_participants = 0;
    Eigen::Index q = 0;
};

namespace detail {

// Available rows of each participant, plus their decision-point values
// (needed for the AR(1) structure on irregularly spaced panels).
struct GeePanels {
    std::vector<std::vector<std::size_t>> rows;
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    std::vector<std::string> colnames;
};

inline GeePanels gee_panels(const MrtDataset& ds, const GeeSpec& spec)
{
    if (ds.arms.size() != 1)
        throw MrtError(Err::InvalidArgument,
                       "gee comparison is defined for single-arm trials");
    GeePanels p;
    const std::size_t nrows = ds.n_rows();
    const Eigen::Index q = 2 + static_cast<Eigen::Index>(spec.covariates.size() +
                                                         spec.interactions.size());
    p.X.resize(static_cast<Eigen::Index>(nrows), q);
    p.y.resize(static_cast<Eigen::Index>(nrows));
    p.colnames.push_back("intercept");
    for (const auto& c : spec.covariates) p.colnames.push_back(c);
    p.colnames.push_back("treatment");
    for (const auto& c : spec.interactions) p.colnames.push_back("treatment:" + c);

    std::vector<const std::vector<double>*> cov_cols, int_cols;
    for (const auto& c : spec.covariates) cov_cols.push_back(&ds.covariate(c));
    for (const auto& c : spec.interactions) int_cols.push_back(&ds.covariate(c));

    for (const auto& [start, len] : ds.participants) {
        std::vector<std::size_t> keep;
        for (std::size_t i = start; i < start + len; ++i) {
            if (!ds.avail[i]) continue;
            keep.push_back(i);
            const Eigen::Index r = static_cast<Eigen::Index>(i);
            const double A = ds.arm_idx[i] == 0 ? 1.0 : 0.0;
            Eigen::Index col = 0;
            p.X(r, col++) = 1.0;
            for (const auto* c : cov_cols) p.X(r, col++) = (*c)[i];
            p.X(r, col++) = A;
            for (const auto* c : int_cols) p.X(r, col++) = A * (*c)[i];
            p.y[r] = ds.outcome[i];
        }
        if (!keep.empty()) p.rows.push_back(std::move(keep));
    }
    if (p.rows.empty()) throw MrtError(Err::NoAvailableRows, "no available rows");
    return p;
}

// Working correlation matrix for one panel given the decision points.
inline Eigen::MatrixXd working_corr_matrix(WorkingCorr w, double rho,
                                           const std::vector<double>& tvals)
{
    const Eigen::Index T = static_cast<Eigen::Index>(tvals.size());
    Eigen::MatrixXd R = Eigen::MatrixXd::Identity(T, T);
    if (w == WorkingCorr::Independence) return R;
    for (Eigen::Index j = 0; j < T; ++j)
        for (Eigen::Index k = j + 1; k < T; ++k) {
            const double r = (w == WorkingCorr::Exchangeable)
                                 ? rho
                                 : std::pow(rho, std::abs(tvals[static_cast<std::size_t>(j)] -
                                                          tvals[static_cast<std::size_t>(k)]));
            R(j, k) = r;
            R(k, j) = r;
        }
    return R;
}

} // namespace detail

inline GeeResult gee_fit(const MrtDataset& ds, const GeeSpec& spec)
{
    spec.validate();
    const auto panels = detail::gee_panels(ds, spec);
    const Eigen::Index q = panels.X.cols();

    GeeResult res;
    res.colnames = panels.colnames;
    res.q = q;
    res.n_participants = static_cast<Eigen::Index>(panels.rows.size());

    Eigen::VectorXd theta = Eigen::VectorXd::Zero(q);
    double rho = 0.0, sigma2 = 1.0;
    std::size_t n_obs = 0;
    for (const auto& rows : panels.rows) n_obs += rows.size();
    if (static_cast<Eigen::Index>(n_obs) <= q)
        throw MrtError(Err::InvalidArgument, "fewer observations than parameters");

    const int total_iters =
        spec.working == WorkingCorr::Independence ? 1 : spec.max_iter;
    bool converged = false;
    int used = 0;
    for (int iter = 0; iter < total_iters; ++iter) {
        Eigen::MatrixXd B = Eigen::MatrixXd::Zero(q, q);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(q);
        for (const auto& rows : panels.rows) {
            std::vector<double> tvals;
            for (std::size_t i : rows) tvals.push_back(ds.t[i]);
            const Eigen::MatrixXd R =
                detail::working_corr_matrix(spec.working, rho, tvals);
            Eigen::LLT<Eigen::MatrixXd> llt(R);
            if (llt.info() != Eigen::Success)
                throw MrtError(Err::NotConverged,
                               "working correlation is not positive definite");
            Eigen::MatrixXd Xi(rows.size(), q);
            Eigen::VectorXd yi(rows.size());
            for (std::size_t k = 0; k < rows.size(); ++k) {
                Xi.row(static_cast<Eigen::Index>(k)) =
                    panels.X.row(static_cast<Eigen::Index>(rows[k]));
                yi[static_cast<Eigen::Index>(k)] =
                    panels.y[static_cast<Eigen::Index>(rows[k])];
            }
            const Eigen::MatrixXd RinvX = llt.solve(Xi);
            B += Xi.transpose() * RinvX;
            rhs += RinvX.transpose() * yi;
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(B);
        if (qr.rank() < q)
            throw MrtError(Err::RankDeficient, "gee design is rank deficient");
        const Eigen::VectorXd theta_new = qr.solve(rhs);
        ++used;

        // Moment updates from the new residuals.
        double ss = 0.0, cross = 0.0;
        double pair_count = 0.0;
        for (const auto& rows : panels.rows) {
            std::vector<double> e;
            for (std::size_t i : rows)
                e.push_back(panels.y[static_cast<Eigen::Index>(i)] -
                            panels.X.row(static_cast<Eigen::Index>(i)).dot(theta_new));
            for (double v : e) ss += v * v;
            if (spec.working == WorkingCorr::Exchangeable) {
                for (std::size_t j = 0; j < e.size(); ++j)
                    for (std::size_t k = j + 1; k < e.size(); ++k) {
                        cross += e[j] * e[k];
                        pair_count += 1.0;
                    }
            } else if (spec.working == WorkingCorr::Ar1) {
                for (std::size_t j = 0; j + 1 < e.size(); ++j)
                    if (ds.t[rows[j + 1]] - ds.t[rows[j]] == 1) {
                        cross += e[j] * e[j + 1];
                        pair_count += 1.0;
                    }
            }
        }
        sigma2 = ss / static_cast<double>(static_cast<Eigen::Index>(n_obs) - q);
        const double denom = pair_count - static_cast<double>(q);
        double rho_new = 0.0;
        if (spec.working != WorkingCorr::Independence && denom > 0.0 && sigma2 > 0.0)
            rho_new = cross / (denom * sigma2);
        rho_new = std::clamp(rho_new, -0.99, 0.99);

        const double change = (theta_new - theta).lpNorm<Eigen::Infinity>();
        const bool theta_ok =
            change <= spec.tol * (1.0 + theta_new.lpNorm<Eigen::Infinity>());
        const bool rho_ok = std::abs(rho_new - rho) <= spec.tol * (1.0 + std::abs(rho_new));
        theta = theta_new;
        rho = rho_new;
        if (spec.working == WorkingCorr::Independence || (iter > 0 && theta_ok && rho_ok)) {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw MrtError(Err::NotConverged,
                       "gee did not converge in " + std::to_string(used) + " iterations");

    res.coef = theta;
    res.rho = spec.working == WorkingCorr::Independence ? 0.0 : rho;
    res.sigma2 = sigma2;
    res.converged = true;
    res.iterations = used;

    // Robust clustered sandwich at the final coefficients.
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(q, q);
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(q, q);
    for (const auto& rows : panels.rows) {
        std::vector<double> tvals;
        for (std::size_t i : rows) tvals.push_back(ds.t[i]);
        const Eigen::MatrixXd R = detail::working_corr_matrix(spec.working, res.rho, tvals);
        Eigen::LLT<Eigen::MatrixXd> llt(R);
        if (llt.info() != Eigen::Success)
            throw MrtError(Err::NotConverged, "working correlation is not positive definite");
        Eigen::MatrixXd Xi(rows.size(), q);
        Eigen::VectorXd ri(rows.size());
        for (std::size_t k = 0; k < rows.size(); ++k) {
            const Eigen::Index i = static_cast<Eigen::Index>(rows[k]);
            Xi.row(static_cast<Eigen::Index>(k)) = panels.X.row(i);
            ri[static_cast<Eigen::Index>(k)] = panels.y[i] - panels.X.row(i).dot(theta);
        }
        const Eigen::MatrixXd RinvX = llt.solve(Xi);
        B += Xi.transpose() * RinvX;
        const Eigen::VectorXd Ui = RinvX.transpose() * ri;
        meat += Ui * Ui.transpose();
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(B);
    Eigen::MatrixXd v = ldlt.solve(ldlt.solve(meat).transpose()).transpose();
    res.vcov_robust = 0.5 * (v + v.transpose());
    res.se = res.vcov_robust.diagonal().cwiseMax(0.0).cwiseSqrt();
    return res;
}

// Empirical off-diagonal cross terms of the two-period estimating equation,
// one entry per mean-model column (intercept, covariate, treatment,
// treatment-by-covariate). Nonzero covariate/interaction entries are the
// fingerprint of endogeneity under non-independence weighting.
inline Eigen::Vector4d bias_decomposition(const MrtDataset& ds, const GeeSpec& spec,
                                          const GeeResult& fit)
{
    if (spec.covariates.size() != 1 || spec.interactions.size() != 1 ||
        spec.covariates[0] != spec.interactions[0])
        throw MrtError(Err::ShapeError,
                       "decomposition is defined for the single-covariate model "
                       "with one treatment interaction");
    const auto panels = detail::gee_panels(ds, spec);
    const double denom = fit.sigma2 * (1.0 - fit.rho * fit.rho);
    if (denom <= 0.0)
        throw MrtError(Err::InvalidArgument, "degenerate working covariance");
    const double w_off = -fit.rho / denom;

    Eigen::Vector4d acc = Eigen::Vector4d::Zero();
    for (const auto& rows : panels.rows) {
        if (rows.size() != 2)
            throw MrtError(Err::ShapeError,
                           "decomposition requires exactly two decision points "
                           "per participant");
        const Eigen::Index i1 = static_cast<Eigen::Index>(rows[0]);
        const Eigen::Index i2 = static_cast<Eigen::Index>(rows[1]);
        const double r1 = panels.y[i1] - panels.X.row(i1).dot(fit.coef);
        const double r2 = panels.y[i2] - panels.X.row(i2).dot(fit.coef);
        // Columns: intercept, X, A, A*X.
        const double x1 = panels.X(i1, 1), x2 = panels.X(i2, 1);
        const double a1 = panels.X(i1, 2), a2 = panels.X(i2, 2);
        acc[0] += w_off * (r1 + r2);
        acc[1] += w_off * (x2 * r1 + x1 * r2);
        acc[2] += w_off * (a2 * r1 + a1 * r2);
        acc[3] += w_off * (a2 * x2 * r1 + a1 * x1 * r2);
    }
    return acc / static_cast<double>(panels.rows.size());
}

} // namespace mrt
