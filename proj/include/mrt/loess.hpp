#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mrt/dataset.hpp"
#include "mrt/design.hpp"
#include "mrt/error.hpp"
#include "mrt/estimator.hpp"
#include "mrt/stats.hpp"

namespace mrt {

struct LoessSpec {
    double span = 2.0 / 3.0;
    int degree = 2;
    std::vector<double> grid; // empty -> integer days 0..41

    void validate(std::size_t n_distinct) const
    {
        if (!(span > 0.0 && span <= 1.0))
            throw MrtError(Err::InvalidArgument, "span must lie in (0,1]");
        if (degree < 0)
            throw MrtError(Err::InvalidArgument, "degree must be >= 0");
        if (span * static_cast<double>(n_distinct) <
            static_cast<double>(degree + 1))
            throw MrtError(Err::InvalidArgument,
                           "span times the number of distinct abscissae must be "
                           "at least degree + 1");
    }

    std::vector<double> grid_or_default() const
    {
        if (!grid.empty()) {
            for (std::size_t i = 1; i < grid.size(); ++i)
                if (!(grid[i] > grid[i - 1]))
                    throw MrtError(Err::InvalidArgument,
                                   "grid must be strictly increasing");
            return grid;
        }
        std::vector<double> g;
        for (int d = 0; d <= 41; ++d) g.push_back(static_cast<double>(d));
        return g;
    }
};

struct EffectCurve {
    std::vector<double> grid;
    std::vector<double> estimate;  // nonparametric effect at each grid point
    std::vector<double> local_se;  // corrected SE of each local fit
    std::vector<double> lcl;       // parametric-linear comparator band
    std::vector<double> ucl;
    std::vector<double> comparator; // linear-model effect at each grid point
};

namespace detail {

// Tricube weights for the ceil(span*N) nearest points; zero exactly at the
// window boundary, ties at the boundary included (with zero weight).
inline std::vector<double> tricube_weights(const std::vector<double>& x, double g,
                                           double span)
{
    const std::size_t n = x.size();
    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) dist[i] = std::abs(x[i] - g);
    std::vector<double> sorted = dist;
    const std::size_t k = std::min<std::size_t>(
        n, static_cast<std::size_t>(
               std::ceil(span * static_cast<double>(n))));
    std::nth_element(sorted.begin(), sorted.begin() + (k - 1), sorted.end());
    const double dmax = sorted[k - 1];
    std::vector<double> w(n, 0.0);
    if (dmax == 0.0)
        throw MrtError(Err::WindowRankDeficient,
                       "window at " + csv::format_double(g) +
                           " has zero radius (all nearest abscissae coincide)");
    for (std::size_t i = 0; i < n; ++i) {
        const double u = dist[i] / dmax;
        if (u < 1.0) {
            const double c = 1.0 - u * u * u;
            w[i] = c * c * c;
        }
    }
    return w;
}

} // namespace detail

// Weighted local polynomial smoother: at each grid point, fit a degree-d
// polynomial in (x - g) by least squares with tricube-times-base weights and
// report the fitted value at g.
inline EffectCurve loess_fit(const std::vector<double>& x, const std::vector<double>& y,
                             const std::vector<double>& w_base, const LoessSpec& spec)
{
    if (x.size() != y.size() || x.size() != w_base.size())
        throw MrtError(Err::ShapeError, "x, y, and weights must have equal length");
    if (x.empty()) throw MrtError(Err::InvalidArgument, "empty input");
    std::vector<double> distinct = x;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    spec.validate(distinct.size());

    EffectCurve curve;
    curve.grid = spec.grid_or_default();
    const Eigen::Index p = spec.degree + 1;
    for (double g : curve.grid) {
        const std::vector<double> kw = detail::tricube_weights(x, g, spec.span);
        std::vector<std::size_t> in;
        for (std::size_t i = 0; i < x.size(); ++i)
            if (kw[i] * w_base[i] > 0.0) in.push_back(i);
        if (static_cast<Eigen::Index>(in.size()) < p)
            throw MrtError(Err::WindowRankDeficient,
                           "window at " + csv::format_double(g) +
                               " has fewer weighted points than coefficients");
        Eigen::MatrixXd V(in.size(), p);
        Eigen::VectorXd yy(in.size());
        for (std::size_t r = 0; r < in.size(); ++r) {
            const double sw = std::sqrt(kw[in[r]] * w_base[in[r]]);
            const double dx = x[in[r]] - g;
            double pow = 1.0;
            for (Eigen::Index c = 0; c < p; ++c) {
                V(static_cast<Eigen::Index>(r), c) = sw * pow;
                pow *= dx;
            }
            yy[static_cast<Eigen::Index>(r)] = sw * y[in[r]];
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(V);
        if (qr.rank() < p)
            throw MrtError(Err::WindowRankDeficient,
                           "window at " + csv::format_double(g) +
                               " is rank deficient (needs more distinct abscissae)");
        curve.estimate.push_back(qr.solve(yy)[0]);
    }
    return curve;
}

// Time-varying excursion effect: at each grid day, refit the weighted
// centered model with an intercept-plus-quadratic moderator in centered day
// and tricube row weights; the local intercept is the effect at that day.
// The comparator is the plain linear-in-day fit with its corrected band.
inline EffectCurve effect_over_time(const MrtDataset& ds, const ModelSpec& spec,
                                    const LoessSpec& lspec,
                                    const std::string& day_col = "day")
{
    spec.validate();
    if (spec.arms.size() != 1)
        throw MrtError(Err::InvalidArgument,
                       "effect_over_time is defined for single-arm trials");
    const std::string arm = spec.arms[0];
    {
        const auto it = spec.moderator_terms.find(arm);
        const bool has_day =
            it != spec.moderator_terms.end() &&
            std::find(it->second.begin(), it->second.end(), Term{day_col}) !=
                it->second.end();
        if (!has_day || it->second.size() != 1)
            throw MrtError(Err::InvalidArgument,
                           "the comparator model must moderate by exactly (1, " +
                               day_col + ")");
    }
    const std::vector<double>& day = ds.covariate(day_col);

    // Abscissae in scope: the available rows that actually enter the fits.
    std::vector<double> day_avail;
    for (std::size_t i = 0; i < ds.n_rows(); ++i)
        if (ds.avail[i]) day_avail.push_back(day[i]);
    if (day_avail.empty()) throw MrtError(Err::NoAvailableRows, "no available rows");
    std::vector<double> distinct = day_avail;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    lspec.validate(distinct.size());

    EffectCurve curve;
    curve.grid = lspec.grid_or_default();

    // Linear comparator with its pointwise corrected band.
    const FitResult lin = wcls_fit(ds, spec);
    const Eigen::Index b0 = lin.q_alpha;
    const double tq = lin.df.second > 0
                          ? stats::t_quantile(0.975, static_cast<double>(lin.df.second))
                          : std::numeric_limits<double>::quiet_NaN();
    for (double g : curve.grid) {
        const double est = lin.theta[b0] + lin.theta[b0 + 1] * g;
        const double var = lin.vcov_corrected(b0, b0) +
                           2.0 * g * lin.vcov_corrected(b0, b0 + 1) +
                           g * g * lin.vcov_corrected(b0 + 1, b0 + 1);
        const double half = tq * std::sqrt(std::max(var, 0.0));
        curve.comparator.push_back(est);
        curve.lcl.push_back(est - half);
        curve.ucl.push_back(est + half);
    }

    // Augmented copy carrying the centered-day columns, refilled per grid
    // point. Row order and validation state are untouched.
    MrtDataset aug = ds;
    for (const auto& name : {"_dayc", "_dayc2"})
        if (aug.covariate_index(name) >= 0)
            throw MrtError(Err::InvalidArgument,
                           std::string("column name '") + name + "' is reserved");
    aug.covariate_names.push_back("_dayc");
    aug.covariate_names.push_back("_dayc2");
    aug.covs.emplace_back(ds.n_rows(), 0.0);
    aug.covs.emplace_back(ds.n_rows(), 0.0);
    const std::size_t c1 = aug.covs.size() - 2, c2 = aug.covs.size() - 1;

    ModelSpec local = spec;
    local.control_terms.clear();
    for (const auto& t : spec.control_terms)
        if (std::find(t.begin(), t.end(), day_col) == t.end())
            local.control_terms.push_back(t);
    local.control_terms.push_back({"_dayc"});
    local.control_terms.push_back({"_dayc2"});
    local.moderator_terms.clear();
    local.moderator_terms[arm] = {{"_dayc"}, {"_dayc2"}};

    for (double g : curve.grid) {
        for (std::size_t i = 0; i < ds.n_rows(); ++i) {
            const double dc = day[i] - g;
            aug.covs[c1][i] = dc;
            aug.covs[c2][i] = dc * dc;
        }
        const std::vector<double> kw =
            detail::tricube_weights(day_avail, g, lspec.span);
        Design d = build_design(aug, local);
        std::size_t k = 0;
        for (std::size_t i = 0; i < ds.n_rows(); ++i)
            if (ds.avail[i]) d.w[static_cast<Eigen::Index>(i)] *= kw[k++];
        const FitResult fit = wcls_fit(d);
        curve.estimate.push_back(fit.theta[fit.q_alpha]);
        curve.local_se.push_back(fit.se[fit.q_alpha]);
    }
    return curve;
}

} // namespace mrt
