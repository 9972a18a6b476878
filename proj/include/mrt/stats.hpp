#pragma once

#include <cmath>
#include <limits>

#include "mrt/error.hpp"

namespace mrt::stats {

namespace detail {

// Continued-fraction kernel for the regularized incomplete beta function
// (modified Lentz algorithm). Valid for x < (a+1)/(a+b+2); the caller uses
// the symmetry relation for the other half of the domain.
inline double beta_cf(double a, double b, double x)
{
    constexpr double tiny = 1e-300;
    constexpr double eps = 3e-16;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 600; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) return h;
    }
    throw MrtError(Err::NotConverged, "incomplete beta continued fraction did not converge");
}

} // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double inc_beta(double a, double b, double x)
{
    if (!(a > 0.0) || !(b > 0.0))
        throw MrtError(Err::InvalidArgument, "inc_beta requires a > 0 and b > 0");
    if (std::isnan(x)) return std::numeric_limits<double>::quiet_NaN();
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double lbeta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    const double lfront = a * std::log(x) + b * std::log1p(-x) - lbeta;
    if (x < (a + 1.0) / (a + b + 2.0))
        return std::exp(lfront) * detail::beta_cf(a, b, x) / a;
    return 1.0 - std::exp(lfront) * detail::beta_cf(b, a, 1.0 - x) / b;
}

// F distribution with (d1, d2) degrees of freedom.
inline double f_cdf(double x, double d1, double d2)
{
    if (!(d1 > 0.0) || !(d2 > 0.0))
        throw MrtError(Err::InvalidArgument, "f_cdf requires positive degrees of freedom");
    if (x <= 0.0) return 0.0;
    return inc_beta(d1 / 2.0, d2 / 2.0, d1 * x / (d1 * x + d2));
}

// Upper tail P(F > x), computed directly to avoid cancellation for tiny p.
inline double f_sf(double x, double d1, double d2)
{
    if (!(d1 > 0.0) || !(d2 > 0.0))
        throw MrtError(Err::InvalidArgument, "f_sf requires positive degrees of freedom");
    if (x <= 0.0) return 1.0;
    return inc_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * x));
}

// Student t distribution with nu degrees of freedom.
inline double t_cdf(double x, double nu)
{
    if (!(nu > 0.0))
        throw MrtError(Err::InvalidArgument, "t_cdf requires nu > 0");
    if (x == 0.0) return 0.5;
    const double ib = inc_beta(nu / 2.0, 0.5, nu / (nu + x * x));
    return x > 0.0 ? 1.0 - 0.5 * ib : 0.5 * ib;
}

// Quantile of the t distribution, by bisection on the CDF. The CDF is
// strictly increasing, so 200 halvings of an expanding bracket reach
// full double precision.
inline double t_quantile(double p, double nu)
{
    if (!(nu > 0.0))
        throw MrtError(Err::InvalidArgument, "t_quantile requires nu > 0");
    if (!(p > 0.0 && p < 1.0))
        throw MrtError(Err::InvalidArgument, "t_quantile requires p in (0,1)");
    if (p == 0.5) return 0.0;
    if (p < 0.5) return -t_quantile(1.0 - p, nu);
    double lo = 0.0, hi = 1.0;
    while (t_cdf(hi, nu) < p) {
        hi *= 2.0;
        if (hi > 1e300)
            throw MrtError(Err::NotConverged, "t_quantile bracket expansion failed");
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        (t_cdf(mid, nu) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace mrt::stats
