#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <type_traits>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrt/dataset.hpp"
#include "mrt/error.hpp"
#include "mrt/estimator.hpp"
#include "mrt/gee.hpp"
#include "mrt/rng.hpp"
#include "mrt/stats.hpp"

namespace mrt {

// ---------------------------------------------------------------------------
// Scenario parameter sets. Every field is configurable through JSON; the
// defaults define the canonical study. noise SDs may be set to zero by tests
// to check conditional means exactly.
// ---------------------------------------------------------------------------

// Longitudinal efficiency study: always-available participants, constant
// randomization, AR(1)-style outcome with a lagged term.
struct StationaryAr1Params {
    std::size_t n = 37;
    long T = 210;
    double prob = 0.6;        // randomization probability
    double intercept = 1.6085;
    double x_coef = 0.4037;
    double lag_coef = 0.0655;
    double effect = 0.1229;   // constant excursion effect
    double noise_sd = 2.716;
    // Zero-inflated covariate: value x_zero_value with probability
    // x_zero_prob, else Normal(x_mu, x_sd) truncated below at x_zero_value.
    double x_zero_prob = 0.4;
    double x_zero_value = -0.6931471805599453; // log(0.5)
    double x_mu = 3.5;
    double x_sd = 2.0;
    // Test overrides: pin the covariate, the initial lag, or the treatment.
    std::optional<double> x_const;
    std::optional<double> y1_const;
    std::optional<int> force_a;
};

// Two-period panel where the second-period covariate is the first proximal
// outcome itself; a shared participant shock keeps the within-person
// correlation away from zero. Per-period error SDs differ so that
// non-independence weighting actually shifts the effect estimate.
struct EndogenousParams {
    std::size_t n = 1000;
    double prob = 0.6;
    double a0 = 1.0;
    double a1 = 0.5;
    double b0 = 0.8;
    double b1 = 0.2;
    double tau = 1.5;    // SD of the shared participant shock
    double e1_sd = 0.5;
    double e2_sd = 2.0;
    bool exogenous = false; // redraw X2 independently (escape hatch)
};

// Time-varying availability and a time-varying effect; the marginal
// (intercept-only) estimand is the availability-weighted average effect.
struct AvailabilityParams {
    std::size_t n = 150;
    long T = 24;
    double q_start = 0.9; // availability probability at day 0
    double q_end = 0.3;   // ... at the last day
    double p_hi = 0.7;    // randomization probability when x > 0
    double p_lo = 0.4;
    double beta_start = 0.5; // effect at day 0
    double beta_end = 0.1;   // ... at the last day
    double beta_quad = 0.0;  // curvature around the middle day
    double gamma0 = 0.5;
    double gamma_x = 1.0;
    double noise_sd = 1.0;
};

// Two treatment arms plus control with a binary context moderator.
struct MultiArmParams {
    std::size_t n = 100;
    long T = 50;
    double p_walking = 0.3;
    double p_antisedentary = 0.3;
    double g0 = 1.0;
    double g_x = 0.5;
    double g_loc = 0.3;
    double walking0 = 0.3;
    double walking_loc = 0.15;
    double antisedentary0 = 0.1;
    double antisedentary_loc = -0.05;
    double noise_sd = 1.0;
};

using SimScenario =
    std::variant<StationaryAr1Params, EndogenousParams, AvailabilityParams, MultiArmParams>;

inline std::string scenario_kind(const SimScenario& sc)
{
    switch (sc.index()) {
    case 0: return "stationary_ar1";
    case 1: return "endogenous_two_period";
    case 2: return "availability_marginal";
    case 3: return "multi_arm";
    }
    return "";
}

namespace detail {

inline void check_prob(double p, const std::string& what)
{
    if (!(p > 0.0 && p < 1.0))
        throw MrtError(Err::InvalidArgument, what + " must lie in (0,1)");
}

inline void check_sd(double sd, const std::string& what)
{
    // Zero is allowed as a test override for exact-mean checks.
    if (!(sd >= 0.0) || !std::isfinite(sd))
        throw MrtError(Err::InvalidArgument, what + " must be >= 0");
}

inline void check_size(std::size_t n, long T)
{
    if (n < 1) throw MrtError(Err::InvalidArgument, "n must be >= 1");
    if (T < 1) throw MrtError(Err::InvalidArgument, "T must be >= 1");
}

inline std::string participant_id(std::size_t i) { return "p" + std::to_string(i + 1); }

} // namespace detail

// Mean of a Normal(mu, sd) truncated below at lo.
inline double truncated_normal_mean(double mu, double sd, double lo)
{
    const double a = (lo - mu) / sd;
    const double phi = std::exp(-0.5 * a * a) / std::sqrt(2.0 * std::acos(-1.0));
    const double tail = 0.5 * std::erfc(a / std::sqrt(2.0));
    return mu + sd * phi / tail;
}

// Stationary marginal of the outcome recursion with the covariate and
// treatment held at their means; used to initialize the lag at t = 1.
inline std::pair<double, double> stationary_ar1_moments(const StationaryAr1Params& p)
{
    const double mu_x = p.x_zero_prob * p.x_zero_value +
                        (1.0 - p.x_zero_prob) *
                            truncated_normal_mean(p.x_mu, p.x_sd, p.x_zero_value);
    const double mean = (p.intercept + p.x_coef * mu_x) / (1.0 - p.lag_coef);
    const double sd = p.noise_sd / std::sqrt(1.0 - p.lag_coef * p.lag_coef);
    return {mean, sd};
}

inline MrtDataset gen_stationary_ar1(const StationaryAr1Params& p, Rng& rng)
{
    detail::check_size(p.n, p.T);
    detail::check_prob(p.prob, "prob");
    detail::check_sd(p.noise_sd, "noise_sd");
    detail::check_prob(p.x_zero_prob, "x_zero_prob");
    detail::check_sd(p.x_sd, "x_sd");
    if (p.x_sd <= 0.0)
        throw MrtError(Err::InvalidArgument, "x_sd must be > 0");

    const auto [y1_mean, y1_sd] = stationary_ar1_moments(p);

    MrtDataset ds;
    ds.arms = {"suggestion"};
    ds.covariate_names = {"x", "ylag", "day", "planning"};
    ds.probs.resize(1);
    ds.covs.resize(4);
    for (std::size_t i = 0; i < p.n; ++i) {
        double yprev = p.y1_const ? *p.y1_const : y1_mean + y1_sd * rng.normal();
        for (long t = 1; t <= p.T; ++t) {
            double x;
            if (p.x_const) {
                x = *p.x_const;
            } else if (rng.uniform01() < p.x_zero_prob) {
                x = p.x_zero_value;
            } else {
                x = rng.truncated_normal_lower(p.x_mu, p.x_sd, p.x_zero_value);
            }
            const double a =
                p.force_a ? static_cast<double>(*p.force_a)
                          : (rng.bernoulli(p.prob) ? 1.0 : 0.0);
            const double planning = rng.bernoulli(0.5) ? 1.0 : 0.0;
            const double y = p.intercept + p.x_coef * x + p.lag_coef * yprev +
                             p.effect * (a - p.prob) + p.noise_sd * rng.normal();
            ds.pid.push_back(detail::participant_id(i));
            ds.t.push_back(t);
            ds.avail.push_back(1);
            ds.arm_idx.push_back(a == 1.0 ? 0 : -1);
            ds.outcome.push_back(y);
            ds.probs[0].push_back(p.prob);
            ds.covs[0].push_back(x);
            ds.covs[1].push_back(yprev);
            ds.covs[2].push_back(static_cast<double>((t - 1) * 42 / p.T));
            ds.covs[3].push_back(planning);
            yprev = y;
        }
    }
    ds.finalize();
    return ds;
}

inline MrtDataset gen_endogenous_two_period(const EndogenousParams& p, Rng& rng)
{
    detail::check_size(p.n, 2);
    detail::check_prob(p.prob, "prob");
    detail::check_sd(p.tau, "tau");
    detail::check_sd(p.e1_sd, "e1_sd");
    detail::check_sd(p.e2_sd, "e2_sd");

    MrtDataset ds;
    ds.arms = {"treat"};
    ds.covariate_names = {"x"};
    ds.probs.resize(1);
    ds.covs.resize(1);
    for (std::size_t i = 0; i < p.n; ++i) {
        const double x1 = rng.normal();
        const double u = p.tau * rng.normal();
        const double a1 = rng.bernoulli(p.prob) ? 1.0 : 0.0;
        const double y2 =
            p.a0 + p.a1 * x1 + a1 * (p.b0 + p.b1 * x1) + u + p.e1_sd * rng.normal();
        const double x2 = p.exogenous ? rng.normal() : y2;
        const double a2 = rng.bernoulli(p.prob) ? 1.0 : 0.0;
        const double y3 =
            p.a0 + p.a1 * x2 + a2 * (p.b0 + p.b1 * x2) + u + p.e2_sd * rng.normal();
        for (int t = 1; t <= 2; ++t) {
            ds.pid.push_back(detail::participant_id(i));
            ds.t.push_back(t);
            ds.avail.push_back(1);
            ds.arm_idx.push_back((t == 1 ? a1 : a2) == 1.0 ? 0 : -1);
            ds.outcome.push_back(t == 1 ? y2 : y3);
            ds.probs[0].push_back(p.prob);
            ds.covs[0].push_back(t == 1 ? x1 : x2);
        }
    }
    ds.finalize();
    return ds;
}

inline double availability_q(const AvailabilityParams& p, long day)
{
    const double frac = p.T == 1 ? 0.0
                                 : static_cast<double>(day) /
                                       static_cast<double>(p.T - 1);
    return p.q_start + (p.q_end - p.q_start) * frac;
}

inline double availability_beta(const AvailabilityParams& p, long day)
{
    const double frac = p.T == 1 ? 0.0
                                 : static_cast<double>(day) /
                                       static_cast<double>(p.T - 1);
    const double mid = static_cast<double>(p.T - 1) / 2.0;
    const double c = static_cast<double>(day) - mid;
    return p.beta_start + (p.beta_end - p.beta_start) * frac + p.beta_quad * c * c;
}

// The marginal estimand: availability-weighted average of the day-specific
// effect, computable in closed form from the scenario parameters.
inline double availability_marginal_target(const AvailabilityParams& p)
{
    double num = 0.0, den = 0.0;
    for (long d = 0; d < p.T; ++d) {
        const double q = availability_q(p, d);
        num += q * availability_beta(p, d);
        den += q;
    }
    return num / den;
}

inline MrtDataset gen_availability_marginal(const AvailabilityParams& p, Rng& rng)
{
    detail::check_size(p.n, p.T);
    detail::check_prob(p.p_hi, "p_hi");
    detail::check_prob(p.p_lo, "p_lo");
    detail::check_sd(p.noise_sd, "noise_sd");
    for (long d = 0; d < p.T; ++d) {
        const double q = availability_q(p, d);
        if (!(q > 0.0 && q <= 1.0))
            throw MrtError(Err::InvalidArgument,
                           "availability probability outside (0,1] at day " +
                               std::to_string(d));
    }

    MrtDataset ds;
    ds.arms = {"treat"};
    ds.covariate_names = {"x", "day"};
    ds.probs.resize(1);
    ds.covs.resize(2);
    for (std::size_t i = 0; i < p.n; ++i) {
        for (long d = 0; d < p.T; ++d) {
            const double x = rng.normal();
            const bool avail = rng.bernoulli(availability_q(p, d));
            const double prob = x > 0.0 ? p.p_hi : p.p_lo;
            const double a = avail && rng.bernoulli(prob) ? 1.0 : 0.0;
            const double y = p.gamma0 + p.gamma_x * x + a * availability_beta(p, d) +
                             p.noise_sd * rng.normal();
            ds.pid.push_back(detail::participant_id(i));
            ds.t.push_back(d + 1);
            ds.avail.push_back(avail ? 1 : 0);
            ds.arm_idx.push_back(a == 1.0 ? 0 : -1);
            // The untreated outcome is still recorded on unavailable rows;
            // estimation excludes them through the availability weight.
            ds.outcome.push_back(y);
            ds.probs[0].push_back(prob);
            ds.covs[0].push_back(x);
            ds.covs[1].push_back(static_cast<double>(d));
        }
    }
    ds.finalize();
    return ds;
}

inline MrtDataset gen_multi_arm(const MultiArmParams& p, Rng& rng)
{
    detail::check_size(p.n, p.T);
    detail::check_prob(p.p_walking, "p_walking");
    detail::check_prob(p.p_antisedentary, "p_antisedentary");
    if (!(p.p_walking + p.p_antisedentary < 1.0))
        throw MrtError(Err::InvalidArgument, "arm probabilities must sum below 1");
    detail::check_sd(p.noise_sd, "noise_sd");

    MrtDataset ds;
    // Stored alphabetically, matching CSV ingestion order.
    ds.arms = {"antisedentary", "walking"};
    ds.covariate_names = {"x", "location"};
    ds.probs.resize(2);
    ds.covs.resize(2);
    for (std::size_t i = 0; i < p.n; ++i) {
        for (long t = 1; t <= p.T; ++t) {
            const double x = rng.normal();
            const double loc = rng.bernoulli(0.5) ? 1.0 : 0.0;
            const double u = rng.uniform01();
            int arm = -1; // control
            double effect = 0.0;
            if (u < p.p_walking) {
                arm = 1; // "walking"
                effect = p.walking0 + p.walking_loc * loc;
            } else if (u < p.p_walking + p.p_antisedentary) {
                arm = 0; // "antisedentary"
                effect = p.antisedentary0 + p.antisedentary_loc * loc;
            }
            const double y =
                p.g0 + p.g_x * x + p.g_loc * loc + effect + p.noise_sd * rng.normal();
            ds.pid.push_back(detail::participant_id(i));
            ds.t.push_back(t);
            ds.avail.push_back(1);
            ds.arm_idx.push_back(arm);
            ds.outcome.push_back(y);
            ds.probs[0].push_back(p.p_antisedentary);
            ds.probs[1].push_back(p.p_walking);
            ds.covs[0].push_back(x);
            ds.covs[1].push_back(loc);
        }
    }
    ds.finalize();
    return ds;
}

inline MrtDataset simulate(const SimScenario& sc, Rng& rng)
{
    return std::visit(
        [&rng](const auto& p) -> MrtDataset {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, StationaryAr1Params>)
                return gen_stationary_ar1(p, rng);
            else if constexpr (std::is_same_v<P, EndogenousParams>)
                return gen_endogenous_two_period(p, rng);
            else if constexpr (std::is_same_v<P, AvailabilityParams>)
                return gen_availability_marginal(p, rng);
            else
                return gen_multi_arm(p, rng);
        },
        sc);
}

inline MrtDataset simulate(const SimScenario& sc, std::uint64_t seed)
{
    Rng rng(seed);
    return simulate(sc, rng);
}

// ---------------------------------------------------------------------------
// Scenario JSON (strict: unknown keys are errors so typos cannot silently
// fall back to defaults).
// ---------------------------------------------------------------------------

namespace detail {

class ParamReader {
public:
    explicit ParamReader(const nlohmann::json& j) : j_(j)
    {
        for (const auto& [key, value] : j.items()) {
            (void)value;
            unread_.push_back(key);
        }
    }

    void take(const char* key, double& out)
    {
        if (mark(key)) out = j_.at(key).get<double>();
    }
    void take(const char* key, std::size_t& out)
    {
        if (mark(key)) out = j_.at(key).get<std::size_t>();
    }
    void take(const char* key, long& out)
    {
        if (mark(key)) out = j_.at(key).get<long>();
    }
    void take(const char* key, bool& out)
    {
        if (mark(key)) out = j_.at(key).get<bool>();
    }
    void take(const char* key, std::optional<double>& out)
    {
        if (mark(key) && !j_.at(key).is_null()) out = j_.at(key).get<double>();
    }
    void take(const char* key, std::optional<int>& out)
    {
        if (mark(key) && !j_.at(key).is_null()) out = j_.at(key).get<int>();
    }

    void finish() const
    {
        if (!unread_.empty())
            throw MrtError(Err::ParseError,
                           "unknown scenario parameter '" + unread_.front() + "'");
    }

private:
    bool mark(const char* key)
    {
        const auto it = std::find(unread_.begin(), unread_.end(), key);
        if (it == unread_.end()) return j_.contains(key);
        unread_.erase(it);
        return true;
    }

    const nlohmann::json& j_;
    std::vector<std::string> unread_;
};

} // namespace detail

inline SimScenario scenario_from_json(const nlohmann::json& j)
{
    std::string kind;
    try {
        kind = j.at("kind").get<std::string>();
    } catch (const nlohmann::json::exception&) {
        throw MrtError(Err::ParseError, "scenario is missing 'kind'");
    }
    nlohmann::json body = j;
    body.erase("kind");
    detail::ParamReader r(body);
    try {
        if (kind == "stationary_ar1") {
            StationaryAr1Params p;
            r.take("n", p.n);
            r.take("T", p.T);
            r.take("prob", p.prob);
            r.take("intercept", p.intercept);
            r.take("x_coef", p.x_coef);
            r.take("lag_coef", p.lag_coef);
            r.take("effect", p.effect);
            r.take("noise_sd", p.noise_sd);
            r.take("x_zero_prob", p.x_zero_prob);
            r.take("x_zero_value", p.x_zero_value);
            r.take("x_mu", p.x_mu);
            r.take("x_sd", p.x_sd);
            r.take("x_const", p.x_const);
            r.take("y1_const", p.y1_const);
            r.take("force_a", p.force_a);
            r.finish();
            return p;
        }
        if (kind == "endogenous_two_period") {
            EndogenousParams p;
            r.take("n", p.n);
            r.take("prob", p.prob);
            r.take("a0", p.a0);
            r.take("a1", p.a1);
            r.take("b0", p.b0);
            r.take("b1", p.b1);
            r.take("tau", p.tau);
            r.take("e1_sd", p.e1_sd);
            r.take("e2_sd", p.e2_sd);
            r.take("exogenous", p.exogenous);
            r.finish();
            return p;
        }
        if (kind == "availability_marginal") {
            AvailabilityParams p;
            r.take("n", p.n);
            r.take("T", p.T);
            r.take("q_start", p.q_start);
            r.take("q_end", p.q_end);
            r.take("p_hi", p.p_hi);
            r.take("p_lo", p.p_lo);
            r.take("beta_start", p.beta_start);
            r.take("beta_end", p.beta_end);
            r.take("beta_quad", p.beta_quad);
            r.take("gamma0", p.gamma0);
            r.take("gamma_x", p.gamma_x);
            r.take("noise_sd", p.noise_sd);
            r.finish();
            return p;
        }
        if (kind == "multi_arm") {
            MultiArmParams p;
            r.take("n", p.n);
            r.take("T", p.T);
            r.take("p_walking", p.p_walking);
            r.take("p_antisedentary", p.p_antisedentary);
            r.take("g0", p.g0);
            r.take("g_x", p.g_x);
            r.take("g_loc", p.g_loc);
            r.take("walking0", p.walking0);
            r.take("walking_loc", p.walking_loc);
            r.take("antisedentary0", p.antisedentary0);
            r.take("antisedentary_loc", p.antisedentary_loc);
            r.take("noise_sd", p.noise_sd);
            r.finish();
            return p;
        }
    } catch (const nlohmann::json::exception& ex) {
        throw MrtError(Err::ParseError, std::string("scenario: ") + ex.what());
    }
    throw MrtError(Err::ParseError, "unknown scenario kind '" + kind + "'");
}

inline nlohmann::ordered_json scenario_to_json(const SimScenario& sc)
{
    nlohmann::ordered_json j;
    j["kind"] = scenario_kind(sc);
    std::visit(
        [&j](const auto& p) {
            using P = std::decay_t<decltype(p)>;
            j["n"] = p.n;
            if constexpr (std::is_same_v<P, StationaryAr1Params>) {
                j["T"] = p.T;
                j["prob"] = p.prob;
                j["intercept"] = p.intercept;
                j["x_coef"] = p.x_coef;
                j["lag_coef"] = p.lag_coef;
                j["effect"] = p.effect;
                j["noise_sd"] = p.noise_sd;
                j["x_zero_prob"] = p.x_zero_prob;
                j["x_zero_value"] = p.x_zero_value;
                j["x_mu"] = p.x_mu;
                j["x_sd"] = p.x_sd;
                if (p.x_const) j["x_const"] = *p.x_const;
                if (p.y1_const) j["y1_const"] = *p.y1_const;
                if (p.force_a) j["force_a"] = *p.force_a;
            } else if constexpr (std::is_same_v<P, EndogenousParams>) {
                j["prob"] = p.prob;
                j["a0"] = p.a0;
                j["a1"] = p.a1;
                j["b0"] = p.b0;
                j["b1"] = p.b1;
                j["tau"] = p.tau;
                j["e1_sd"] = p.e1_sd;
                j["e2_sd"] = p.e2_sd;
                j["exogenous"] = p.exogenous;
            } else if constexpr (std::is_same_v<P, AvailabilityParams>) {
                j["T"] = p.T;
                j["q_start"] = p.q_start;
                j["q_end"] = p.q_end;
                j["p_hi"] = p.p_hi;
                j["p_lo"] = p.p_lo;
                j["beta_start"] = p.beta_start;
                j["beta_end"] = p.beta_end;
                j["beta_quad"] = p.beta_quad;
                j["gamma0"] = p.gamma0;
                j["gamma_x"] = p.gamma_x;
                j["noise_sd"] = p.noise_sd;
            } else {
                j["T"] = p.T;
                j["p_walking"] = p.p_walking;
                j["p_antisedentary"] = p.p_antisedentary;
                j["g0"] = p.g0;
                j["g_x"] = p.g_x;
                j["g_loc"] = p.g_loc;
                j["walking0"] = p.walking0;
                j["walking_loc"] = p.walking_loc;
                j["antisedentary0"] = p.antisedentary0;
                j["antisedentary_loc"] = p.antisedentary_loc;
                j["noise_sd"] = p.noise_sd;
            }
        },
        sc);
    return j;
}

// Default truth vector for the effect coefficients of each scenario's
// canonical analysis model.
inline Eigen::VectorXd scenario_true_beta(const SimScenario& sc)
{
    return std::visit(
        [](const auto& p) -> Eigen::VectorXd {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, StationaryAr1Params>) {
                Eigen::VectorXd b(1);
                b << p.effect;
                return b;
            } else if constexpr (std::is_same_v<P, EndogenousParams>) {
                Eigen::VectorXd b(2);
                b << p.b0, p.b1;
                return b;
            } else if constexpr (std::is_same_v<P, AvailabilityParams>) {
                Eigen::VectorXd b(1);
                b << availability_marginal_target(p);
                return b;
            } else {
                // Effect blocks ordered as (walking, antisedentary), each
                // (intercept, location).
                Eigen::VectorXd b(4);
                b << p.walking0, p.walking_loc, p.antisedentary0, p.antisedentary_loc;
                return b;
            }
        },
        sc);
}

// ---------------------------------------------------------------------------
// Monte Carlo driver
// ---------------------------------------------------------------------------

// One estimator entering a Monte Carlo comparison: either a weighted
// centered fit or a GEE fit. Both are evaluated on the same simulated
// dataset within each replication.
struct EstimatorSpec {
    std::string name;
    bool is_gee = false;
    ModelSpec model; // used when !is_gee
    GeeSpec gee;     // used when is_gee
};

struct McEstimatorSummary {
    std::string name;
    std::vector<std::string> coef_names; // effect-coefficient names
    Eigen::VectorXd true_beta;
    Eigen::VectorXd bias;
    Eigen::VectorXd bias_mc_se;
    Eigen::VectorXd mc_sd;
    Eigen::VectorXd sd_mc_se;
    Eigen::VectorXd coverage;       // corrected/robust 95% CI, per coefficient
    Eigen::VectorXd coverage_mc_se;
    std::size_t reps_used = 0;
};

struct McReport {
    std::vector<McEstimatorSummary> estimators;
    std::size_t reps = 0;
    std::size_t failures = 0;
    std::vector<std::string> failure_messages;
    // Raw per-replication effect estimates (reps x n_coef, NaN on failure),
    // one matrix per estimator, for paired comparisons across estimators.
    std::vector<Eigen::MatrixXd> rep_estimates;
};

namespace detail {

struct RepFit {
    Eigen::VectorXd beta;
    Eigen::VectorXd half_width; // t-quantile times SE, for CI coverage
    std::vector<std::string> names;
};

inline RepFit fit_one(const MrtDataset& ds, const EstimatorSpec& est)
{
    RepFit out;
    if (!est.is_gee) {
        const FitResult fit = wcls_fit(ds, est.model);
        const Eigen::Index qb = fit.theta.size() - fit.q_alpha;
        out.beta = fit.beta_hat;
        out.half_width.resize(qb);
        const double tq =
            fit.df.second > 0
                ? stats::t_quantile(0.975, static_cast<double>(fit.df.second))
                : std::numeric_limits<double>::quiet_NaN();
        for (Eigen::Index k = 0; k < qb; ++k)
            out.half_width[k] = tq * fit.se[fit.q_alpha + k];
        out.names.assign(fit.colnames.begin() + fit.q_alpha, fit.colnames.end());
    } else {
        const GeeResult fit = gee_fit(ds, est.gee);
        const Eigen::Index qb = 1 + static_cast<Eigen::Index>(est.gee.interactions.size());
        const Eigen::Index offset = fit.coef.size() - qb;
        out.beta = fit.coef.tail(qb);
        out.half_width.resize(qb);
        const Eigen::Index df2 = fit.n_participants - fit.q;
        const double tq = df2 > 0
                              ? stats::t_quantile(0.975, static_cast<double>(df2))
                              : std::numeric_limits<double>::quiet_NaN();
        for (Eigen::Index k = 0; k < qb; ++k)
            out.half_width[k] = tq * fit.se[offset + k];
        out.names.assign(fit.colnames.begin() + offset, fit.colnames.end());
    }
    return out;
}

} // namespace detail

inline McReport run_mc(const SimScenario& sc, const std::vector<EstimatorSpec>& ests,
                       std::size_t reps, const Eigen::VectorXd& true_beta,
                       std::uint64_t seed, unsigned threads = 0,
                       std::size_t failure_budget = 0)
{
    if (reps < 1) throw MrtError(Err::InvalidArgument, "reps must be >= 1");
    if (ests.empty()) throw MrtError(Err::InvalidArgument, "no estimators given");

    const std::size_t n_est = ests.size();
    std::vector<std::vector<Eigen::VectorXd>> beta(reps,
                                                   std::vector<Eigen::VectorXd>(n_est));
    std::vector<std::vector<Eigen::VectorXd>> half(reps,
                                                   std::vector<Eigen::VectorXd>(n_est));
    std::vector<std::vector<std::string>> names(n_est);
    std::vector<std::string> rep_error(reps);
    std::mutex names_mutex;

    unsigned hw = threads ? threads : std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    hw = static_cast<unsigned>(
        std::min<std::size_t>(hw, reps));

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t r = next.fetch_add(1);
            if (r >= reps) return;
            try {
                Rng rng = Rng::substream(seed, r);
                const MrtDataset ds = simulate(sc, rng);
                for (std::size_t e = 0; e < n_est; ++e) {
                    const detail::RepFit fit = detail::fit_one(ds, ests[e]);
                    beta[r][e] = fit.beta;
                    half[r][e] = fit.half_width;
                    if (names[e].empty()) {
                        std::lock_guard<std::mutex> lock(names_mutex);
                        if (names[e].empty()) names[e] = fit.names;
                    }
                }
            } catch (const std::exception& ex) {
                rep_error[r] = std::string("replication ") + std::to_string(r) + ": " +
                               ex.what();
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned k = 1; k < hw; ++k) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    McReport report;
    report.reps = reps;
    for (std::size_t r = 0; r < reps; ++r)
        if (!rep_error[r].empty()) {
            ++report.failures;
            if (report.failure_messages.size() < 10)
                report.failure_messages.push_back(rep_error[r]);
        }
    if (report.failures > failure_budget)
        throw MrtError(Err::ReplicationFailure,
                       "replication failures (" + std::to_string(report.failures) +
                           ") exceed budget (" + std::to_string(failure_budget) +
                           "); first: " + report.failure_messages.front());

    for (std::size_t e = 0; e < n_est; ++e) {
        McEstimatorSummary s;
        s.name = ests[e].name;
        s.coef_names = names[e];
        const Eigen::Index k = static_cast<Eigen::Index>(names[e].size());
        if (k != true_beta.size())
            throw MrtError(Err::InvalidArgument,
                           "true beta has " + std::to_string(true_beta.size()) +
                               " entries but estimator '" + s.name + "' produces " +
                               std::to_string(k));
        s.true_beta = true_beta;
        Eigen::MatrixXd all(reps, k);
        all.setConstant(std::numeric_limits<double>::quiet_NaN());
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(k);
        Eigen::VectorXd cover = Eigen::VectorXd::Zero(k);
        std::size_t used = 0;
        for (std::size_t r = 0; r < reps; ++r) {
            if (!rep_error[r].empty()) continue;
            all.row(static_cast<Eigen::Index>(r)) = beta[r][e].transpose();
            mean += beta[r][e];
            for (Eigen::Index j = 0; j < k; ++j)
                cover[j] += (std::abs(beta[r][e][j] - true_beta[j]) <= half[r][e][j])
                                ? 1.0
                                : 0.0;
            ++used;
        }
        if (used == 0)
            throw MrtError(Err::ReplicationFailure,
                           "all replications failed for estimator '" + s.name + "'");
        const double R = static_cast<double>(used);
        mean /= R;
        Eigen::VectorXd var = Eigen::VectorXd::Zero(k);
        Eigen::VectorXd m4 = Eigen::VectorXd::Zero(k);
        for (std::size_t r = 0; r < reps; ++r) {
            if (!rep_error[r].empty()) continue;
            const Eigen::VectorXd d = beta[r][e] - mean;
            var += d.cwiseProduct(d);
            m4 += d.cwiseProduct(d).cwiseProduct(d.cwiseProduct(d));
        }
        var /= std::max(R - 1.0, 1.0);
        m4 /= R;
        s.bias = mean - true_beta;
        s.mc_sd = var.cwiseSqrt();
        s.bias_mc_se = s.mc_sd / std::sqrt(R);
        // SE of the MC SD via the delta method from the fourth moment.
        s.sd_mc_se.resize(k);
        for (Eigen::Index j = 0; j < k; ++j) {
            const double v = var[j];
            const double se_var =
                std::sqrt(std::max(m4[j] - v * v * (R - 3.0) / (R - 1.0), 0.0) / R);
            s.sd_mc_se[j] = v > 0.0 ? se_var / (2.0 * std::sqrt(v)) : 0.0;
        }
        s.coverage = cover / R;
        s.coverage_mc_se.resize(k);
        for (Eigen::Index j = 0; j < k; ++j)
            s.coverage_mc_se[j] =
                std::sqrt(std::max(s.coverage[j] * (1.0 - s.coverage[j]), 0.0) / R);
        s.reps_used = used;
        report.rep_estimates.push_back(std::move(all));
        report.estimators.push_back(std::move(s));
    }
    return report;
}

} // namespace mrt
