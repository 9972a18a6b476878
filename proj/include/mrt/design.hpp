#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrt/csv.hpp"
#include "mrt/dataset.hpp"
#include "mrt/error.hpp"

namespace mrt {

// A term is a product of covariate columns; the empty product never appears
// because the intercept is implicit in both the control and moderator lists.
using Term = std::vector<std::string>;

enum class Numerator { Constant, EmpiricalArmMean, MatchDenominator };

// The analysis model: control terms define the working regression Z, the
// per-arm moderator terms define the effect model S, and the numerator
// policy defines the centering probabilities (and hence the weights).
struct ModelSpec {
    std::vector<std::string> arms;
    std::vector<Term> control_terms;
    std::map<std::string, std::vector<Term>> moderator_terms;
    Numerator numerator = Numerator::EmpiricalArmMean;
    double numerator_value = 0.5; // used by Numerator::Constant

    static Term canonical(Term t)
    {
        std::sort(t.begin(), t.end());
        return t;
    }

    // Moderator terms must also appear among the control terms: the working
    // model has to contain the effect model.
    void validate() const
    {
        if (arms.empty())
            throw MrtError(Err::InvalidArgument, "ModelSpec needs at least one arm");
        if (numerator == Numerator::Constant &&
            !(numerator_value > 0.0 && numerator_value < 1.0))
            throw MrtError(Err::InvalidArgument,
                           "constant numerator probability must lie in (0,1)");
        std::vector<Term> controls;
        for (const auto& t : control_terms) controls.push_back(canonical(t));
        for (const auto& arm : arms) {
            const auto it = moderator_terms.find(arm);
            if (it == moderator_terms.end()) continue;
            for (const auto& t : it->second) {
                const Term c = canonical(t);
                if (std::find(controls.begin(), controls.end(), c) == controls.end())
                    throw MrtError(Err::SpecViolation,
                                   "moderator term '" + term_name(t) +
                                       "' for arm '" + arm +
                                       "' is missing from the control terms");
            }
        }
    }

    static std::string term_name(const Term& t)
    {
        std::string out;
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (i) out += "*";
            out += t[i];
        }
        return out;
    }
};

inline Term parse_term(const nlohmann::json& j)
{
    Term t;
    if (j.is_string()) {
        t.push_back(j.get<std::string>());
    } else if (j.is_array()) {
        for (const auto& e : j) t.push_back(e.get<std::string>());
        if (t.empty())
            throw MrtError(Err::ParseError, "empty interaction term in model spec");
    } else {
        throw MrtError(Err::ParseError,
                       "model term must be a column name or an array of column names");
    }
    return t;
}

inline ModelSpec parse_model_spec(const nlohmann::json& j)
{
    ModelSpec spec;
    try {
        if (!j.contains("arms"))
            throw MrtError(Err::ParseError, "model spec is missing 'arms'");
        for (const auto& a : j.at("arms")) spec.arms.push_back(a.get<std::string>());
        if (j.contains("control_terms"))
            for (const auto& t : j.at("control_terms"))
                spec.control_terms.push_back(parse_term(t));
        if (j.contains("moderator_terms"))
            for (const auto& [arm, terms] : j.at("moderator_terms").items()) {
                std::vector<Term> parsed;
                for (const auto& t : terms) parsed.push_back(parse_term(t));
                spec.moderator_terms[arm] = std::move(parsed);
            }
        if (j.contains("numerator")) {
            const auto& numer = j.at("numerator");
            const std::string policy = numer.at("policy").get<std::string>();
            if (policy == "constant") {
                spec.numerator = Numerator::Constant;
                spec.numerator_value = numer.at("value").get<double>();
            } else if (policy == "empirical_arm_mean") {
                spec.numerator = Numerator::EmpiricalArmMean;
            } else if (policy == "match_denominator") {
                spec.numerator = Numerator::MatchDenominator;
            } else {
                throw MrtError(Err::ParseError, "unknown numerator policy '" + policy + "'");
            }
        }
    } catch (const nlohmann::json::exception& ex) {
        throw MrtError(Err::ParseError, std::string("model spec: ") + ex.what());
    }
    spec.validate();
    return spec;
}

inline nlohmann::ordered_json model_spec_to_json(const ModelSpec& spec)
{
    nlohmann::ordered_json j;
    j["arms"] = spec.arms;
    auto term_json = [](const Term& t) -> nlohmann::ordered_json {
        if (t.size() == 1) return t[0];
        return nlohmann::ordered_json(t);
    };
    j["control_terms"] = nlohmann::ordered_json::array();
    for (const auto& t : spec.control_terms) j["control_terms"].push_back(term_json(t));
    j["moderator_terms"] = nlohmann::ordered_json::object();
    for (const auto& arm : spec.arms) {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        const auto it = spec.moderator_terms.find(arm);
        if (it != spec.moderator_terms.end())
            for (const auto& t : it->second) arr.push_back(term_json(t));
        j["moderator_terms"][arm] = arr;
    }
    switch (spec.numerator) {
    case Numerator::Constant:
        j["numerator"] = {{"policy", "constant"}, {"value", spec.numerator_value}};
        break;
    case Numerator::EmpiricalArmMean:
        j["numerator"] = {{"policy", "empirical_arm_mean"}};
        break;
    case Numerator::MatchDenominator:
        j["numerator"] = {{"policy", "match_denominator"}};
        break;
    }
    return j;
}

// Numeric design for the weighted centered regression. Unavailable rows are
// kept (with weight zero and zeroed entries) so diagnostics can report row
// counts; every estimator sum skips them through the weight.
struct Design {
    Eigen::MatrixXd X; // [Z | centered moderator block per arm]
    Eigen::VectorXd y;
    Eigen::VectorXd w; // availability times the probability-ratio weight
    std::vector<std::pair<std::size_t, std::size_t>> clusters;
    std::vector<std::string> colnames;
    std::vector<int> is_beta; // 0 for working columns, 1 for effect columns
    Eigen::Index q_alpha = 0;
    std::vector<Eigen::Index> q_beta; // block width per arm
    std::size_t rows_total = 0;
    std::size_t rows_avail = 0;
};

// Per-arm centering probabilities. Constant and EmpiricalArmMean yield one
// value per arm; MatchDenominator copies the per-row randomization
// probability (legal only when it is constant within each arm).
inline std::vector<std::vector<double>> numerator_prob(const ModelSpec& spec,
                                                       const MrtDataset& ds)
{
    spec.validate();
    const std::size_t nrows = ds.n_rows();
    std::vector<std::vector<double>> out;
    for (const auto& arm : spec.arms) {
        const long a = ds.arm_index(arm);
        if (a < 0)
            throw MrtError(Err::UnknownColumn, "arm '" + arm + "' not present in dataset");
        std::vector<double> ptilde(nrows, 0.0);
        switch (spec.numerator) {
        case Numerator::Constant: {
            const double c = spec.numerator_value;
            if (c < ds.eps || c > 1.0 - ds.eps)
                throw MrtError(Err::DegenerateProbability,
                               "constant numerator probability " + csv::format_double(c) +
                                   " is within eps of 0 or 1");
            std::fill(ptilde.begin(), ptilde.end(), c);
            break;
        }
        case Numerator::EmpiricalArmMean: {
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < nrows; ++i) {
                if (!ds.avail[i]) continue;
                den += 1.0;
                num += (ds.arm_idx[i] == static_cast<int>(a)) ? 1.0 : 0.0;
            }
            if (den == 0.0)
                throw MrtError(Err::NoAvailableRows, "no available rows in dataset");
            const double mean = num / den;
            if (mean < ds.eps || mean > 1.0 - ds.eps)
                throw MrtError(Err::EmpiricalMeanOutOfRange,
                               "empirical treatment frequency for arm '" + arm + "' is " +
                                   csv::format_double(mean));
            std::fill(ptilde.begin(), ptilde.end(), mean);
            break;
        }
        case Numerator::MatchDenominator: {
            bool seen = false;
            double value = 0.0;
            for (std::size_t i = 0; i < nrows; ++i) {
                if (!ds.avail[i]) continue;
                const double p = ds.probs[static_cast<std::size_t>(a)][i];
                if (!seen) {
                    value = p;
                    seen = true;
                } else if (p != value) {
                    throw MrtError(Err::SpecViolation,
                                   "match_denominator requires a constant randomization "
                                   "probability within arm '" +
                                       arm + "'");
                }
            }
            if (!seen)
                throw MrtError(Err::NoAvailableRows, "no available rows in dataset");
            for (std::size_t i = 0; i < nrows; ++i)
                ptilde[i] = ds.probs[static_cast<std::size_t>(a)][i];
            break;
        }
        }
        out.push_back(std::move(ptilde));
    }
    return out;
}

inline Design build_design(const MrtDataset& ds, const ModelSpec& spec)
{
    spec.validate();
    const std::size_t nrows = ds.n_rows();

    // Resolve term columns up front so unknown names fail before any math.
    auto resolve = [&ds](const Term& t) {
        std::vector<const std::vector<double>*> cols;
        for (const auto& name : t) cols.push_back(&ds.covariate(name));
        return cols;
    };
    std::vector<std::vector<const std::vector<double>*>> z_cols;
    for (const auto& t : spec.control_terms) z_cols.push_back(resolve(t));
    std::vector<std::vector<std::vector<const std::vector<double>*>>> s_cols;
    std::vector<long> arm_of;
    for (const auto& arm : spec.arms) {
        const long a = ds.arm_index(arm);
        if (a < 0)
            throw MrtError(Err::UnknownColumn, "arm '" + arm + "' not present in dataset");
        arm_of.push_back(a);
        std::vector<std::vector<const std::vector<double>*>> cols;
        const auto it = spec.moderator_terms.find(arm);
        if (it != spec.moderator_terms.end())
            for (const auto& t : it->second) cols.push_back(resolve(t));
        s_cols.push_back(std::move(cols));
    }

    const auto ptilde = numerator_prob(spec, ds);

    Design d;
    d.q_alpha = 1 + static_cast<Eigen::Index>(spec.control_terms.size());
    Eigen::Index q = d.q_alpha;
    d.colnames.push_back("intercept");
    d.is_beta.assign(static_cast<std::size_t>(d.q_alpha), 0);
    for (const auto& t : spec.control_terms)
        d.colnames.push_back(ModelSpec::term_name(t));
    for (std::size_t k = 0; k < spec.arms.size(); ++k) {
        const Eigen::Index width = 1 + static_cast<Eigen::Index>(s_cols[k].size());
        d.q_beta.push_back(width);
        q += width;
        d.colnames.push_back(spec.arms[k]);
        d.is_beta.push_back(1);
        const auto it = spec.moderator_terms.find(spec.arms[k]);
        if (it != spec.moderator_terms.end())
            for (const auto& t : it->second) {
                d.colnames.push_back(spec.arms[k] + ":" + ModelSpec::term_name(t));
                d.is_beta.push_back(1);
            }
    }

    d.X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nrows), q);
    d.y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nrows));
    d.w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nrows));
    d.clusters = ds.participants;
    d.rows_total = nrows;

    auto eval_term = [](const std::vector<const std::vector<double>*>& cols,
                        std::size_t i) {
        double v = 1.0;
        for (const auto* col : cols) v *= (*col)[i];
        return v;
    };

    for (std::size_t i = 0; i < nrows; ++i) {
        if (!ds.avail[i]) continue; // weight stays zero, row stays zero
        ++d.rows_avail;
        const Eigen::Index row = static_cast<Eigen::Index>(i);
        d.y[row] = ds.outcome[i];
        double weight = 1.0;
        Eigen::Index col = 0;
        d.X(row, col++) = 1.0;
        for (const auto& cols : z_cols) d.X(row, col++) = eval_term(cols, i);
        for (std::size_t k = 0; k < spec.arms.size(); ++k) {
            const std::size_t a = static_cast<std::size_t>(arm_of[k]);
            const double p = ds.probs[a][i];
            if (p < ds.eps || p > 1.0 - ds.eps)
                throw MrtError(Err::DegenerateProbability,
                               "randomization probability " + csv::format_double(p) +
                                   " within eps of 0 or 1",
                               static_cast<long>(i + 1));
            const double pt = ptilde[k][i];
            const double A = (ds.arm_idx[i] == static_cast<int>(arm_of[k])) ? 1.0 : 0.0;
            weight *= (A == 1.0) ? pt / p : (1.0 - pt) / (1.0 - p);
            const double centered = A - pt;
            d.X(row, col++) = centered;
            for (const auto& cols : s_cols[k])
                d.X(row, col++) = centered * eval_term(cols, i);
        }
        if (!std::isfinite(weight) || weight <= 0.0)
            throw MrtError(Err::NonFiniteWeights,
                           "non-finite or non-positive weight " +
                               csv::format_double(weight),
                           static_cast<long>(i + 1));
        d.w[row] = weight;
    }
    return d;
}

} // namespace mrt
