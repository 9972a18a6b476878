#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "mrt/csv.hpp"
#include "mrt/error.hpp"

namespace mrt {

// Column-role mapping for CSV ingestion. Arm randomization probabilities live
// in one column per non-control arm named <prob_prefix><arm label>.
struct Schema {
    std::string id = "id";
    std::string t = "t";
    std::string avail = "avail";
    std::string arm = "arm";
    std::string outcome = "y";
    std::string prob_prefix = "p_";
    static constexpr const char* control_label = "control";
};

// One decision point of one participant, materialized for inspection.
struct MrtRow {
    std::string participant;
    long t = 0;
    int avail = 0;
    int arm = -1; // -1 = control, otherwise index into MrtDataset::arms
    double outcome = 0.0;
    std::vector<double> rand_prob; // one entry per non-control arm
};

// Longitudinal trial data in columnar form. Rows are grouped by participant
// (first-appearance order) and sorted by decision-point index within each
// participant. Instances are immutable after finalize(); transforms copy.
class MrtDataset {
public:
    Schema schema;
    std::vector<std::string> arms;            // non-control arm labels
    std::vector<std::string> covariate_names; // extra numeric columns

    std::vector<std::string> pid;
    std::vector<long> t;
    std::vector<int> avail;
    std::vector<int> arm_idx;                 // -1 for control
    std::vector<double> outcome;              // NaN only on unavailable rows
    std::vector<std::vector<double>> probs;   // probs[a][row]
    std::vector<std::vector<double>> covs;    // covs[c][row]

    std::vector<std::pair<std::size_t, std::size_t>> participants; // (start, len)

    double eps = 1e-6;

    std::size_t n_rows() const { return pid.size(); }
    std::size_t n_participants() const { return participants.size(); }

    long t_max() const
    {
        long m = 0;
        for (long v : t) m = std::max(m, v);
        return m;
    }

    long covariate_index(const std::string& name) const
    {
        for (std::size_t c = 0; c < covariate_names.size(); ++c)
            if (covariate_names[c] == name) return static_cast<long>(c);
        return -1;
    }

    const std::vector<double>& covariate(const std::string& name) const
    {
        const long c = covariate_index(name);
        if (c < 0)
            throw MrtError(Err::UnknownColumn, "no covariate column named '" + name + "'");
        return covs[static_cast<std::size_t>(c)];
    }

    long arm_index(const std::string& label) const
    {
        for (std::size_t a = 0; a < arms.size(); ++a)
            if (arms[a] == label) return static_cast<long>(a);
        return -1;
    }

    MrtRow row(std::size_t i) const
    {
        MrtRow r;
        r.participant = pid[i];
        r.t = t[i];
        r.avail = avail[i];
        r.arm = arm_idx[i];
        r.outcome = outcome[i];
        for (const auto& p : probs) r.rand_prob.push_back(p[i]);
        return r;
    }

    // Group rows by participant, sort by t within participant, and check
    // every row-level invariant. `source_rows`, when provided, maps storage
    // rows to original 1-based CSV line numbers for error messages.
    void finalize(const std::vector<long>* source_rows = nullptr)
    {
        const std::size_t n = n_rows();
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        // participant first-appearance rank, then t; stable for determinism
        std::vector<std::size_t> rank(n);
        {
            std::vector<std::string> seen;
            for (std::size_t i = 0; i < n; ++i) {
                std::size_t r = seen.size();
                for (std::size_t k = 0; k < seen.size(); ++k)
                    if (seen[k] == pid[i]) { r = k; break; }
                if (r == seen.size()) seen.push_back(pid[i]);
                rank[i] = r;
            }
        }
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (rank[a] != rank[b]) return rank[a] < rank[b];
            return t[a] < t[b];
        });
        permute(order);
        if (source_rows) {
            std::vector<long> permuted(n);
            for (std::size_t i = 0; i < n; ++i) permuted[i] = (*source_rows)[order[i]];
            line_of_ = permuted;
        } else {
            line_of_.clear();
        }

        participants.clear();
        std::size_t start = 0;
        for (std::size_t i = 1; i <= n; ++i) {
            if (i == n || pid[i] != pid[start]) {
                participants.emplace_back(start, i - start);
                start = i;
            }
        }
        validate();
    }

    bool operator==(const MrtDataset& other) const
    {
        auto eq = [](double a, double b) {
            return (std::isnan(a) && std::isnan(b)) || a == b;
        };
        if (arms != other.arms || covariate_names != other.covariate_names ||
            pid != other.pid || t != other.t || avail != other.avail ||
            arm_idx != other.arm_idx)
            return false;
        for (std::size_t i = 0; i < outcome.size(); ++i)
            if (!eq(outcome[i], other.outcome[i])) return false;
        for (std::size_t a = 0; a < probs.size(); ++a)
            for (std::size_t i = 0; i < probs[a].size(); ++i)
                if (!eq(probs[a][i], other.probs[a][i])) return false;
        for (std::size_t c = 0; c < covs.size(); ++c)
            for (std::size_t i = 0; i < covs[c].size(); ++i)
                if (!eq(covs[c][i], other.covs[c][i])) return false;
        return true;
    }

private:
    std::vector<long> line_of_;

    long line(std::size_t i) const
    {
        return line_of_.empty() ? static_cast<long>(i + 1) : line_of_[i];
    }

    void permute(const std::vector<std::size_t>& order)
    {
        auto apply = [&order](auto& vec) {
            auto copy = vec;
            for (std::size_t i = 0; i < order.size(); ++i) vec[i] = copy[order[i]];
        };
        apply(pid);
        apply(t);
        apply(avail);
        apply(arm_idx);
        apply(outcome);
        for (auto& p : probs) apply(p);
        for (auto& c : covs) apply(c);
    }

    void validate() const
    {
        if (n_participants() < 2)
            throw MrtError(Err::InvariantViolation,
                           "at least 2 participants are required (found " +
                               std::to_string(n_participants()) + ")");
        for (const auto& [start, len] : participants) {
            for (std::size_t i = start + 1; i < start + len; ++i) {
                if (t[i] == t[i - 1])
                    throw MrtError(Err::InvariantViolation,
                                   "duplicate decision point t=" + std::to_string(t[i]) +
                                       " for participant '" + pid[i] + "'",
                                   line(i));
            }
        }
        for (std::size_t i = 0; i < n_rows(); ++i) {
            if (t[i] < 1)
                throw MrtError(Err::InvariantViolation,
                               "decision-point index must be >= 1", line(i));
            if (avail[i] != 0 && avail[i] != 1)
                throw MrtError(Err::InvariantViolation, "avail must be 0 or 1", line(i));
            if (avail[i] == 0 && arm_idx[i] >= 0)
                throw MrtError(Err::InvariantViolation,
                               "treatment assigned on an unavailable row", line(i));
            if (avail[i] == 1) {
                if (!std::isfinite(outcome[i]))
                    throw MrtError(Err::InvariantViolation,
                                   "outcome missing or non-finite on an available row",
                                   line(i));
                double sum = 0.0;
                for (std::size_t a = 0; a < probs.size(); ++a) {
                    const double p = probs[a][i];
                    if (!(p > eps && p < 1.0 - eps))
                        throw MrtError(Err::InvariantViolation,
                                       "randomization probability " +
                                           csv::format_double(p) + " for arm '" +
                                           arms[a] + "' outside (eps, 1-eps)",
                                       line(i));
                    sum += p;
                }
                if (!probs.empty() && !(sum < 1.0))
                    throw MrtError(Err::InvariantViolation,
                                   "arm probabilities sum to " + csv::format_double(sum) +
                                       " >= 1",
                                   line(i));
            }
            for (std::size_t c = 0; c < covs.size(); ++c)
                if (!std::isfinite(covs[c][i]))
                    throw MrtError(Err::InvariantViolation,
                                   "covariate '" + covariate_names[c] +
                                       "' missing or non-finite",
                                   line(i));
        }
    }
};

inline MrtDataset load_csv(const std::string& path, const Schema& schema = Schema{},
                           double eps = 1e-6)
{
    const csv::Table table = csv::read_file(path);
    auto need = [&](const std::string& name) {
        const long j = table.column(name);
        if (j < 0)
            throw MrtError(Err::MissingColumn, "required column '" + name +
                                                   "' not found in '" + path + "'");
        return static_cast<std::size_t>(j);
    };
    const std::size_t col_id = need(schema.id);
    const std::size_t col_t = need(schema.t);
    const std::size_t col_avail = need(schema.avail);
    const std::size_t col_arm = need(schema.arm);
    const std::size_t col_y = need(schema.outcome);

    MrtDataset ds;
    ds.schema = schema;
    ds.eps = eps;

    // Arm labels come from the realized data plus any probability columns
    // (an arm can exist without ever being assigned in a small dataset);
    // every non-control label needs a matching probability column.
    for (const auto& row : table.rows) {
        const std::string& label = row[col_arm];
        if (label != Schema::control_label && ds.arm_index(label) < 0)
            ds.arms.push_back(label);
    }
    for (const auto& name : table.header)
        if (name.rfind(schema.prob_prefix, 0) == 0) {
            const std::string label = name.substr(schema.prob_prefix.size());
            if (!label.empty() && label != Schema::control_label &&
                ds.arm_index(label) < 0)
                ds.arms.push_back(label);
        }
    std::sort(ds.arms.begin(), ds.arms.end());
    std::vector<std::size_t> prob_cols;
    for (const auto& arm : ds.arms)
        prob_cols.push_back(need(schema.prob_prefix + arm));

    std::vector<std::size_t> cov_cols;
    for (std::size_t j = 0; j < table.header.size(); ++j) {
        const std::string& name = table.header[j];
        if (j == col_id || j == col_t || j == col_avail || j == col_arm || j == col_y)
            continue;
        if (std::find(prob_cols.begin(), prob_cols.end(), j) != prob_cols.end()) continue;
        ds.covariate_names.push_back(name);
        cov_cols.push_back(j);
    }

    ds.probs.resize(ds.arms.size());
    ds.covs.resize(ds.covariate_names.size());
    std::vector<long> lines;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        const long lineno = static_cast<long>(i + 2); // 1-based, after header
        lines.push_back(lineno);
        ds.pid.push_back(row[col_id]);
        ds.t.push_back(csv::parse_int(row[col_t], lineno, schema.t));
        ds.avail.push_back(
            static_cast<int>(csv::parse_int(row[col_avail], lineno, schema.avail)));
        const std::string& label = row[col_arm];
        if (label == Schema::control_label) {
            ds.arm_idx.push_back(-1);
        } else {
            const long a = ds.arm_index(label);
            if (a < 0)
                throw MrtError(Err::TypeError, "unknown arm label '" + label + "'", lineno);
            ds.arm_idx.push_back(static_cast<int>(a));
        }
        const std::string& ystr = row[col_y];
        ds.outcome.push_back(ystr.empty()
                                 ? std::numeric_limits<double>::quiet_NaN()
                                 : csv::parse_double(ystr, lineno, schema.outcome));
        for (std::size_t a = 0; a < prob_cols.size(); ++a) {
            const std::string& pstr = row[prob_cols[a]];
            ds.probs[a].push_back(pstr.empty()
                                      ? std::numeric_limits<double>::quiet_NaN()
                                      : csv::parse_double(pstr, lineno,
                                                          table.header[prob_cols[a]]));
        }
        for (std::size_t c = 0; c < cov_cols.size(); ++c) {
            const std::string& vstr = row[cov_cols[c]];
            if (vstr.empty())
                throw MrtError(Err::TypeError,
                               "covariate '" + ds.covariate_names[c] + "' is empty",
                               lineno);
            ds.covs[c].push_back(
                csv::parse_double(vstr, lineno, ds.covariate_names[c]));
        }
    }
    ds.finalize(&lines);
    return ds;
}

inline void write_csv(const MrtDataset& ds, const std::string& path)
{
    csv::Table table;
    const Schema& s = ds.schema;
    table.header = {s.id, s.t, s.avail, s.arm, s.outcome};
    for (const auto& arm : ds.arms) table.header.push_back(s.prob_prefix + arm);
    for (const auto& name : ds.covariate_names) table.header.push_back(name);
    for (std::size_t i = 0; i < ds.n_rows(); ++i) {
        std::vector<std::string> row;
        row.push_back(ds.pid[i]);
        row.push_back(std::to_string(ds.t[i]));
        row.push_back(std::to_string(ds.avail[i]));
        row.push_back(ds.arm_idx[i] < 0 ? Schema::control_label
                                        : ds.arms[static_cast<std::size_t>(ds.arm_idx[i])]);
        row.push_back(std::isnan(ds.outcome[i]) ? ""
                                                : csv::format_double(ds.outcome[i]));
        for (const auto& p : ds.probs)
            row.push_back(std::isnan(p[i]) ? "" : csv::format_double(p[i]));
        for (const auto& c : ds.covs) row.push_back(csv::format_double(c[i]));
        table.rows.push_back(std::move(row));
    }
    csv::write_file(path, table);
}

// Replace `column` with log(value + offset), returning a new dataset.
inline MrtDataset log_transform(const MrtDataset& ds, const std::string& column,
                                double offset)
{
    if (!(offset > 0.0))
        throw MrtError(Err::InvalidArgument, "log_transform offset must be > 0");
    const long c = ds.covariate_index(column);
    if (c < 0)
        throw MrtError(Err::UnknownColumn, "no covariate column named '" + column + "'");
    MrtDataset out = ds;
    auto& vals = out.covs[static_cast<std::size_t>(c)];
    for (std::size_t i = 0; i < vals.size(); ++i) {
        if (vals[i] < 0.0)
            throw MrtError(Err::NegativeValue,
                           "log_transform of negative value in '" + column + "'",
                           static_cast<long>(i + 1));
        vals[i] = std::log(vals[i] + offset);
    }
    return out;
}

// Add a column holding `source` shifted back by `lag` decision points within
// each participant, filling the start of each series with `fill`.
inline MrtDataset derive_lag(const MrtDataset& ds, const std::string& source, long lag,
                             double fill, const std::string& name = "")
{
    if (lag < 1)
        throw MrtError(Err::InvalidArgument, "lag must be a positive integer");
    const long c = ds.covariate_index(source);
    if (c < 0)
        throw MrtError(Err::UnknownColumn, "no covariate column named '" + source + "'");
    MrtDataset out = ds;
    const auto& src = ds.covs[static_cast<std::size_t>(c)];
    std::vector<double> lagged(ds.n_rows(), fill);
    // Look up by decision-point value, not storage offset, so gaps in t are
    // handled correctly (a missing t - lag row means fill).
    for (const auto& [start, len] : ds.participants)
        for (std::size_t i = start; i < start + len; ++i) {
            const long want = ds.t[i] - lag;
            if (want < 1) continue;
            for (std::size_t j = start; j < start + len; ++j)
                if (ds.t[j] == want) {
                    lagged[i] = src[j];
                    break;
                }
        }
    out.covariate_names.push_back(name.empty() ? source + "_lag" + std::to_string(lag)
                                               : name);
    out.covs.push_back(std::move(lagged));
    return out;
}

} // namespace mrt
