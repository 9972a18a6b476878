// Command-line front end: fit, simulate, mc, compare-gee, sensitivity.
// Every subcommand writes result.csv, result.json, and effective_config.json
// into --out; outputs are byte-identical for identical config + seed.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mrt/mrt.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

json read_json_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw mrt::MrtError(mrt::Err::IoError, "cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return json::parse(buf.str());
    } catch (const json::exception& ex) {
        throw mrt::MrtError(mrt::Err::ParseError,
                            "invalid JSON in '" + path + "': " + ex.what());
    }
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw mrt::MrtError(mrt::Err::IoError, "cannot write '" + path.string() + "'");
    out << text;
    if (!out)
        throw mrt::MrtError(mrt::Err::IoError, "write failed for '" + path.string() + "'");
}

void write_json_file(const fs::path& path, const ordered_json& j)
{
    write_text(path, j.dump(2) + "\n");
}

// Result tables print shortest round-trip doubles unless --round is given.
std::string fmt_num(double v, const std::optional<int>& round_digits)
{
    if (std::isnan(v)) return "";
    if (round_digits) return mrt::csv::format_rounded(v, *round_digits);
    return mrt::csv::format_double(v);
}

void reject_unknown_keys(const json& j, const std::vector<std::string>& known,
                         const std::string& what)
{
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw mrt::MrtError(mrt::Err::ParseError,
                                "unknown key '" + key + "' in " + what);
    }
}

mrt::Schema schema_from_json(const json& j)
{
    reject_unknown_keys(j, {"id", "t", "avail", "arm", "outcome", "prob_prefix"},
                        "schema");
    mrt::Schema s;
    try {
        if (j.contains("id")) s.id = j.at("id").get<std::string>();
        if (j.contains("t")) s.t = j.at("t").get<std::string>();
        if (j.contains("avail")) s.avail = j.at("avail").get<std::string>();
        if (j.contains("arm")) s.arm = j.at("arm").get<std::string>();
        if (j.contains("outcome")) s.outcome = j.at("outcome").get<std::string>();
        if (j.contains("prob_prefix"))
            s.prob_prefix = j.at("prob_prefix").get<std::string>();
    } catch (const json::exception& ex) {
        throw mrt::MrtError(mrt::Err::ParseError, std::string("schema: ") + ex.what());
    }
    return s;
}

ordered_json schema_to_json(const mrt::Schema& s)
{
    ordered_json j;
    j["id"] = s.id;
    j["t"] = s.t;
    j["avail"] = s.avail;
    j["arm"] = s.arm;
    j["outcome"] = s.outcome;
    j["prob_prefix"] = s.prob_prefix;
    return j;
}

mrt::GeeSpec gee_from_json(const json& j)
{
    reject_unknown_keys(j, {"covariates", "interactions", "working", "max_iter", "tol"},
                        "gee spec");
    mrt::GeeSpec g;
    try {
        if (j.contains("covariates"))
            for (const auto& c : j.at("covariates"))
                g.covariates.push_back(c.get<std::string>());
        if (j.contains("interactions"))
            for (const auto& c : j.at("interactions"))
                g.interactions.push_back(c.get<std::string>());
        if (j.contains("working")) {
            const std::string w = j.at("working").get<std::string>();
            if (w == "independence") g.working = mrt::WorkingCorr::Independence;
            else if (w == "exchangeable") g.working = mrt::WorkingCorr::Exchangeable;
            else if (w == "ar1") g.working = mrt::WorkingCorr::Ar1;
            else
                throw mrt::MrtError(mrt::Err::ParseError,
                                    "unknown working correlation '" + w + "'");
        }
        if (j.contains("max_iter")) g.max_iter = j.at("max_iter").get<int>();
        if (j.contains("tol")) g.tol = j.at("tol").get<double>();
    } catch (const json::exception& ex) {
        throw mrt::MrtError(mrt::Err::ParseError, std::string("gee spec: ") + ex.what());
    }
    g.validate();
    return g;
}

ordered_json gee_to_json(const mrt::GeeSpec& g)
{
    ordered_json j;
    j["covariates"] = g.covariates;
    j["interactions"] = g.interactions;
    j["working"] = mrt::working_corr_name(g.working);
    j["max_iter"] = g.max_iter;
    j["tol"] = g.tol;
    return j;
}

mrt::LoessSpec loess_from_json(const json& j)
{
    reject_unknown_keys(j, {"span", "degree", "grid"}, "loess spec");
    mrt::LoessSpec l;
    try {
        if (j.contains("span")) l.span = j.at("span").get<double>();
        if (j.contains("degree")) l.degree = j.at("degree").get<int>();
        if (j.contains("grid"))
            for (const auto& g : j.at("grid")) l.grid.push_back(g.get<double>());
    } catch (const json::exception& ex) {
        throw mrt::MrtError(mrt::Err::ParseError,
                            std::string("loess spec: ") + ex.what());
    }
    return l;
}

ordered_json loess_to_json(const mrt::LoessSpec& l)
{
    ordered_json j;
    j["span"] = l.span;
    j["degree"] = l.degree;
    j["grid"] = l.grid.empty() ? ordered_json(l.grid_or_default()) : ordered_json(l.grid);
    return j;
}

mrt::EstimatorSpec estimator_from_json(const json& j)
{
    reject_unknown_keys(j, {"name", "type", "model", "gee"}, "estimator spec");
    mrt::EstimatorSpec e;
    try {
        e.name = j.at("name").get<std::string>();
        const std::string type = j.at("type").get<std::string>();
        if (type == "wcls") {
            e.is_gee = false;
            e.model = mrt::parse_model_spec(j.at("model"));
        } else if (type == "gee") {
            e.is_gee = true;
            e.gee = gee_from_json(j.at("gee"));
        } else {
            throw mrt::MrtError(mrt::Err::ParseError,
                                "estimator type must be 'wcls' or 'gee'");
        }
    } catch (const json::exception& ex) {
        throw mrt::MrtError(mrt::Err::ParseError,
                            std::string("estimator spec: ") + ex.what());
    }
    return e;
}

ordered_json estimator_to_json(const mrt::EstimatorSpec& e)
{
    ordered_json j;
    j["name"] = e.name;
    j["type"] = e.is_gee ? "gee" : "wcls";
    if (e.is_gee)
        j["gee"] = gee_to_json(e.gee);
    else
        j["model"] = mrt::model_spec_to_json(e.model);
    return j;
}

fs::path prepare_out_dir(const std::string& out)
{
    if (out.empty())
        throw mrt::MrtError(mrt::Err::InvalidArgument, "--out is required");
    fs::path dir(out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        throw mrt::MrtError(mrt::Err::IoError,
                            "cannot create output directory '" + out + "'");
    return dir;
}

// Flags override config-file values override defaults.
template <typename T>
T merged(const std::optional<T>& flag, const json& config, const char* key, T fallback)
{
    if (flag) return *flag;
    if (config.contains(key)) {
        try {
            return config.at(key).get<T>();
        } catch (const json::exception& ex) {
            throw mrt::MrtError(mrt::Err::ParseError,
                                std::string("config key '") + key + "': " + ex.what());
        }
    }
    return fallback;
}

std::uint64_t require_seed(const std::optional<std::uint64_t>& flag, const json& config)
{
    if (flag) return *flag;
    if (config.contains("seed")) {
        try {
            return config.at("seed").get<std::uint64_t>();
        } catch (const json::exception& ex) {
            throw mrt::MrtError(mrt::Err::ParseError,
                                std::string("config key 'seed': ") + ex.what());
        }
    }
    throw mrt::MrtError(mrt::Err::InvalidArgument,
                        "a seed is required (--seed or config \"seed\")");
}

// Shared flag bundle; not every subcommand uses every field.
struct Flags {
    std::string config_path;
    std::string data;
    std::string spec_path;
    std::string scenario_path;
    std::string preset;
    std::string out;
    std::string day_column;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> reps;
    std::optional<unsigned> threads;
    std::optional<std::size_t> failure_budget;
    std::optional<int> round;
    std::optional<double> span;
    std::optional<int> degree;
};

json load_config(const Flags& f)
{
    if (f.config_path.empty()) return json::object();
    const json j = read_json_file(f.config_path);
    if (!j.is_object())
        throw mrt::MrtError(mrt::Err::ParseError, "config must be a JSON object");
    return j;
}

std::optional<int> effective_round(const Flags& f, const json& config)
{
    if (f.round) return f.round;
    if (config.contains("round")) return config.at("round").get<int>();
    return std::nullopt;
}

void check_round(const std::optional<int>& r)
{
    if (r && (*r < 0 || *r > 17))
        throw mrt::MrtError(mrt::Err::InvalidArgument,
                            "--round must lie in [0, 17]");
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

ordered_json coef_table_json(const mrt::FitResult& fit)
{
    ordered_json rows = ordered_json::array();
    for (const auto& r : fit.table) {
        ordered_json row;
        row["variable"] = r.name;
        row["block"] = r.is_beta ? "excursion effect" : "working model - do not interpret";
        row["estimate"] = r.estimate;
        row["lcl_95"] = std::isnan(r.lcl) ? ordered_json() : ordered_json(r.lcl);
        row["ucl_95"] = std::isnan(r.ucl) ? ordered_json() : ordered_json(r.ucl);
        row["se"] = r.se;
        row["hotelling_t"] = std::isnan(r.hotelling) ? ordered_json() : ordered_json(r.hotelling);
        row["p_value"] = std::isnan(r.p_value) ? ordered_json() : ordered_json(r.p_value);
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_coef_csv(const fs::path& path, const mrt::FitResult& fit,
                    const std::optional<int>& round_digits)
{
    mrt::csv::Table table;
    table.header = {"variable", "block",       "estimate", "lcl_95",
                    "ucl_95",   "se",          "hotelling_t", "p_value"};
    for (const auto& r : fit.table) {
        table.rows.push_back({r.name,
                              r.is_beta ? "excursion effect"
                                        : "working model - do not interpret",
                              fmt_num(r.estimate, round_digits),
                              fmt_num(r.lcl, round_digits),
                              fmt_num(r.ucl, round_digits),
                              fmt_num(r.se, round_digits),
                              fmt_num(r.hotelling, round_digits),
                              fmt_num(r.p_value, round_digits)});
    }
    mrt::csv::write_file(path.string(), table);
}

int cmd_fit(const Flags& f)
{
    const json config = load_config(f);
    const auto round_digits = effective_round(f, config);
    check_round(round_digits);
    const fs::path out = prepare_out_dir(f.out);

    const std::string data = f.data.empty()
                                 ? merged<std::string>(std::nullopt, config, "data", "")
                                 : f.data;
    if (data.empty())
        throw mrt::MrtError(mrt::Err::InvalidArgument,
                            "a dataset is required (--data or config \"data\")");
    const mrt::Schema schema = config.contains("schema")
                                   ? schema_from_json(config.at("schema"))
                                   : mrt::Schema{};
    const double eps = merged<double>(std::nullopt, config, "eps", 1e-6);

    mrt::ModelSpec model;
    if (!f.spec_path.empty())
        model = mrt::parse_model_spec(read_json_file(f.spec_path));
    else if (config.contains("model"))
        model = mrt::parse_model_spec(config.at("model"));
    else
        throw mrt::MrtError(mrt::Err::InvalidArgument,
                            "a model spec is required (--spec or config \"model\")");

    const mrt::MrtDataset ds = mrt::load_csv(data, schema, eps);
    const mrt::FitResult fit = mrt::wcls_fit(ds, model);

    write_coef_csv(out / "result.csv", fit, round_digits);

    ordered_json res;
    res["command"] = "fit";
    res["data"] = data;
    res["n_participants"] = fit.diag.n_participants;
    res["rows_total"] = fit.diag.rows_total;
    res["rows_available"] = fit.diag.rows_avail;
    res["q"] = fit.diag.q;
    res["df"] = {fit.df.first, fit.df.second};
    res["alpha_note"] =
        "alpha rows are working-model estimates and should not be interpreted";
    res["coefficients"] = coef_table_json(fit);
    res["diagnostics"] = {{"ee_residual", fit.diag.ee_residual},
                          {"bread_condition", fit.diag.bread_condition}};
    write_json_file(out / "result.json", res);

    ordered_json eff;
    eff["command"] = "fit";
    eff["data"] = data;
    eff["out"] = f.out;
    eff["schema"] = schema_to_json(schema);
    eff["eps"] = eps;
    eff["model"] = mrt::model_spec_to_json(model);
    if (round_digits) eff["round"] = *round_digits;
    write_json_file(out / "effective_config.json", eff);
    return 0;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

int cmd_simulate(const Flags& f)
{
    const json config = load_config(f);
    const fs::path out = prepare_out_dir(f.out);

    json scenario_json;
    if (!f.scenario_path.empty())
        scenario_json = read_json_file(f.scenario_path);
    else if (config.contains("scenario"))
        scenario_json = config.at("scenario");
    else
        throw mrt::MrtError(mrt::Err::InvalidArgument,
                            "a scenario is required (--scenario or config \"scenario\")");
    const mrt::SimScenario sc = mrt::scenario_from_json(scenario_json);
    const std::uint64_t seed = require_seed(f.seed, config);

    const mrt::MrtDataset ds = mrt::simulate(sc, seed);
    mrt::write_csv(ds, (out / "result.csv").string());

    ordered_json res;
    res["command"] = "simulate";
    res["scenario"] = mrt::scenario_to_json(sc);
    res["seed"] = seed;
    res["rows"] = ds.n_rows();
    res["participants"] = ds.n_participants();
    write_json_file(out / "result.json", res);

    ordered_json eff;
    eff["command"] = "simulate";
    eff["scenario"] = mrt::scenario_to_json(sc);
    eff["seed"] = seed;
    eff["out"] = f.out;
    write_json_file(out / "effective_config.json", eff);
    return 0;
}

// ---------------------------------------------------------------------------
// mc / compare-gee
// ---------------------------------------------------------------------------

mrt::ModelSpec wcls_suggestion_model(std::vector<mrt::Term> control)
{
    mrt::ModelSpec m;
    m.arms = {"suggestion"};
    m.control_terms = std::move(control);
    m.moderator_terms["suggestion"] = {};
    m.numerator = mrt::Numerator::MatchDenominator;
    return m;
}

struct McSetup {
    mrt::SimScenario scenario;
    std::vector<mrt::EstimatorSpec> estimators;
    std::optional<Eigen::VectorXd> true_beta;
};

McSetup preset_setup(const std::string& preset)
{
    McSetup s;
    if (preset == "stationary-ar1") {
        s.scenario = mrt::StationaryAr1Params{};
        const std::vector<std::pair<std::string, std::vector<mrt::Term>>> sets = {
            {"WCLS-1", {{"x"}, {"ylag"}}},
            {"WCLS-2", {{"x"}}},
            {"WCLS-3", {{"ylag"}}},
            {"WCLS-4", {}},
        };
        for (const auto& [name, control] : sets) {
            mrt::EstimatorSpec e;
            e.name = name;
            e.model = wcls_suggestion_model(control);
            s.estimators.push_back(std::move(e));
        }
        return s;
    }
    if (preset == "endogeneity") {
        s.scenario = mrt::EndogenousParams{};
        mrt::EstimatorSpec w;
        w.name = "WCLS";
        w.model.arms = {"treat"};
        w.model.control_terms = {{"x"}};
        w.model.moderator_terms["treat"] = {{"x"}};
        w.model.numerator = mrt::Numerator::MatchDenominator;
        s.estimators.push_back(w);
        for (const auto& [name, corr] :
             {std::pair<std::string, mrt::WorkingCorr>{"GEE-independence",
                                                       mrt::WorkingCorr::Independence},
              std::pair<std::string, mrt::WorkingCorr>{"GEE-exchangeable",
                                                       mrt::WorkingCorr::Exchangeable}}) {
            mrt::EstimatorSpec e;
            e.name = name;
            e.is_gee = true;
            e.gee.covariates = {"x"};
            e.gee.interactions = {"x"};
            e.gee.working = corr;
            s.estimators.push_back(std::move(e));
        }
        return s;
    }
    throw mrt::MrtError(mrt::Err::InvalidArgument,
                        "unknown preset '" + preset + "' (use stationary-ar1 or endogeneity)");
}

int cmd_mc(const Flags& f)
{
    const json config = load_config(f);
    const auto round_digits = effective_round(f, config);
    check_round(round_digits);
    const fs::path out = prepare_out_dir(f.out);

    std::string preset = f.preset;
    if (preset.empty() && config.contains("preset"))
        preset = config.at("preset").get<std::string>();

    McSetup setup;
    bool have_scenario = false;
    if (!preset.empty()) {
        setup = preset_setup(preset);
        have_scenario = true;
    }
    if (!f.scenario_path.empty()) {
        setup.scenario = mrt::scenario_from_json(read_json_file(f.scenario_path));
        have_scenario = true;
    } else if (config.contains("scenario")) {
        setup.scenario = mrt::scenario_from_json(config.at("scenario"));
        have_scenario = true;
    }
    if (!have_scenario)
        throw mrt::MrtError(mrt::Err::InvalidArgument,
                            "a scenario is required (--preset, --scenario, or config "
                            "\"scenario\")");
    if (config.contains("estimators")) {
        setup.estimators.clear();
        for (const auto& e : config.at("estimators"))
            setup.estimators.push_back(estimator_from_json(e));
    }
    if (setup.estimators.empty())
        throw mrt::MrtError(mrt::Err::InvalidArgument,
                            "no estimators configured (use --preset or config "
                            "\"estimators\")");
    if (config.contains("true_beta")) {
        const auto vec = config.at("true_beta").get<std::vector<double>>();
        Eigen::VectorXd b(static_cast<Eigen::Index>(vec.size()));
        for (std::size_t i = 0; i < vec.size(); ++i)
            b[static_cast<Eigen::Index>(i)] = vec[i];
        setup.true_beta = b;
    }
    const Eigen::VectorXd truth =
        setup.true_beta ? *setup.true_beta : mrt::scenario_true_beta(setup.scenario);

    const std::uint64_t seed = require_seed(f.seed, config);
    const std::size_t reps = merged<std::size_t>(f.reps, config, "reps", 0);
    if (reps == 0)
        throw mrt::MrtError(mrt::Err::InvalidArgument,
                            "--reps is required (or config \"reps\")");
    const unsigned threads = merged<unsigned>(f.threads, config, "threads", 0);
    const std::size_t budget =
        merged<std::size_t>(f.failure_budget, config, "failure_budget", 0);

    const mrt::McReport report =
        mrt::run_mc(setup.scenario, setup.estimators, reps, truth, seed, threads, budget);

    mrt::csv::Table table;
    table.header = {"estimator",  "coefficient",   "true_value", "bias",
                    "bias_mc_se", "mc_sd",         "sd_mc_se",   "coverage_95",
                    "coverage_mc_se", "reps_used"};
    for (const auto& est : report.estimators)
        for (Eigen::Index j = 0; j < est.true_beta.size(); ++j)
            table.rows.push_back({est.name,
                                  est.coef_names[static_cast<std::size_t>(j)],
                                  fmt_num(est.true_beta[j], round_digits),
                                  fmt_num(est.bias[j], round_digits),
                                  fmt_num(est.bias_mc_se[j], round_digits),
                                  fmt_num(est.mc_sd[j], round_digits),
                                  fmt_num(est.sd_mc_se[j], round_digits),
                                  fmt_num(est.coverage[j], round_digits),
                                  fmt_num(est.coverage_mc_se[j], round_digits),
                                  std::to_string(est.reps_used)});
    mrt::csv::write_file((out / "result.csv").string(), table);

    ordered_json res;
    res["command"] = "mc";
    if (!preset.empty()) res["preset"] = preset;
    res["scenario"] = mrt::scenario_to_json(setup.scenario);
    res["seed"] = seed;
    res["reps"] = reps;
    res["failure_budget"] = budget;
    res["failures"] = report.failures;
    if (!report.failure_messages.empty())
        res["failure_messages"] = report.failure_messages;
    res["estimators"] = ordered_json::array();
    for (const auto& est : report.estimators) {
        ordered_json e;
        e["name"] = est.name;
        e["reps_used"] = est.reps_used;
        e["coefficients"] = ordered_json::array();
        for (Eigen::Index j = 0; j < est.true_beta.size(); ++j) {
            ordered_json c;
            c["name"] = est.coef_names[static_cast<std::size_t>(j)];
            c["true_value"] = est.true_beta[j];
            c["bias"] = est.bias[j];
            c["bias_mc_se"] = est.bias_mc_se[j];
            c["mc_sd"] = est.mc_sd[j];
            c["sd_mc_se"] = est.sd_mc_se[j];
            c["coverage_95"] = est.coverage[j];
            c["coverage_mc_se"] = est.coverage_mc_se[j];
            e["coefficients"].push_back(std::move(c));
        }
        res["estimators"].push_back(std::move(e));
    }
    write_json_file(out / "result.json", res);

    ordered_json eff;
    eff["command"] = "mc";
    if (!preset.empty()) eff["preset"] = preset;
    eff["scenario"] = mrt::scenario_to_json(setup.scenario);
    eff["estimators"] = ordered_json::array();
    for (const auto& e : setup.estimators) eff["estimators"].push_back(estimator_to_json(e));
    eff["true_beta"] = std::vector<double>(truth.data(), truth.data() + truth.size());
    eff["seed"] = seed;
    eff["reps"] = reps;
    eff["threads"] = threads;
    eff["failure_budget"] = budget;
    eff["out"] = f.out;
    if (round_digits) eff["round"] = *round_digits;
    write_json_file(out / "effective_config.json", eff);
    return 0;
}

// ---------------------------------------------------------------------------
// sensitivity
// ---------------------------------------------------------------------------

int cmd_sensitivity(const Flags& f)
{
    const json config = load_config(f);
    const auto round_digits = effective_round(f, config);
    check_round(round_digits);
    const fs::path out = prepare_out_dir(f.out);

    const std::string data = f.data.empty()
                                 ? merged<std::string>(std::nullopt, config, "data", "")
                                 : f.data;
    if (data.empty())
        throw mrt::MrtError(mrt::Err::InvalidArgument,
                            "a dataset is required (--data or config \"data\")");
    const mrt::Schema schema = config.contains("schema")
                                   ? schema_from_json(config.at("schema"))
                                   : mrt::Schema{};
    const double eps = merged<double>(std::nullopt, config, "eps", 1e-6);

    mrt::ModelSpec model;
    if (!f.spec_path.empty())
        model = mrt::parse_model_spec(read_json_file(f.spec_path));
    else if (config.contains("model"))
        model = mrt::parse_model_spec(config.at("model"));
    else
        throw mrt::MrtError(mrt::Err::InvalidArgument,
                            "a model spec is required (--spec or config \"model\")");

    mrt::LoessSpec lspec = config.contains("loess")
                               ? loess_from_json(config.at("loess"))
                               : mrt::LoessSpec{};
    if (f.span) lspec.span = *f.span;
    if (f.degree) lspec.degree = *f.degree;
    const std::string day_col =
        !f.day_column.empty()
            ? f.day_column
            : merged<std::string>(std::nullopt, config, "day_column",
                                  std::string("day"));

    const mrt::MrtDataset ds = mrt::load_csv(data, schema, eps);
    const mrt::EffectCurve curve = mrt::effect_over_time(ds, model, lspec, day_col);

    mrt::csv::Table table;
    table.header = {"day", "estimate", "lcl", "ucl", "comparator_estimate"};
    for (std::size_t i = 0; i < curve.grid.size(); ++i)
        table.rows.push_back({fmt_num(curve.grid[i], round_digits),
                              fmt_num(curve.estimate[i], round_digits),
                              fmt_num(curve.lcl[i], round_digits),
                              fmt_num(curve.ucl[i], round_digits),
                              fmt_num(curve.comparator[i], round_digits)});
    mrt::csv::write_file((out / "result.csv").string(), table);

    ordered_json res;
    res["command"] = "sensitivity";
    res["data"] = data;
    res["day_column"] = day_col;
    res["span"] = lspec.span;
    res["degree"] = lspec.degree;
    res["grid"] = curve.grid;
    res["estimate"] = curve.estimate;
    res["local_se"] = curve.local_se;
    res["comparator_estimate"] = curve.comparator;
    res["comparator_lcl"] = curve.lcl;
    res["comparator_ucl"] = curve.ucl;
    write_json_file(out / "result.json", res);

    ordered_json eff;
    eff["command"] = "sensitivity";
    eff["data"] = data;
    eff["out"] = f.out;
    eff["schema"] = schema_to_json(schema);
    eff["eps"] = eps;
    eff["model"] = mrt::model_spec_to_json(model);
    eff["loess"] = loess_to_json(lspec);
    eff["day_column"] = day_col;
    if (round_digits) eff["round"] = *round_digits;
    write_json_file(out / "effective_config.json", eff);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Causal excursion-effect analysis for micro-randomized trials"};
    app.require_subcommand(1);

    Flags fit_f, sim_f, mc_f, cg_f, sens_f;

    auto* fit = app.add_subcommand("fit", "Fit the weighted centered model to a CSV dataset");
    fit->add_option("--data", fit_f.data, "Input dataset CSV");
    fit->add_option("--spec", fit_f.spec_path, "Model spec JSON file");
    fit->add_option("--config", fit_f.config_path, "Run config JSON file");
    fit->add_option("--out", fit_f.out, "Output directory")->required();
    fit->add_option("--round", fit_f.round, "Round CSV numbers to k digits");

    auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset CSV");
    sim->add_option("--scenario", sim_f.scenario_path, "Scenario JSON file");
    sim->add_option("--config", sim_f.config_path, "Run config JSON file");
    sim->add_option("--seed", sim_f.seed, "RNG seed (required)");
    sim->add_option("--out", sim_f.out, "Output directory")->required();

    auto* mc = app.add_subcommand("mc", "Monte Carlo bias/SD/coverage study");
    mc->add_option("--preset", mc_f.preset,
                   "Built-in study: stationary-ar1 or endogeneity");
    mc->add_option("--scenario", mc_f.scenario_path, "Scenario JSON file");
    mc->add_option("--config", mc_f.config_path, "Run config JSON file");
    mc->add_option("--seed", mc_f.seed, "RNG seed (required)");
    mc->add_option("--reps", mc_f.reps, "Number of replications");
    mc->add_option("--threads", mc_f.threads, "Worker threads (0 = auto)");
    mc->add_option("--failure-budget", mc_f.failure_budget,
                   "Tolerated replication failures (default 0)");
    mc->add_option("--round", mc_f.round, "Round CSV numbers to k digits");
    mc->add_option("--out", mc_f.out, "Output directory")->required();

    auto* cg = app.add_subcommand("compare-gee",
                                  "Endogeneity comparison: WCLS vs GEE (mc preset)");
    cg->add_option("--config", cg_f.config_path, "Run config JSON file");
    cg->add_option("--seed", cg_f.seed, "RNG seed (required)");
    cg->add_option("--reps", cg_f.reps, "Number of replications");
    cg->add_option("--threads", cg_f.threads, "Worker threads (0 = auto)");
    cg->add_option("--failure-budget", cg_f.failure_budget,
                   "Tolerated replication failures (default 0)");
    cg->add_option("--round", cg_f.round, "Round CSV numbers to k digits");
    cg->add_option("--out", cg_f.out, "Output directory")->required();

    auto* sens = app.add_subcommand(
        "sensitivity", "Effect-versus-day curve: local polynomial vs linear model");
    sens->add_option("--data", sens_f.data, "Input dataset CSV");
    sens->add_option("--spec", sens_f.spec_path, "Model spec JSON file");
    sens->add_option("--config", sens_f.config_path, "Run config JSON file");
    sens->add_option("--day-column", sens_f.day_column, "Day-in-study column (default: day)");
    sens->add_option("--span", sens_f.span, "Smoothing span in (0,1] (default 2/3)");
    sens->add_option("--degree", sens_f.degree, "Local polynomial degree (default 2)");
    sens->add_option("--round", sens_f.round, "Round CSV numbers to k digits");
    sens->add_option("--out", sens_f.out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (fit->parsed()) return cmd_fit(fit_f);
        if (sim->parsed()) return cmd_simulate(sim_f);
        if (mc->parsed()) return cmd_mc(mc_f);
        if (cg->parsed()) {
            cg_f.preset = "endogeneity";
            return cmd_mc(cg_f);
        }
        if (sens->parsed()) return cmd_sensitivity(sens_f);
    } catch (const mrt::MrtError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return static_cast<int>(ex.cls());
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 3;
    }
    return 0;
}
