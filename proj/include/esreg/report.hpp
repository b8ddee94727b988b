#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include <esreg/analysis.hpp>
#include <esreg/csv.hpp>
#include <esreg/errors.hpp>
#include <esreg/harness.hpp>
#include <esreg/simgen.hpp>
#include <esreg/tuning.hpp>

namespace esreg {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

namespace detail {

inline json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline json num_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

template <class T>
json opt_json(const std::optional<T>& o) {
    return o ? json(*o) : json(nullptr);
}

} // namespace detail

inline json to_json(const SimScenario& sc) {
    return json{{"n", sc.n},
                {"p", sc.p},
                {"s", sc.s},
                {"tau", sc.tau},
                {"design", to_string(sc.design)},
                {"model", to_string(sc.model)},
                {"signal_scale", sc.signal_scale},
                {"seed", sc.seed},
                {"standardize", sc.standardize}};
}

inline json to_json(const TuningOptions& t) {
    return json{{"rule_q", to_string(t.rule_q)},
                {"rule_e", to_string(t.rule_e)},
                {"rule_m", to_string(t.rule_m)},
                {"folds", t.cv.folds},
                {"n_lambda", t.cv.n_lambda},
                {"lambda_min_ratio", t.cv.lambda_min_ratio},
                {"max_support", detail::opt_json(t.cv.max_support)},
                {"hbic_C_n", detail::opt_json(t.hbic.C_n)},
                {"hbic_D_n", detail::opt_json(t.hbic.D_n)},
                {"hbic_K_n", detail::opt_json(t.hbic.K_n)},
                {"solver_tol", t.solver.tol},
                {"solver_max_iter", t.solver.max_iter},
                {"kkt_tol", t.solver.kkt_tol},
                {"lambda_q", detail::opt_json(t.lambda_q)},
                {"lambda_e", detail::opt_json(t.lambda_e)},
                {"lambda_m", detail::opt_json(t.lambda_m)}};
}

inline json to_json(const LambdaPath& path) {
    json scores = json::array();
    json ses = json::array();
    for (double v : path.cv_mean) scores.push_back(detail::num_or_null(v));
    for (double v : path.cv_se) ses.push_back(detail::num_or_null(v));
    json hb = json::array();
    for (double v : path.hbic) hb.push_back(detail::num_or_null(v));
    return json{{"stage", to_string(path.stage)}, {"rule", to_string(path.rule)},     {"grid", path.grid},
                {"cv_mean", scores},              {"cv_se", ses},                      {"hbic", hb},
                {"support_size", path.support_size}, {"selected", path.selected},     {"folds_used", path.folds_used},
                {"warnings", path.warnings}};
}

inline json coef_json(const CoefVector& c, const std::vector<std::string>& names) {
    json o = json::object();
    for (Index j = 0; j < c.size(); ++j) o[names[static_cast<std::size_t>(j)]] = c[j];
    return o;
}

inline json support_json(const std::vector<Index>& s, const std::vector<std::string>& names) {
    json a = json::array();
    for (Index j : s) a.push_back(names[static_cast<std::size_t>(j)]);
    return a;
}

inline json to_json(const FittedModel& m) {
    const auto& names = m.working.column_names();
    json st = json{{"applied", m.info.applied}};
    if (m.info.applied) {
        st["center"] = detail::vec_json(m.info.center);
        st["scale"] = detail::vec_json(m.info.scale);
    }
    json out{{"tau", m.level.tau()},
             {"tail", to_string(m.level.tail())},
             {"n", m.working.n()},
             {"p", m.working.p()},
             {"beta_hat", coef_json(m.beta, names)},
             {"theta_hat", coef_json(m.theta, names)},
             {"support_q", support_json(m.fit.support_q, names)},
             {"support_e", support_json(m.fit.support_e, names)},
             {"lambda_q", m.fit.lambda_q},
             {"lambda_e", m.fit.lambda_e},
             {"standardization", st},
             {"warnings", m.fit.warnings}};
    if (m.path_q) out["tuning_q"] = to_json(*m.path_q);
    if (m.path_e) out["tuning_e"] = to_json(*m.path_e);
    return out;
}

inline json to_json(const InferenceDetail& d, double lambda_e, double lambda_q) {
    const InferenceResult& r = d.result;
    return json{{"j", r.j},
                {"name", r.name},
                {"theta_hat", r.theta_hat},
                {"theta_tilde", r.theta_tilde},
                {"ci", json::array({r.ci_lower, r.ci_upper})},
                {"alpha", r.alpha},
                {"null_value", r.null_value},
                {"score", r.score_value},
                {"test_stat", r.test_stat},
                {"p_value", r.p_value},
                {"reject", r.reject},
                {"sigma_s2", r.sigma_s2},
                {"sigma_omega2", r.sigma_omega2},
                {"lambdas", json{{"lambda_q", lambda_q}, {"lambda_e", lambda_e}, {"lambda_m", d.projection.lambda_m}}},
                {"rcv",
                 json{{"half_estimates", d.rcv.half_estimates},
                      {"split_sizes", d.rcv.split_sizes},
                      {"support_sizes", d.rcv.support_sizes}}},
                {"seeds", json{{"rcv_split", d.rcv_seed}}}};
}

inline json to_json(const MetricsRow& r) {
    json o{{"method", r.method}, {"target", r.target}, {"replications", r.replications}};
    if (r.has_support) {
        o["error_p"] = r.error_p;
        o["error_p_se"] = detail::num_or_null(r.error_p_se);
        o["error_fp"] = r.error_fp;
        o["error_fp_se"] = detail::num_or_null(r.error_fp_se);
        o["tpr"] = r.tpr;
        o["tpr_se"] = detail::num_or_null(r.tpr_se);
        o["fpr"] = r.fpr;
        o["fpr_se"] = detail::num_or_null(r.fpr_se);
    }
    o["bias"] = detail::num_or_null(r.bias);
    o["bias_se"] = detail::num_or_null(r.bias_se);
    o["mse"] = detail::num_or_null(r.mse);
    o["mse_se"] = detail::num_or_null(r.mse_se);
    o["coverage"] = detail::num_or_null(r.coverage);
    o["coverage_se"] = detail::num_or_null(r.coverage_se);
    return o;
}

inline json to_json(const ExperimentConfig& c) {
    json methods = json::array();
    for (Method m : c.methods) methods.push_back(to_string(m));
    return json{{"scenario", to_json(c.scenario)},
                {"replications", c.replications},
                {"methods", methods},
                {"targets", c.targets},
                {"alpha", c.alpha},
                {"bootstrap_B", c.bootstrap_B},
                {"workers", c.workers},
                {"tuning", to_json(c.tuning)}};
}

inline json to_json(const ExperimentResult& res, bool with_records = true) {
    json rows = json::array();
    for (const auto& r : res.rows) rows.push_back(to_json(r));
    json fails = json::object();
    for (const auto& [k, v] : res.failure_counts) fails[k] = v;
    json out{{"schema_version", kSchemaVersion},
             {"config", to_json(res.config)},
             {"truth", json{{"theta_star", detail::vec_json(res.truth.theta_star)},
                            {"beta_star", detail::vec_json(res.truth.beta_star)}}},
             {"metrics", rows},
             {"failures", res.failures},
             {"failure_reasons", fails}};
    if (with_records) {
        json recs = json::array();
        for (const auto& r : res.records) {
            json jr{{"replication", r.replication}, {"ok", r.ok}};
            if (!r.ok) jr["failure"] = r.failure;
            json ms = json::array();
            for (const auto& m : r.methods) {
                json jm{{"method", to_string(m.method)}};
                if (m.support) {
                    jm["error_p"] = m.support->error_p;
                    jm["error_fp"] = m.support->error_fp;
                    jm["tpr"] = m.support->tpr;
                    jm["fpr"] = m.support->fpr;
                }
                json ts = json::array();
                for (const auto& t : m.targets) {
                    json jt{{"j", t.j}, {"estimate", t.estimate}, {"truth", t.truth}};
                    if (t.ci_lower) jt["ci"] = json::array({*t.ci_lower, *t.ci_upper});
                    if (t.sigma_s2) jt["sigma_s2"] = *t.sigma_s2;
                    if (t.sigma_omega2) jt["sigma_omega2"] = *t.sigma_omega2;
                    ts.push_back(jt);
                }
                jm["targets"] = ts;
                ms.push_back(jm);
            }
            jr["methods"] = ms;
            recs.push_back(jr);
        }
        out["records"] = recs;
    }
    return out;
}

namespace detail {

inline std::string csv_num(double x) {
    if (!std::isfinite(x)) return "";
    std::ostringstream os;
    os.precision(10);
    os << x;
    return os.str();
}

} // namespace detail

/// One row per method x target. The header carries the resolved configuration as a comment line.
inline void write_metrics_csv(std::ostream& out, const ExperimentResult& res) {
    out << "# " << to_json(res.config).dump() << '\n';
    out << "method,target,replications,error_p,error_p_se,error_fp,error_fp_se,tpr,tpr_se,fpr,fpr_se,bias,bias_se,mse,"
           "mse_se,coverage,coverage_se\n";
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& r : res.rows) {
        auto sup = [&](double v) { return detail::csv_num(r.has_support ? v : nan); };
        out << r.method << ',' << r.target << ',' << r.replications << ',' << sup(r.error_p) << ','
            << sup(r.error_p_se) << ',' << sup(r.error_fp) << ',' << sup(r.error_fp_se) << ',' << sup(r.tpr) << ','
            << sup(r.tpr_se) << ',' << sup(r.fpr) << ',' << sup(r.fpr_se) << ',' << detail::csv_num(r.bias) << ','
            << detail::csv_num(r.bias_se) << ',' << detail::csv_num(r.mse) << ',' << detail::csv_num(r.mse_se) << ','
            << detail::csv_num(r.coverage) << ',' << detail::csv_num(r.coverage_se) << '\n';
    }
}

/// Long format: one line per replication x method x target with the estimate and interval.
inline void write_ci_long_csv(std::ostream& out, const ExperimentResult& res) {
    out << "# " << to_json(res.config).dump() << '\n';
    out << "replication,method,tau,target,estimate,truth,ci_lower,ci_upper,covered\n";
    for (const auto& r : res.records) {
        if (!r.ok) continue;
        for (const auto& m : r.methods) {
            for (const auto& t : m.targets) {
                out << r.replication << ',' << to_string(m.method) << ',' << res.config.scenario.tau << ',' << t.j << ','
                    << detail::csv_num(t.estimate) << ',' << detail::csv_num(t.truth) << ',';
                if (t.ci_lower) {
                    out << detail::csv_num(*t.ci_lower) << ',' << detail::csv_num(*t.ci_upper) << ','
                        << (*t.ci_lower <= t.truth && t.truth <= *t.ci_upper ? 1 : 0);
                } else {
                    out << ",,";
                }
                out << '\n';
            }
        }
    }
}

// Scenario files: JSON objects, or flat "key = value" files (a TOML subset: numbers, quoted strings,
// booleans and one-line arrays; '#' comments).

namespace detail {

inline json parse_flat_value(const std::string& raw, const std::string& key, int line_no) {
    const std::string v = trim(raw);
    auto fail = [&] {
        return InputError("scenario line " + std::to_string(line_no) + ": cannot parse value for '" + key + "'");
    };
    if (v.empty()) throw fail();
    if (v == "true") return true;
    if (v == "false") return false;
    if (v.front() == '"') {
        if (v.size() < 2 || v.back() != '"') throw fail();
        return v.substr(1, v.size() - 2);
    }
    if (v.front() == '[') {
        if (v.back() != ']') throw fail();
        json arr = json::array();
        std::string inner = v.substr(1, v.size() - 2);
        std::stringstream ss(inner);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!trim(item).empty()) arr.push_back(parse_flat_value(item, key, line_no));
        }
        return arr;
    }
    if (auto num = parse_number(v)) {
        if (v.find_first_of(".eE") == std::string::npos) return static_cast<std::int64_t>(*num);
        return *num;
    }
    throw fail();
}

inline std::string strip_comment(const std::string& line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') quoted = !quoted;
        if (line[i] == '#' && !quoted) return line.substr(0, i);
    }
    return line;
}

} // namespace detail

inline json parse_flat_config(std::istream& in) {
    json out = json::object();
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string s = detail::trim(detail::strip_comment(line));
        if (s.empty()) continue;
        if (s.front() == '[') continue;  // section headers are accepted and ignored
        const auto eq = s.find('=');
        if (eq == std::string::npos) {
            throw InputError("scenario line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = detail::trim(s.substr(0, eq));
        out[key] = detail::parse_flat_value(s.substr(eq + 1), key, line_no);
    }
    return out;
}

inline json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    const bool is_json = path.size() >= 5 && path.substr(path.size() - 5) == ".json";
    if (is_json) {
        try {
            return json::parse(in);
        } catch (const json::parse_error& e) {
            throw InputError(std::string("invalid JSON scenario: ") + e.what());
        }
    }
    return parse_flat_config(in);
}

/// Builds an experiment from a parsed scenario; unknown keys are rejected.
inline ExperimentConfig experiment_from_json(const json& j) {
    static const std::set<std::string> known{"n",        "p",         "s",          "tau",        "design",
                                             "model",    "signal_scale", "seed",    "standardize", "replications",
                                             "methods",  "targets",   "alpha",      "bootstrap_B", "workers",
                                             "rule_q",   "rule_e",    "rule_m",     "folds",      "n_lambda",
                                             "lambda_min_ratio", "max_support"};
    ExperimentConfig c;
    try {
        for (const auto& [k, v] : j.items()) {
            if (!known.count(k)) throw InputError("unknown scenario key '" + k + "'");
        }
        auto& sc = c.scenario;
        sc.n = j.at("n").get<Index>();
        sc.p = j.at("p").get<Index>();
        sc.s = j.at("s").get<Index>();
        sc.tau = j.value("tau", sc.tau);
        if (j.contains("design")) sc.design = parse_design(j["design"].get<std::string>());
        if (j.contains("model")) sc.model = parse_noise_model(j["model"].get<std::string>());
        sc.signal_scale = j.value("signal_scale", sc.signal_scale);
        sc.seed = j.value("seed", sc.seed);
        sc.standardize = j.value("standardize", sc.standardize);
        c.replications = j.value("replications", c.replications);
        if (j.contains("methods")) {
            c.methods.clear();
            for (const auto& m : j["methods"]) c.methods.insert(parse_method(m.get<std::string>()));
        }
        if (j.contains("targets")) c.targets = j["targets"].get<std::vector<Index>>();
        c.alpha = j.value("alpha", c.alpha);
        c.bootstrap_B = j.value("bootstrap_B", c.bootstrap_B);
        c.workers = j.value("workers", c.workers);
        if (j.contains("rule_q")) c.tuning.rule_q = parse_rule(j["rule_q"].get<std::string>());
        if (j.contains("rule_e")) c.tuning.rule_e = parse_rule(j["rule_e"].get<std::string>());
        if (j.contains("rule_m")) c.tuning.rule_m = parse_rule(j["rule_m"].get<std::string>());
        c.tuning.cv.folds = j.value("folds", c.tuning.cv.folds);
        c.tuning.cv.n_lambda = j.value("n_lambda", c.tuning.cv.n_lambda);
        c.tuning.cv.lambda_min_ratio = j.value("lambda_min_ratio", c.tuning.cv.lambda_min_ratio);
        if (j.contains("max_support")) c.tuning.cv.max_support = j["max_support"].get<Index>();
    } catch (const json::exception& e) {
        throw InputError(std::string("invalid scenario: ") + e.what());
    }
    c.validate();
    return c;
}

} // namespace esreg
