#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <esreg/esreg.hpp>

using namespace esreg;

namespace {

enum Exit { ok = 0, input_error = 2, solver_error = 3, degenerate_error = 4 };

struct Common {
    std::string input;
    std::string response;
    double tau = 0.5;
    std::string tail = "lower";
    std::string rule = "cv";
    std::string rule_m = "cv1se";
    int folds = 10;
    std::uint64_t seed = 1;
    std::string out;
    std::string format = "json";
    std::string standardize = "on";
    std::string response_transform = "none";
    std::vector<std::string> categorical;
    std::vector<std::string> baseline;
    std::optional<double> lambda_q;
    std::optional<double> lambda_e;
    std::optional<double> lambda_m;
};

void add_common(CLI::App* cmd, Common& c, bool data = true) {
    if (data) {
        cmd->add_option("--input,-i", c.input, "CSV file with a header row")->required()->check(CLI::ExistingFile);
        cmd->add_option("--response,-r", c.response, "response column name")->required();
        cmd->add_option("--tau", c.tau, "quantile / ES level in (0,1)")->required();
        cmd->add_option("--tail", c.tail, "tail of the response distribution")->check(CLI::IsMember({"lower", "upper"}));
        cmd->add_option("--standardize", c.standardize, "standardize covariates")->check(CLI::IsMember({"on", "off"}));
        cmd->add_option("--response-transform", c.response_transform, "transform applied to the response")
            ->check(CLI::IsMember({"none", "log", "log1p"}));
        cmd->add_option("--categorical", c.categorical, "treat these columns as categorical")->delimiter(',');
        cmd->add_option("--baseline", c.baseline, "baseline level as column=level")->delimiter(',');
        cmd->add_option("--lambda-q", c.lambda_q, "fixed quantile-stage penalty (skips tuning)");
        cmd->add_option("--lambda-e", c.lambda_e, "fixed ES-stage penalty (skips tuning)");
    }
    cmd->add_option("--rule", c.rule, "tuning rule for the quantile and ES stages")
        ->check(CLI::IsMember({"cv", "cv1se", "hbic"}));
    cmd->add_option("--folds", c.folds, "cross-validation folds")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", c.seed, "random seed");
    cmd->add_option("--out,-o", c.out, "output file (default: stdout)");
    cmd->add_option("--format", c.format, "output format")->check(CLI::IsMember({"json", "csv"}));
}

CsvData load(const Common& c) {
    CsvOptions opt;
    opt.response = c.response;
    opt.categorical.insert(c.categorical.begin(), c.categorical.end());
    for (const auto& b : c.baseline) {
        const auto eq = b.find('=');
        if (eq == std::string::npos) throw InputError("--baseline expects column=level, got '" + b + "'");
        opt.baseline[b.substr(0, eq)] = b.substr(eq + 1);
    }
    CsvData d = read_csv_file(c.input, opt);
    if (c.response_transform != "none") {
        Vector y = d.data.y();
        for (Index i = 0; i < y.size(); ++i) {
            if (c.response_transform == "log") {
                if (!(y[i] > 0.0)) throw InputError("log transform needs a positive response (row " + std::to_string(i + 1) + ")");
                y[i] = std::log(y[i]);
            } else {
                if (!(y[i] > -1.0)) throw InputError("log1p transform needs response > -1 (row " + std::to_string(i + 1) + ")");
                y[i] = std::log1p(y[i]);
            }
        }
        d.data = d.data.with_response(std::move(y));
    }
    return d;
}

AnalysisOptions analysis_options(const Common& c) {
    AnalysisOptions a;
    const TuningRule r = parse_rule(c.rule);
    a.tuning.rule_q = r;
    a.tuning.rule_e = r;
    a.tuning.rule_m = parse_rule(c.rule_m);
    a.tuning.cv.folds = c.folds;
    a.tuning.lambda_q = c.lambda_q;
    a.tuning.lambda_e = c.lambda_e;
    a.tuning.lambda_m = c.lambda_m;
    a.standardize = c.standardize == "on";
    a.seed = c.seed;
    return a;
}

QuantileLevel level_of(const Common& c) { return QuantileLevel(c.tau, c.tail == "upper" ? Tail::upper : Tail::lower); }

json resolved_config(const std::string& command, const Common& c, const AnalysisOptions& a) {
    return json{{"command", command},
                {"input", c.input},
                {"response", c.response},
                {"response_transform", c.response_transform},
                {"tau", c.tau},
                {"tail", c.tail},
                {"alpha", a.alpha},
                {"null_value", a.null_value},
                {"standardize", a.standardize},
                {"categorical", c.categorical},
                {"baseline", c.baseline},
                {"seed", c.seed},
                {"tuning", to_json(a.tuning)}};
}

void emit(const Common& c, const std::string& text) {
    if (c.out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(c.out);
    if (!f) throw InputError("cannot write '" + c.out + "'");
    f << text;
}

std::vector<Index> resolve_targets(const CsvData& d, const std::vector<std::string>& specs) {
    std::vector<Index> out;
    const Dataset& ds = d.data;
    for (const auto& s : specs) {
        if (auto it = d.expansions.find(s); it != d.expansions.end()) {
            for (const auto& name : it->second) out.push_back(ds.find_column(name));
            continue;
        }
        if (Index j = ds.find_column(s); j >= 0) {
            out.push_back(j);
            continue;
        }
        if (auto num = detail::parse_number(s); num && std::floor(*num) == *num) {
            const auto j = static_cast<Index>(*num);
            if (j < 0 || j >= ds.p()) throw InputError("target index " + s + " out of range");
            out.push_back(j);
            continue;
        }
        throw InputError("unknown target column '" + s + "'");
    }
    for (Index j : out) {
        if (ds.has_intercept() && j == 0) throw InputError("the intercept cannot be an inference target");
    }
    if (out.empty()) throw InputError("no inference targets given");
    return out;
}

std::string csv_line(const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t k = 0; k < cells.size(); ++k) s += (k ? "," : "") + cells[k];
    return s + "\n";
}

std::string num(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

int cmd_fit(const Common& c) {
    const CsvData d = load(c);
    const AnalysisOptions a = analysis_options(c);
    const FittedModel m = fit_model(d.data, level_of(c), a);
    const json cfg = resolved_config("fit", c, a);
    if (c.format == "csv") {
        std::string s = "# " + cfg.dump() + "\n" + csv_line({"term", "beta_hat", "theta_hat"});
        for (Index j = 0; j < d.data.p(); ++j) {
            s += csv_line({d.data.column_names()[static_cast<std::size_t>(j)], num(m.beta[j]), num(m.theta[j])});
        }
        emit(c, s);
    } else {
        json out{{"schema_version", kSchemaVersion}, {"config", cfg}, {"fit", to_json(m)}};
        emit(c, out.dump(2) + "\n");
    }
    return ok;
}

int cmd_infer(const Common& c, const std::vector<std::string>& targets, double alpha, double null_value,
              const std::string& alternative) {
    const CsvData d = load(c);
    AnalysisOptions a = analysis_options(c);
    a.alpha = alpha;
    a.null_value = null_value;
    a.sides = alternative == "greater" ? 1 : alternative == "less" ? -1 : 0;
    const auto js = resolve_targets(d, targets);
    const FittedModel m = fit_model(d.data, level_of(c), a);
    json cfg = resolved_config("infer", c, a);
    cfg["targets"] = targets;
    cfg["alternative"] = alternative;
    std::vector<InferenceDetail> res;
    for (Index j : js) res.push_back(infer_coordinate(m, j, a));
    if (c.format == "csv") {
        std::string s = "# " + cfg.dump() + "\n" +
                        csv_line({"term", "theta_hat", "theta_tilde", "ci_lower", "ci_upper", "test_stat", "p_value",
                                  "reject", "sigma_s2", "sigma_omega2"});
        for (const auto& r : res) {
            const auto& x = r.result;
            s += csv_line({x.name, num(x.theta_hat), num(x.theta_tilde), num(x.ci_lower), num(x.ci_upper),
                           num(x.test_stat), num(x.p_value), x.reject ? "1" : "0", num(x.sigma_s2),
                           num(x.sigma_omega2)});
        }
        emit(c, s);
    } else {
        json rows = json::array();
        for (const auto& r : res) rows.push_back(to_json(r, m.fit.lambda_e, m.fit.lambda_q));
        json out{{"schema_version", kSchemaVersion}, {"config", cfg}, {"fit", to_json(m)}, {"inference", rows}};
        emit(c, out.dump(2) + "\n");
    }
    return ok;
}

int cmd_tune(const Common& c, const std::string& stage_name, const std::string& target) {
    const CsvData d = load(c);
    const AnalysisOptions a = analysis_options(c);
    const QuantileLevel level = level_of(c);
    Dataset work = d.data;
    QuantileLevel wl = level;
    if (level.tail() == Tail::upper) {
        auto f = upper_tail_transform(work, level);
        work = std::move(f.first);
        wl = f.second;
    }
    if (a.standardize) work = standardize(work).first;
    const Stage stage = parse_stage(stage_name);
    TuningOptions t = seeded(a.tuning, derive_seed(a.seed, {0x6376}));
    CvConfig cv = t.cv;
    cv.seed = derive_seed(t.cv.seed, {static_cast<std::uint64_t>(stage)});
    std::optional<LambdaPath> path;
    if (stage == Stage::qr) {
        path = select_lambda(work, stage, wl, t.rule_q, cv, t.solver, t.hbic);
    } else if (stage == Stage::es) {
        CvConfig cvq = t.cv;
        cvq.seed = derive_seed(t.cv.seed, {static_cast<std::uint64_t>(Stage::qr)});
        Vector beta;
        if (t.lambda_q) {
            beta = fit_quantile_stage(work, wl, *t.lambda_q, t.solver).values;
        } else {
            beta = select_lambda(work, Stage::qr, wl, t.rule_q, cvq, t.solver, t.hbic).selected_solution();
        }
        path = select_lambda(work, stage, wl, t.rule_e, cv, t.solver, t.hbic, &beta);
    } else {
        const auto js = resolve_targets(d, {target});
        if (js.size() != 1) throw InputError("projection tuning needs exactly one target column");
        path = select_lambda(work, stage, wl, t.rule_m, cv, t.solver, t.hbic, nullptr, js.front());
    }
    json cfg = resolved_config("tune", c, a);
    cfg["stage"] = stage_name;
    if (c.format == "csv") {
        std::string s = "# " + cfg.dump() + "\n" + csv_line({"lambda", "cv_mean", "cv_se", "hbic", "support_size", "selected"});
        for (std::size_t k = 0; k < path->grid.size(); ++k) {
            auto at = [&](const std::vector<double>& v) { return k < v.size() && std::isfinite(v[k]) ? num(v[k]) : ""; };
            s += csv_line({num(path->grid[k]), at(path->cv_mean), at(path->cv_se), at(path->hbic),
                           std::to_string(path->support_size[k]),
                           static_cast<Index>(k) == path->selected ? "1" : "0"});
        }
        emit(c, s);
    } else {
        json out{{"schema_version", kSchemaVersion}, {"config", cfg}, {"tuning", to_json(*path)}};
        emit(c, out.dump(2) + "\n");
    }
    return ok;
}

int cmd_rcv(const Common& c, const std::vector<std::string>& targets) {
    const CsvData d = load(c);
    const AnalysisOptions a = analysis_options(c);
    const auto js = resolve_targets(d, targets);
    const FittedModel m = fit_model(d.data, level_of(c), a);
    const TuningOptions t = seeded(a.tuning, derive_seed(a.seed, {0x6376}));
    json rows = json::array();
    for (Index j : js) {
        const std::uint64_t split_seed = derive_seed(a.seed, {0x726376, static_cast<std::uint64_t>(j)});
        const RcvEstimate est = rcv_variance(m.working, m.working_level, j, t, split_seed);
        const ProjectionFit proj = tuned_projection(m.working, m.working_level, j, t);
        const auto [ns2, nw2] = naive_variance(m.fit, proj);
        const double s2 = m.column_scale(j) * m.column_scale(j);
        rows.push_back(json{{"j", j},
                            {"name", d.data.column_names()[static_cast<std::size_t>(j)]},
                            {"sigma_s2", est.sigma_s2 * s2},
                            {"sigma_omega2", est.sigma_omega2 * s2},
                            {"half_estimates", est.half_estimates},
                            {"split_sizes", est.split_sizes},
                            {"support_sizes", est.support_sizes},
                            {"naive_sigma_s2", ns2 * s2},
                            {"naive_sigma_omega2", nw2 * s2},
                            {"split_seed", split_seed}});
    }
    json cfg = resolved_config("rcv", c, a);
    cfg["targets"] = targets;
    if (c.format == "csv") {
        std::string s = "# " + cfg.dump() + "\n" +
                        csv_line({"term", "sigma_s2", "sigma_omega2", "naive_sigma_s2", "naive_sigma_omega2"});
        for (const auto& r : rows) {
            s += csv_line({r["name"].get<std::string>(), num(r["sigma_s2"]), num(r["sigma_omega2"]),
                           num(r["naive_sigma_s2"]), num(r["naive_sigma_omega2"])});
        }
        emit(c, s);
    } else {
        json out{{"schema_version", kSchemaVersion}, {"config", cfg}, {"rcv", rows}};
        emit(c, out.dump(2) + "\n");
    }
    return ok;
}

struct SimArgs {
    std::string scenario;
    std::optional<int> replications;
    std::optional<int> workers;
    std::optional<std::uint64_t> seed;
    std::string ci_out;
    bool records = false;
};

int cmd_simulate(const Common& c, const SimArgs& s, const CLI::App& sub) {
    ExperimentConfig cfg = experiment_from_json(load_config_file(s.scenario));
    if (s.replications) cfg.replications = *s.replications;
    if (s.workers) cfg.workers = *s.workers;
    if (s.seed) cfg.scenario.seed = *s.seed;
    if (sub.count("--rule")) {
        cfg.tuning.rule_q = cfg.tuning.rule_e = parse_rule(c.rule);
    }
    if (sub.count("--folds")) cfg.tuning.cv.folds = c.folds;
    cfg.validate();
    const ExperimentResult res = run_experiment(cfg);
    if (c.format == "csv") {
        std::ostringstream os;
        write_metrics_csv(os, res);
        emit(c, os.str());
    } else {
        emit(c, to_json(res, s.records).dump(2) + "\n");
    }
    if (!s.ci_out.empty()) {
        std::ofstream f(s.ci_out);
        if (!f) throw InputError("cannot write '" + s.ci_out + "'");
        write_ci_long_csv(f, res);
    }
    return ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-step penalized expected-shortfall regression with debiased inference"};
    app.require_subcommand(1);
    Common c;

    auto* fit = app.add_subcommand("fit", "fit the two-step estimator");
    add_common(fit, c);

    auto* infer = app.add_subcommand("infer", "debiased estimates, confidence intervals and score tests");
    add_common(infer, c);
    std::vector<std::string> targets;
    double alpha = 0.05;
    double null_value = 0.0;
    std::string alternative = "two-sided";
    infer->add_option("--target,-t", targets, "target columns (names, categorical sources or indices)")
        ->required()
        ->delimiter(',');
    infer->add_option("--alpha", alpha, "test level / 1 - confidence")->check(CLI::Range(0.0, 1.0));
    infer->add_option("--null", null_value, "null value for the score test");
    infer->add_option("--alternative", alternative, "score test alternative")
        ->check(CLI::IsMember({"two-sided", "greater", "less"}));
    infer->add_option("--rule-m", c.rule_m, "tuning rule for the projection lasso")->check(CLI::IsMember({"cv", "cv1se"}));
    infer->add_option("--lambda-m", c.lambda_m, "fixed projection penalty");

    auto* tune = app.add_subcommand("tune", "penalty path and tuning scores for one stage");
    add_common(tune, c);
    std::string stage = "qr";
    std::string tune_target;
    tune->add_option("--stage", stage, "stage to tune")->check(CLI::IsMember({"qr", "es", "proj"}));
    tune->add_option("--target,-t", tune_target, "target column for the projection stage");

    auto* rcv = app.add_subcommand("rcv", "refitted cross-validation variance estimates");
    add_common(rcv, c);
    std::vector<std::string> rcv_targets;
    rcv->add_option("--target,-t", rcv_targets, "target columns")->required()->delimiter(',');

    auto* sim = app.add_subcommand("simulate", "Monte Carlo experiment from a scenario file");
    add_common(sim, c, false);
    SimArgs s;
    sim->add_option("--scenario", s.scenario, "scenario file (.toml or .json)")->required()->check(CLI::ExistingFile);
    sim->add_option("--replications", s.replications, "override the replication count")->check(CLI::PositiveNumber);
    sim->add_option("--workers", s.workers, "worker threads")->check(CLI::PositiveNumber);
    sim->add_option("--ci-out", s.ci_out, "long-format CSV of per-replication estimates and intervals");
    sim->add_flag("--records", s.records, "include per-replication records in the JSON output");
    sim->callback([&] {
        if (sim->count("--seed")) s.seed = c.seed;
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : input_error;
    }

    try {
        if (*fit) return cmd_fit(c);
        if (*infer) return cmd_infer(c, targets, alpha, null_value, alternative);
        if (*tune) {
            if (stage == "proj" && tune_target.empty()) throw InputError("--stage proj needs --target");
            return cmd_tune(c, stage, tune_target);
        }
        if (*rcv) return cmd_rcv(c, rcv_targets);
        if (*sim) return cmd_simulate(c, s, *sim);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return input_error;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return input_error;
    } catch (const DegenerateError& e) {
        std::cerr << "inference error: " << e.what() << "\n";
        return degenerate_error;
    } catch (const std::exception& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return solver_error;
    }
    return ok;
}
