#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <esreg/analysis.hpp>
#include <esreg/core.hpp>
#include <esreg/errors.hpp>
#include <esreg/rng.hpp>
#include <esreg/simgen.hpp>
#include <esreg/two_step.hpp>

namespace esreg {

enum class Method { two_step, two_step_refitted, two_step_oracle, debiased, bootstrap };

inline const char* to_string(Method m) {
    switch (m) {
    case Method::two_step: return "two_step";
    case Method::two_step_refitted: return "two_step_refitted";
    case Method::two_step_oracle: return "two_step_oracle";
    case Method::debiased: return "debiased";
    case Method::bootstrap: return "bootstrap";
    }
    return "?";
}

inline Method parse_method(const std::string& s) {
    for (Method m : {Method::two_step, Method::two_step_refitted, Method::two_step_oracle, Method::debiased,
                     Method::bootstrap}) {
        if (s == to_string(m)) return m;
    }
    throw InputError("unknown method '" + s + "'");
}

struct ExperimentConfig {
    SimScenario scenario;
    int replications = 100;
    std::set<Method> methods{Method::two_step};
    std::vector<Index> targets{2};  // design columns (the intercept is column 0)
    double alpha = 0.05;
    TuningOptions tuning;
    int bootstrap_B = 100;
    int workers = 1;
    double max_failure_rate = 0.05;

    void validate() const {
        scenario.validate();
        if (replications < 1) throw InputError("replications must be >= 1");
        if (methods.empty()) throw InputError("at least one method is required");
        if (methods.count(Method::bootstrap) && bootstrap_B < 1) throw InputError("bootstrap needs B >= 1");
        if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0,1)");
        if (workers < 1) throw InputError("workers must be >= 1");
        for (Index j : targets) {
            if (j < 1 || j > scenario.p) throw InputError("target " + std::to_string(j) + " is not a covariate column");
        }
    }
};

/// Support-recovery metrics of an ES coefficient vector against the truth (intercept excluded).
struct SupportMetrics {
    double error_p = 0.0;
    double error_fp = 0.0;
    double tpr = 0.0;
    double fpr = 0.0;
};

inline SupportMetrics support_metrics(const Vector& theta, const Vector& truth) {
    SupportMetrics m;
    double on = 0.0, off = 0.0, norm = 0.0;
    Index s = 0, tp = 0, fp = 0;
    const Index p = truth.size() - 1;
    for (Index j = 1; j <= p; ++j) {
        norm += truth[j] * truth[j];
        if (truth[j] != 0.0) {
            ++s;
            on += (theta[j] - truth[j]) * (theta[j] - truth[j]);
            tp += theta[j] != 0.0 ? 1 : 0;
        } else {
            off += theta[j] * theta[j];
            fp += theta[j] != 0.0 ? 1 : 0;
        }
    }
    norm = std::sqrt(norm);
    m.error_p = norm > 0.0 ? std::sqrt(on) / norm : std::sqrt(on);
    m.error_fp = norm > 0.0 ? std::sqrt(off) / norm : std::sqrt(off);
    m.tpr = s > 0 ? static_cast<double>(tp) / static_cast<double>(s) : 1.0;
    m.fpr = p > s ? static_cast<double>(fp) / static_cast<double>(p - s) : 0.0;
    return m;
}

struct TargetEstimate {
    Index j = 0;
    double estimate = 0.0;
    double truth = 0.0;
    std::optional<double> ci_lower;
    std::optional<double> ci_upper;
    std::optional<double> sigma_s2;
    std::optional<double> sigma_omega2;
};

struct MethodRecord {
    Method method = Method::two_step;
    std::optional<SupportMetrics> support;  // absent for coordinate-only methods
    std::vector<TargetEstimate> targets;
    double lambda_q = std::numeric_limits<double>::quiet_NaN();
    double lambda_e = std::numeric_limits<double>::quiet_NaN();
};

struct ReplicationRecord {
    int replication = 0;
    bool ok = true;
    std::string failure;
    std::vector<MethodRecord> methods;
};

struct MetricsRow {
    std::string method;
    Index target = 0;
    int replications = 0;  // successful replications contributing
    double error_p = 0.0, error_p_se = 0.0;
    double error_fp = 0.0, error_fp_se = 0.0;
    double tpr = 0.0, tpr_se = 0.0;
    double fpr = 0.0, fpr_se = 0.0;
    double bias = 0.0, bias_se = 0.0;
    double mse = 0.0, mse_se = 0.0;
    double coverage = std::numeric_limits<double>::quiet_NaN(), coverage_se = std::numeric_limits<double>::quiet_NaN();
    bool has_support = false;
};

struct ExperimentResult {
    ExperimentConfig config;
    SimTruth truth;
    std::vector<ReplicationRecord> records;
    std::vector<MetricsRow> rows;
    std::map<std::string, int> failure_counts;
    int failures = 0;
};

/// Unpenalized least squares of Z(beta*) on tau X over the intercept and the true ES support.
inline CoefVector oracle_two_step(const Dataset& ds, double tau, const SimTruth& truth) {
    const Vector z = adjusted_responses(ds.y(), ds.X() * truth.beta_star, tau);
    std::vector<Index> cols;
    if (ds.has_intercept()) cols.push_back(0);
    for (Index j = ds.has_intercept() ? 1 : 0; j < ds.p(); ++j) {
        if (truth.theta_star[j] != 0.0) cols.push_back(j);
    }
    if (static_cast<Index>(cols.size()) >= ds.n()) throw DegenerateError("oracle support is not smaller than n");
    const Vector coef = least_squares(tau * select_columns(ds.X(), cols), z);
    CoefVector out{Vector::Zero(ds.p()), CoefRole::es};
    for (std::size_t k = 0; k < cols.size(); ++k) out.values[cols[k]] = coef[static_cast<Index>(k)];
    return out;
}

/// Average of B two-step fits on row-resampled data with the penalty levels held fixed. Each resample
/// is standardized on its own when `standardize` is set; coefficients are averaged on the original scale.
inline CoefVector bootstrap_estimator(const Dataset& ds, const QuantileLevel& level, double lambda_q, double lambda_e,
                                      int B, std::uint64_t seed, bool standardize_each = true,
                                      const SolverConfig& cfg = {}) {
    if (B < 1) throw InputError("bootstrap needs B >= 1");
    Vector acc = Vector::Zero(ds.p());
    for (int b = 0; b < B; ++b) {
        CounterRng rng(seed, {0x626f6f74ULL, static_cast<std::uint64_t>(b)});
        std::vector<Index> rows(static_cast<std::size_t>(ds.n()));
        for (auto& r : rows) r = static_cast<Index>(rng() % static_cast<std::uint64_t>(ds.n()));
        const Dataset boot = ds.subset_rows(rows);
        if (standardize_each) {
            const auto [sd, info] = standardize(boot);
            const TwoStepFit fit = fit_two_step(sd, level, lambda_q, lambda_e, cfg);
            acc += destandardize_coefs(fit.theta_hat, info).values;
        } else {
            acc += fit_two_step(boot, level, lambda_q, lambda_e, cfg).theta_hat.values;
        }
    }
    return CoefVector{acc / static_cast<double>(B), CoefRole::es};
}

namespace detail {

inline MethodRecord coefficient_record(Method method, const Vector& theta, const SimTruth& truth,
                                       const std::vector<Index>& targets) {
    MethodRecord rec;
    rec.method = method;
    rec.support = support_metrics(theta, truth.theta_star);
    for (Index j : targets) rec.targets.push_back(TargetEstimate{j, theta[j], truth.theta_star[j], {}, {}, {}, {}});
    return rec;
}

} // namespace detail

/// One Monte Carlo replication. Throws on failure; the caller records the reason.
inline ReplicationRecord run_replication(const ExperimentConfig& cfg, const SimTruth& truth, int rep) {
    const SimScenario& sc = cfg.scenario;
    const Dataset ds = simulate_dataset(sc, truth, static_cast<std::uint64_t>(rep));
    const QuantileLevel level(sc.tau);
    ReplicationRecord out;
    out.replication = rep;

    AnalysisOptions opt;
    opt.tuning = cfg.tuning;
    opt.standardize = sc.standardize;
    opt.alpha = cfg.alpha;
    opt.seed = derive_seed(sc.seed, {static_cast<std::uint64_t>(rep), 3});

    const bool needs_fit = cfg.methods.count(Method::two_step) || cfg.methods.count(Method::two_step_refitted) ||
                           cfg.methods.count(Method::debiased) || cfg.methods.count(Method::bootstrap);
    std::optional<FittedModel> model;
    if (needs_fit) model = fit_model(ds, level, opt);

    for (Method m : cfg.methods) {
        switch (m) {
        case Method::two_step: {
            MethodRecord rec = detail::coefficient_record(m, model->theta.values, truth, cfg.targets);
            rec.lambda_q = model->fit.lambda_q;
            rec.lambda_e = model->fit.lambda_e;
            out.methods.push_back(std::move(rec));
            break;
        }
        case Method::two_step_refitted: {
            const CoefVector refit = model->to_original(refit_on_support(model->working, model->fit));
            out.methods.push_back(detail::coefficient_record(m, refit.values, truth, cfg.targets));
            break;
        }
        case Method::two_step_oracle: {
            const CoefVector oracle = oracle_two_step(ds, sc.tau, truth);
            out.methods.push_back(detail::coefficient_record(m, oracle.values, truth, cfg.targets));
            break;
        }
        case Method::debiased: {
            MethodRecord rec;
            rec.method = m;
            for (Index j : cfg.targets) {
                const InferenceDetail inf = infer_coordinate(*model, j, opt);
                rec.targets.push_back(TargetEstimate{j, inf.result.theta_tilde, truth.theta_star[j], inf.result.ci_lower,
                                                     inf.result.ci_upper, inf.result.sigma_s2, inf.result.sigma_omega2});
            }
            out.methods.push_back(std::move(rec));
            break;
        }
        case Method::bootstrap: {
            const CoefVector avg =
                bootstrap_estimator(ds, level, model->fit.lambda_q, model->fit.lambda_e, cfg.bootstrap_B,
                                    derive_seed(sc.seed, {static_cast<std::uint64_t>(rep), 4}), sc.standardize,
                                    cfg.tuning.solver);
            out.methods.push_back(detail::coefficient_record(m, avg.values, truth, cfg.targets));
            break;
        }
        }
    }
    return out;
}

namespace detail {

struct Moments {
    double sum = 0.0, sum_sq = 0.0;
    int count = 0;
    void add(double x) {
        sum += x;
        sum_sq += x * x;
        ++count;
    }
    double mean() const { return count ? sum / count : std::numeric_limits<double>::quiet_NaN(); }
    double se() const {
        if (count < 2) return std::numeric_limits<double>::quiet_NaN();
        const double m = mean();
        const double var = std::max(0.0, (sum_sq - count * m * m) / (count - 1));
        return std::sqrt(var / count);
    }
};

} // namespace detail

/// Aggregates per-replication records into one row per (method, target). Pure in the records.
inline std::vector<MetricsRow> aggregate(const std::vector<ReplicationRecord>& records, const ExperimentConfig& cfg) {
    std::vector<MetricsRow> rows;
    for (Method m : cfg.methods) {
        for (Index j : cfg.targets) {
            detail::Moments ep, efp, tpr, fpr, bias, sq, cov;
            bool has_support = false;
            for (const auto& r : records) {
                if (!r.ok) continue;
                for (const auto& mr : r.methods) {
                    if (mr.method != m) continue;
                    if (mr.support) {
                        has_support = true;
                        ep.add(mr.support->error_p);
                        efp.add(mr.support->error_fp);
                        tpr.add(mr.support->tpr);
                        fpr.add(mr.support->fpr);
                    }
                    for (const auto& t : mr.targets) {
                        if (t.j != j) continue;
                        const double d = t.estimate - t.truth;
                        bias.add(d);
                        sq.add(d * d);
                        if (t.ci_lower && t.ci_upper) cov.add(*t.ci_lower <= t.truth && t.truth <= *t.ci_upper ? 1.0 : 0.0);
                    }
                }
            }
            MetricsRow row;
            row.method = to_string(m);
            row.target = j;
            row.replications = bias.count;
            row.has_support = has_support;
            row.error_p = ep.mean();
            row.error_p_se = ep.se();
            row.error_fp = efp.mean();
            row.error_fp_se = efp.se();
            row.tpr = tpr.mean();
            row.tpr_se = tpr.se();
            row.fpr = fpr.mean();
            row.fpr_se = fpr.se();
            row.bias = bias.mean();
            row.bias_se = bias.se();
            row.mse = sq.mean();
            row.mse_se = sq.se();
            if (cov.count > 0) {
                row.coverage = cov.mean();
                row.coverage_se = cov.se();
            }
            rows.push_back(row);
        }
    }
    return rows;
}

/// Runs all replications on `workers` threads. Each replication draws from its own RNG streams, so the
/// records do not depend on scheduling. Failed replications are excluded with their reason; more than
/// max_failure_rate failures raise ExperimentError.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentResult res;
    res.config = cfg;
    res.truth = make_truth(cfg.scenario);
    res.records.resize(static_cast<std::size_t>(cfg.replications));

    std::atomic<int> next{0};
    auto worker = [&] {
        for (int rep = next++; rep < cfg.replications; rep = next++) {
            ReplicationRecord rec;
            try {
                rec = run_replication(cfg, res.truth, rep);
            } catch (const std::exception& e) {
                rec = ReplicationRecord{};
                rec.replication = rep;
                rec.ok = false;
                rec.failure = e.what();
            }
            res.records[static_cast<std::size_t>(rep)] = std::move(rec);
        }
    };
    const int nthreads = std::min(cfg.workers, cfg.replications);
    if (nthreads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    for (const auto& r : res.records) {
        if (!r.ok) {
            ++res.failures;
            ++res.failure_counts[r.failure];
        }
    }
    if (res.failures > cfg.max_failure_rate * cfg.replications) {
        std::string reason = res.failure_counts.empty() ? "" : res.failure_counts.begin()->first;
        throw ExperimentError(std::to_string(res.failures) + " of " + std::to_string(cfg.replications) +
                              " replications failed (e.g. " + reason + ")");
    }
    res.rows = aggregate(res.records, cfg);
    return res;
}

} // namespace esreg
