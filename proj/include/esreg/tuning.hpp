#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <esreg/core.hpp>
#include <esreg/errors.hpp>
#include <esreg/rng.hpp>
#include <esreg/solvers.hpp>
#include <esreg/two_step.hpp>

namespace esreg {

enum class TuningRule { cv_min, cv_1se, hbic };
enum class Stage { qr, es, proj };

inline const char* to_string(TuningRule r) {
    switch (r) {
    case TuningRule::cv_min: return "cv_min";
    case TuningRule::cv_1se: return "cv_1se";
    case TuningRule::hbic: return "hbic";
    }
    return "?";
}

inline const char* to_string(Stage s) {
    switch (s) {
    case Stage::qr: return "qr";
    case Stage::es: return "es";
    case Stage::proj: return "proj";
    }
    return "?";
}

inline TuningRule parse_rule(const std::string& s) {
    if (s == "cv" || s == "cv_min") return TuningRule::cv_min;
    if (s == "cv1se" || s == "cv_1se") return TuningRule::cv_1se;
    if (s == "hbic") return TuningRule::hbic;
    throw InputError("unknown tuning rule '" + s + "'");
}

inline Stage parse_stage(const std::string& s) {
    if (s == "qr") return Stage::qr;
    if (s == "es") return Stage::es;
    if (s == "proj") return Stage::proj;
    throw InputError("unknown stage '" + s + "'");
}

struct CvConfig {
    int folds = 10;
    int n_lambda = 50;
    double lambda_min_ratio = 0.01;
    std::uint64_t seed = 1;
    /// A path stops once its support exceeds this size; unset means floor(n_train / (2 log p)).
    std::optional<Index> max_support;
};

/// HBIC constants; unset fields resolve to C_n = D_n = max(1, log log n), K_n = floor(n / (2 log p)).
struct HbicConfig {
    std::optional<double> C_n;
    std::optional<double> D_n;
    std::optional<Index> K_n;

    double resolved_C(Index n) const { return C_n.value_or(std::max(1.0, std::log(std::log(static_cast<double>(n))))); }
    double resolved_D(Index n) const { return D_n.value_or(std::max(1.0, std::log(std::log(static_cast<double>(n))))); }
    Index resolved_K(Index n, Index p) const {
        if (K_n) return std::max<Index>(1, *K_n);
        const double lp = std::log(static_cast<double>(std::max<Index>(p, 2)));
        return std::max<Index>(1, static_cast<Index>(std::floor(static_cast<double>(n) / (2.0 * lp))));
    }
};

/// Decreasing penalty grid with per-lambda solutions and scores. Lambdas are on the scale of the
/// stage objective (lambda_q, lambda_e, lambda_m), not the internal solver scale.
struct LambdaPath {
    Stage stage = Stage::qr;
    TuningRule rule = TuningRule::cv_min;
    std::vector<double> grid;
    std::vector<double> cv_mean;
    std::vector<double> cv_se;
    std::vector<double> hbic;
    std::vector<Index> support_size;  // full-data support per lambda (-1 when not computed)
    std::vector<Vector> solutions;    // full-data solutions for computed lambdas (empty vector otherwise)
    Index selected = 0;
    int folds_used = 0;
    std::vector<std::string> warnings;

    double selected_lambda() const { return grid.at(static_cast<std::size_t>(selected)); }
    const Vector& selected_solution() const { return solutions.at(static_cast<std::size_t>(selected)); }
};

/// Fold id in [0, K) per row: a seeded permutation dealt round-robin.
inline std::vector<int> fold_assignment(Index n, int K, std::uint64_t seed) {
    if (K < 2) throw InputError("cross-validation needs at least 2 folds");
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    CounterRng rng(seed, {0x666f6c6473ULL, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(K)});
    for (Index i = n - 1; i > 0; --i) {
        const auto k = static_cast<Index>(rng() % static_cast<std::uint64_t>(i + 1));
        std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(k)]);
    }
    std::vector<int> fold(static_cast<std::size_t>(n));
    for (Index r = 0; r < n; ++r) fold[static_cast<std::size_t>(perm[static_cast<std::size_t>(r)])] = static_cast<int>(r % K);
    return fold;
}

/// One stage's penalized problem in solver form: loss(y - X b) + solver_scale * lambda * sum w|b|.
struct StageProblem {
    Stage stage = Stage::qr;
    Matrix X;
    Vector y;
    Vector weights;
    double tau = 0.5;
    double solver_scale = 1.0;
    Problem kind = Problem::ls;

    Index n() const { return X.rows(); }

    StageProblem subset(const std::vector<Index>& rows) const {
        StageProblem out;
        out.stage = stage;
        out.weights = weights;
        out.tau = tau;
        out.solver_scale = solver_scale;
        out.kind = kind;
        out.X.resize(static_cast<Index>(rows.size()), X.cols());
        out.y.resize(static_cast<Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            out.X.row(static_cast<Index>(r)) = X.row(rows[r]);
            out.y[static_cast<Index>(r)] = y[rows[r]];
        }
        return out;
    }

    double lambda_max() const {
        return lambda_path_max(X, y, weights, kind, tau) / solver_scale;
    }

    SolveReport solve(double lambda, const SolverConfig& cfg) const {
        const PenaltySpec pen{solver_scale * lambda, weights};
        return kind == Problem::ls ? lasso_ls_fit(X, y, pen, cfg) : sqr_fit(X, y, QuantileLevel(tau), pen, cfg);
    }

    /// Mean out-of-sample loss: check loss for the quantile stage, squared error otherwise.
    double loss(const Vector& b) const {
        const Vector r = y - X * b;
        return kind == Problem::sqr ? mean_check_loss(r, tau) : r.squaredNorm() / static_cast<double>(r.size());
    }

    Index support(const Vector& b) const {
        Index s = 0;
        for (Index j = 0; j < b.size(); ++j) s += (weights[j] > 0.0 && b[j] != 0.0) ? 1 : 0;
        return s;
    }

    Index penalized_count() const { return (weights.array() > 0.0).count(); }
};

/// Builds the stage problem. ES needs beta_hat (adjusted responses); projection needs target column j.
inline StageProblem make_stage_problem(const Dataset& ds, Stage stage, const QuantileLevel& level,
                                       const Vector* beta_hat = nullptr, Index j = -1) {
    StageProblem sp;
    sp.stage = stage;
    sp.tau = level.tau();
    switch (stage) {
    case Stage::qr:
        sp.X = ds.X();
        sp.y = ds.y();
        sp.weights = default_penalty_weights(ds);
        sp.kind = Problem::sqr;
        break;
    case Stage::es:
        if (!beta_hat || beta_hat->size() != ds.p()) throw InputError("ES stage tuning needs beta_hat of length p");
        sp.X = level.tau() * ds.X();
        sp.y = adjusted_responses(ds.y(), ds.X() * *beta_hat, level.tau());
        sp.weights = default_penalty_weights(ds);
        sp.solver_scale = level.tau();
        sp.kind = Problem::ls;
        break;
    case Stage::proj:
        if (j < 0 || j >= ds.p() || (ds.has_intercept() && j == 0)) {
            throw InputError("projection target must be a non-intercept column");
        }
        sp.X = drop_column(ds.X(), j);
        sp.y = ds.X().col(j);
        sp.weights = drop_entry(default_penalty_weights(ds), j);
        sp.kind = Problem::ls;
        break;
    }
    return sp;
}

inline std::vector<double> make_grid(double lambda_max, int n_lambda, double min_ratio) {
    if (!(lambda_max > 0.0) || n_lambda <= 1) return {std::max(lambda_max, 0.0)};
    std::vector<double> grid(static_cast<std::size_t>(n_lambda));
    for (int k = 0; k < n_lambda; ++k) {
        grid[static_cast<std::size_t>(k)] = lambda_max * std::pow(min_ratio, static_cast<double>(k) / (n_lambda - 1));
    }
    return grid;
}

inline Index default_max_support(Index n, Index p_penalized) {
    const double lp = std::log(static_cast<double>(std::max<Index>(p_penalized, 3)));
    return std::max<Index>(1, std::min<Index>(p_penalized, static_cast<Index>(std::floor(static_cast<double>(n) / (2.0 * lp)))));
}

/// Warm-started path over grid[0..last]; stops early once the support exceeds max_support.
/// Returns the reports for the computed prefix.
inline std::vector<SolveReport> solve_path(const StageProblem& sp, const std::vector<double>& grid, std::size_t last,
                                           SolverConfig cfg, Index max_support) {
    std::vector<SolveReport> out;
    if (sp.kind == Problem::sqr && !cfg.smoothing_bandwidth) {
        cfg.smoothing_bandwidth = default_bandwidth(sp.X.rows(), sp.X.cols(), sp.tau);
    }
    for (std::size_t k = 0; k <= last && k < grid.size(); ++k) {
        out.push_back(sp.solve(grid[k], cfg));
        cfg.warm_start = out.back().coefficients;
        if (sp.support(out.back().coefficients) > max_support) break;
    }
    return out;
}

namespace detail {

inline void fill_full_path(LambdaPath& path, const StageProblem& sp, std::size_t last, const SolverConfig& cfg,
                           Index max_support) {
    const auto reps = solve_path(sp, path.grid, last, cfg, max_support);
    path.solutions.assign(path.grid.size(), Vector());
    path.support_size.assign(path.grid.size(), -1);
    for (std::size_t k = 0; k < reps.size(); ++k) {
        path.solutions[k] = reps[k].coefficients;
        path.support_size[k] = sp.support(reps[k].coefficients);
        if (!reps[k].converged) {
            path.warnings.push_back("solver did not converge at lambda index " + std::to_string(k));
        }
    }
}

} // namespace detail

/// Full-data path without cross-validation (used by the HBIC rules).
inline LambdaPath compute_path(const StageProblem& sp, const CvConfig& cv, const SolverConfig& cfg) {
    LambdaPath path;
    path.stage = sp.stage;
    path.grid = make_grid(sp.lambda_max(), cv.n_lambda, cv.lambda_min_ratio);
    const Index cap = cv.max_support.value_or(default_max_support(sp.n(), sp.penalized_count()));
    detail::fill_full_path(path, sp, path.grid.size() - 1, cfg, cap);
    return path;
}

/// K-fold cross-validation over a decreasing grid anchored at the full-data lambda_max.
/// cv_min takes the minimizer of the mean fold loss; cv_1se the largest lambda whose mean is within one
/// standard error of that minimum. Full-data solutions are computed up to the selected lambda.
inline LambdaPath cv_select(const StageProblem& sp, TuningRule rule, const CvConfig& cv, const SolverConfig& cfg) {
    if (rule == TuningRule::hbic) throw InputError("cv_select handles cv_min and cv_1se only");
    const Index n = sp.n();
    if (n < 2 * cv.folds) throw InputError("cross-validation needs n >= 2K");

    LambdaPath path;
    path.stage = sp.stage;
    path.rule = rule;
    path.grid = make_grid(sp.lambda_max(), cv.n_lambda, cv.lambda_min_ratio);
    const std::size_t L = path.grid.size();

    const auto fold = fold_assignment(n, cv.folds, cv.seed);
    std::vector<std::vector<double>> fold_loss;  // per usable fold, per computed lambda
    for (int k = 0; k < cv.folds; ++k) {
        std::vector<Index> train, test;
        for (Index i = 0; i < n; ++i) (fold[static_cast<std::size_t>(i)] == k ? test : train).push_back(i);
        try {
            const StageProblem tr = sp.subset(train);
            const StageProblem te = sp.subset(test);
            const Index cap = cv.max_support.value_or(default_max_support(tr.n(), tr.penalized_count()));
            const auto reps = solve_path(tr, path.grid, L - 1, cfg, cap);
            std::vector<double> losses;
            for (const auto& r : reps) losses.push_back(te.loss(r.coefficients));
            fold_loss.push_back(std::move(losses));
        } catch (const std::exception& e) {
            path.warnings.push_back("fold " + std::to_string(k) + " skipped: " + e.what());
        }
    }
    if (static_cast<int>(fold_loss.size()) < cv.folds - 1) {
        throw SolverError("cross-validation failed in " + std::to_string(cv.folds - fold_loss.size()) + " folds");
    }
    path.folds_used = static_cast<int>(fold_loss.size());

    std::size_t common = L;
    for (const auto& fl : fold_loss) common = std::min(common, fl.size());
    path.cv_mean.assign(L, std::numeric_limits<double>::infinity());
    path.cv_se.assign(L, std::numeric_limits<double>::infinity());
    const double K = static_cast<double>(fold_loss.size());
    for (std::size_t l = 0; l < common; ++l) {
        double m = 0.0;
        for (const auto& fl : fold_loss) m += fl[l];
        m /= K;
        double ss = 0.0;
        for (const auto& fl : fold_loss) ss += (fl[l] - m) * (fl[l] - m);
        path.cv_mean[l] = m;
        path.cv_se[l] = std::sqrt(ss / (K - 1.0) / K);
    }

    std::size_t best = 0;
    for (std::size_t l = 1; l < common; ++l) {
        if (path.cv_mean[l] < path.cv_mean[best]) best = l;
    }
    std::size_t chosen = best;
    if (rule == TuningRule::cv_1se) {
        const double bound = path.cv_mean[best] + path.cv_se[best];
        for (std::size_t l = 0; l <= best; ++l) {
            if (path.cv_mean[l] <= bound) {
                chosen = l;
                break;
            }
        }
    }
    path.selected = static_cast<Index>(chosen);
    detail::fill_full_path(path, sp, chosen, cfg, std::numeric_limits<Index>::max());
    return path;
}

namespace detail {

inline Index hbic_select(LambdaPath& path, Index K_n) {
    Index best = -1;
    for (std::size_t l = 0; l < path.grid.size(); ++l) {
        if (path.solutions[l].size() == 0 || path.support_size[l] > K_n) continue;
        if (best < 0 || path.hbic[l] < path.hbic[static_cast<std::size_t>(best)]) best = static_cast<Index>(l);
    }
    if (best < 0) throw SolverError("every HBIC candidate exceeds the support cap K_n");
    path.rule = TuningRule::hbic;
    path.selected = best;
    return best;
}

} // namespace detail

/// log(n^{-1} sum rho_tau(y - X beta)) + |beta|_0 C_n log(p) / n over a quantile-stage path.
inline double hbic_q_value(double mean_check, Index support, double C_n, Index p, Index n) {
    return std::log(mean_check) +
           static_cast<double>(support) * C_n * std::log(static_cast<double>(p)) / static_cast<double>(n);
}

/// log((2n)^{-1} sum (Z - tau X theta)^2) + |theta|_0 D_n log(p) / n over an ES-stage path.
inline double hbic_e_value(double half_mse, Index support, double D_n, Index p, Index n) {
    return std::log(half_mse) +
           static_cast<double>(support) * D_n * std::log(static_cast<double>(p)) / static_cast<double>(n);
}

inline LambdaPath hbic_q(const Dataset& ds, const QuantileLevel& level, LambdaPath path, const HbicConfig& hcfg = {}) {
    const Index n = ds.n();
    const Index p = ds.penalized_count();
    path.hbic.assign(path.grid.size(), std::numeric_limits<double>::infinity());
    for (std::size_t l = 0; l < path.grid.size(); ++l) {
        if (path.solutions[l].size() == 0) continue;
        const double loss = mean_check_loss(ds.y() - ds.X() * path.solutions[l], level.tau());
        path.hbic[l] = hbic_q_value(loss, path.support_size[l], hcfg.resolved_C(n), p, n);
    }
    detail::hbic_select(path, hcfg.resolved_K(n, p));
    return path;
}

inline LambdaPath hbic_e(const Dataset& ds, const QuantileLevel& level, const Vector& beta_hat, LambdaPath path,
                         const HbicConfig& hcfg = {}) {
    const Index n = ds.n();
    const Index p = ds.penalized_count();
    const double tau = level.tau();
    const Vector z = adjusted_responses(ds.y(), ds.X() * beta_hat, tau);
    path.hbic.assign(path.grid.size(), std::numeric_limits<double>::infinity());
    for (std::size_t l = 0; l < path.grid.size(); ++l) {
        if (path.solutions[l].size() == 0) continue;
        const double half_mse = (z - tau * (ds.X() * path.solutions[l])).squaredNorm() / (2.0 * static_cast<double>(n));
        path.hbic[l] = hbic_e_value(half_mse, path.support_size[l], hcfg.resolved_D(n), p, n);
    }
    detail::hbic_select(path, hcfg.resolved_K(n, p));
    return path;
}

/// Tunes one stage with the requested rule.
inline LambdaPath select_lambda(const Dataset& ds, Stage stage, const QuantileLevel& level, TuningRule rule,
                                const CvConfig& cv, const SolverConfig& cfg, const HbicConfig& hcfg = {},
                                const Vector* beta_hat = nullptr, Index j = -1) {
    const StageProblem sp = make_stage_problem(ds, stage, level, beta_hat, j);
    if (rule != TuningRule::hbic) return cv_select(sp, rule, cv, cfg);
    LambdaPath path = compute_path(sp, cv, cfg);
    switch (stage) {
    case Stage::qr: return hbic_q(ds, level, std::move(path), hcfg);
    case Stage::es: return hbic_e(ds, level, *beta_hat, std::move(path), hcfg);
    case Stage::proj: throw InputError("HBIC is defined for the quantile and ES stages only");
    }
    return path;
}

struct TuningOptions {
    TuningRule rule_q = TuningRule::cv_min;
    TuningRule rule_e = TuningRule::cv_min;
    TuningRule rule_m = TuningRule::cv_1se;
    CvConfig cv;
    HbicConfig hbic;
    SolverConfig solver;
    std::optional<double> lambda_q;  // fixed penalty levels bypass tuning
    std::optional<double> lambda_e;
    std::optional<double> lambda_m;
};

struct TunedTwoStep {
    TwoStepFit fit;
    std::optional<LambdaPath> path_q;
    std::optional<LambdaPath> path_e;
};

/// Two-step fit with lambda_q and lambda_e chosen by the configured rules (or fixed when given).
inline TunedTwoStep fit_two_step_tuned(const Dataset& ds, const QuantileLevel& level, const TuningOptions& opt) {
    TunedTwoStep out;
    CvConfig cvq = opt.cv;
    cvq.seed = derive_seed(opt.cv.seed, {static_cast<std::uint64_t>(Stage::qr)});
    CvConfig cve = opt.cv;
    cve.seed = derive_seed(opt.cv.seed, {static_cast<std::uint64_t>(Stage::es)});

    CoefVector beta{Vector(), CoefRole::quantile};
    double lq = 0.0;
    SolveReport rq;
    if (opt.lambda_q) {
        lq = *opt.lambda_q;
        beta = fit_quantile_stage(ds, level, lq, opt.solver, &rq);
    } else {
        out.path_q = select_lambda(ds, Stage::qr, level, opt.rule_q, cvq, opt.solver, opt.hbic);
        lq = out.path_q->selected_lambda();
        beta.values = out.path_q->selected_solution();
    }

    CoefVector theta{Vector(), CoefRole::es};
    double le = 0.0;
    SolveReport re;
    if (opt.lambda_e) {
        le = *opt.lambda_e;
        theta = fit_es_stage(ds, level, beta.values, le, opt.solver, &re);
    } else {
        out.path_e = select_lambda(ds, Stage::es, level, opt.rule_e, cve, opt.solver, opt.hbic, &beta.values);
        le = out.path_e->selected_lambda();
        theta.values = out.path_e->selected_solution();
    }
    out.fit = assemble_two_step(ds, level, std::move(beta), std::move(theta), lq, le);
    out.fit.report_q = std::move(rq);
    out.fit.report_e = std::move(re);
    if (out.path_q) out.fit.warnings.insert(out.fit.warnings.end(), out.path_q->warnings.begin(), out.path_q->warnings.end());
    if (out.path_e) out.fit.warnings.insert(out.fit.warnings.end(), out.path_e->warnings.begin(), out.path_e->warnings.end());
    return out;
}

} // namespace esreg
