#pragma once

#include <algorithm>
#include <array>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <esreg/core.hpp>
#include <esreg/errors.hpp>
#include <esreg/inference.hpp>
#include <esreg/rng.hpp>
#include <esreg/solvers.hpp>
#include <esreg/tuning.hpp>

namespace esreg {

struct RcvEstimate {
    double sigma_s2 = 0.0;
    double sigma_omega2 = 0.0;
    // {sigma_s2 from half 1, sigma_s2 from half 2, sigma_omega2 from half 1, sigma_omega2 from half 2}
    std::array<double, 4> half_estimates{};
    std::array<Index, 2> split_sizes{};
    // per half: {s_q, s_e, s_m} selected on that half (intercept excluded)
    std::array<std::array<Index, 3>, 2> support_sizes{};
    std::uint64_t split_seed = 0;
};

/// Random split into halves of sizes ceil(n/2) and floor(n/2); each half sorted.
inline std::pair<std::vector<Index>, std::vector<Index>> rcv_split(Index n, std::uint64_t seed) {
    if (n < 4) throw InputError("refitted cross-validation needs n >= 4");
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    CounterRng rng(seed, {0x73706c6974ULL, static_cast<std::uint64_t>(n)});
    for (Index i = n - 1; i > 0; --i) {
        const auto k = static_cast<Index>(rng() % static_cast<std::uint64_t>(i + 1));
        std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(k)]);
    }
    const auto n1 = static_cast<std::size_t>((n + 1) / 2);
    std::vector<Index> a(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n1));
    std::vector<Index> b(perm.begin() + static_cast<std::ptrdiff_t>(n1), perm.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return {std::move(a), std::move(b)};
}

struct RcvHalf {
    double sigma_s2 = 0.0;
    double sigma_omega2 = 0.0;
    std::array<Index, 3> supports{};
};

namespace detail {

inline std::vector<Index> with_intercept(const Dataset& ds, const std::vector<Index>& support) {
    std::vector<Index> cols;
    if (ds.has_intercept()) cols.push_back(0);
    cols.insert(cols.end(), support.begin(), support.end());
    return cols;
}

inline Vector ls_residuals(const Matrix& XS, const Vector& y) {
    if (XS.cols() == 0) return y;
    return y - XS * least_squares(XS, y);
}

} // namespace detail

/// Selects supports on `select` rows and computes the refitted variance pieces on `eval` rows.
inline RcvHalf rcv_half(const Dataset& ds, const QuantileLevel& level, Index j, const std::vector<Index>& select,
                        const std::vector<Index>& eval, const TuningOptions& opt) {
    detail::check_target(ds, j);
    const Dataset sel = ds.subset_rows(select);
    const Dataset ev = ds.subset_rows(eval);
    const double tau = level.tau();

    const TunedTwoStep tuned = fit_two_step_tuned(sel, level, opt);
    std::vector<Index> supp_m;
    if (opt.lambda_m) {
        supp_m = fit_projection(sel, j, *opt.lambda_m, opt.solver).support_m;
    } else {
        CvConfig cvm = opt.cv;
        cvm.seed = derive_seed(opt.cv.seed, {static_cast<std::uint64_t>(Stage::proj)});
        const LambdaPath pm = select_lambda(sel, Stage::proj, level, opt.rule_m, cvm, opt.solver, opt.hbic, nullptr, j);
        supp_m = make_projection(sel, j, pm.selected_solution(), pm.selected_lambda()).support_m;
    }
    const auto& supp_q = tuned.fit.support_q;
    const auto& supp_e = tuned.fit.support_e;

    RcvHalf out;
    out.supports = {static_cast<Index>(supp_q.size()), static_cast<Index>(supp_e.size()),
                    static_cast<Index>(supp_m.size())};
    const Index m = ev.n();
    const Index dof_s = m - out.supports[0] - out.supports[1] - out.supports[2];
    const Index dof_w = m - out.supports[2];
    const Index intercept = ds.has_intercept() ? 1 : 0;
    if (dof_s <= 0 || m <= intercept + std::max({out.supports[0], out.supports[1], out.supports[2]})) {
        throw DegenerateError("refitted cross-validation: half-sample of size " + std::to_string(m) +
                              " does not exceed the selected support sizes (" + std::to_string(out.supports[0]) + ", " +
                              std::to_string(out.supports[1]) + ", " + std::to_string(out.supports[2]) +
                              "); use a larger sample or a stronger penalty");
    }

    // unpenalized smoothed quantile refit on the selected quantile support
    const auto cols_q = detail::with_intercept(ds, supp_q);
    Vector beta = Vector::Zero(ds.p());
    if (!cols_q.empty()) {
        const Matrix XQ = select_columns(ev.X(), cols_q);
        SolverConfig cfg = opt.solver;
        cfg.warm_start.reset();
        cfg.smoothing_bandwidth = default_bandwidth(m, ds.p(), tau);
        const auto rep = sqr_fit(XQ, ev.y(), level, PenaltySpec{0.0, Vector::Zero(XQ.cols())}, cfg);
        for (std::size_t k = 0; k < cols_q.size(); ++k) beta[cols_q[k]] = rep.coefficients[static_cast<Index>(k)];
    }
    const Vector z = adjusted_responses(ev.y(), ev.X() * beta, tau);
    const Vector e = detail::ls_residuals(tau * select_columns(ev.X(), detail::with_intercept(ds, supp_e)), z);
    const Vector omega = detail::ls_residuals(select_columns(ev.X(), detail::with_intercept(ds, supp_m)), ev.X().col(j));

    out.sigma_s2 = (omega.array().square() * e.array().square()).sum() / static_cast<double>(dof_s);
    out.sigma_omega2 = omega.squaredNorm() / static_cast<double>(dof_w);
    if (!(out.sigma_s2 > 0.0) || !(out.sigma_omega2 > 0.0)) {
        throw DegenerateError("refitted cross-validation produced a nonpositive variance estimate");
    }
    return out;
}

/// Refitted cross-validation for (sigma_s^2, sigma_omega^2) with an explicit split. Both halves are
/// tuned with the same CV seed, so exchanging the halves leaves the result unchanged.
inline RcvEstimate rcv_variance(const Dataset& ds, const QuantileLevel& level, Index j, const TuningOptions& opt,
                                const std::vector<Index>& s1, const std::vector<Index>& s2) {
    const RcvHalf a = rcv_half(ds, level, j, s1, s2, opt);
    const RcvHalf b = rcv_half(ds, level, j, s2, s1, opt);
    RcvEstimate est;
    est.half_estimates = {a.sigma_s2, b.sigma_s2, a.sigma_omega2, b.sigma_omega2};
    est.sigma_s2 = 0.5 * (a.sigma_s2 + b.sigma_s2);
    est.sigma_omega2 = 0.5 * (a.sigma_omega2 + b.sigma_omega2);
    est.split_sizes = {static_cast<Index>(s1.size()), static_cast<Index>(s2.size())};
    est.support_sizes = {a.supports, b.supports};
    return est;
}

inline RcvEstimate rcv_variance(const Dataset& ds, const QuantileLevel& level, Index j, const TuningOptions& opt,
                                std::uint64_t seed) {
    const auto [s1, s2] = rcv_split(ds.n(), seed);
    RcvEstimate est = rcv_variance(ds, level, j, opt, s1, s2);
    est.split_seed = seed;
    return est;
}

/// Plug-in moments n^{-1} sum omega^2 e^2 and n^{-1} sum omega^2 without sample splitting.
inline std::pair<double, double> naive_variance(const TwoStepFit& fit, const ProjectionFit& proj) {
    const double n = static_cast<double>(fit.es_residuals.size());
    const double s2 = (proj.omega_hat.array().square() * fit.es_residuals.array().square()).sum() / n;
    return {s2, proj.omega_hat.squaredNorm() / n};
}

} // namespace esreg
