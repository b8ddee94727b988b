#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <esreg/core.hpp>
#include <esreg/errors.hpp>
#include <esreg/normal.hpp>
#include <esreg/solvers.hpp>
#include <esreg/two_step.hpp>

namespace esreg {

/// Lasso of X_j on X_{-j}. gamma_hat is indexed like X_{-j} (column j removed).
struct ProjectionFit {
    Index j = -1;
    CoefVector gamma_hat{Vector(), CoefRole::projection};
    Vector omega_hat;                // X_j - X_{-j} gamma_hat
    double lambda_m = 0.0;
    std::vector<Index> support_m;    // selected columns, in original design indexing
    SolveReport report;
};

struct InferenceResult {
    Index j = -1;
    std::string name;
    double theta_hat = 0.0;
    double theta_tilde = 0.0;
    double score_value = 0.0;   // S_n at the tested value c0
    double null_value = 0.0;    // c0
    double sigma_s2 = 0.0;
    double sigma_omega2 = 0.0;
    double ci_lower = 0.0;
    double ci_upper = 0.0;
    double alpha = 0.05;
    double test_stat = 0.0;
    double p_value = 1.0;
    bool reject = false;
};

namespace detail {

inline void check_target(const Dataset& ds, Index j) {
    if (j < 0 || j >= ds.p()) throw InputError("target column " + std::to_string(j) + " out of range");
    if (ds.has_intercept() && j == 0) throw InputError("inference target cannot be the intercept");
}

inline std::vector<Index> lift_indices(const Vector& coef_minus_j, Index j, const Vector& weights_minus_j) {
    std::vector<Index> s;
    for (Index k = 0; k < coef_minus_j.size(); ++k) {
        if (weights_minus_j[k] > 0.0 && coef_minus_j[k] != 0.0) s.push_back(k < j ? k : k + 1);
    }
    return s;
}

} // namespace detail

/// Assembles a ProjectionFit from a given gamma (used by tuned paths and by the refits).
inline ProjectionFit make_projection(const Dataset& ds, Index j, Vector gamma, double lambda_m) {
    detail::check_target(ds, j);
    if (gamma.size() != ds.p() - 1) throw InputError("projection coefficients must have length p - 1");
    ProjectionFit out;
    out.j = j;
    out.lambda_m = lambda_m;
    out.omega_hat = ds.X().col(j) - drop_column(ds.X(), j) * gamma;
    out.support_m = detail::lift_indices(gamma, j, drop_entry(default_penalty_weights(ds), j));
    out.gamma_hat.values = std::move(gamma);
    return out;
}

/// Minimizes (2n)^{-1} sum (X_ij - X_{i,-j}'gamma)^2 + lambda_m ||gamma||_1, intercept unpenalized.
inline ProjectionFit fit_projection(const Dataset& ds, Index j, double lambda_m, const SolverConfig& cfg = {}) {
    detail::check_target(ds, j);
    const Vector w = drop_entry(default_penalty_weights(ds), j);
    auto rep = lasso_ls_fit(drop_column(ds.X(), j), ds.X().col(j), PenaltySpec{lambda_m, w}, cfg);
    ProjectionFit out = make_projection(ds, j, rep.coefficients, lambda_m);
    out.report = std::move(rep);
    return out;
}

/// ES-stage fit with coordinate j held at c0: a lasso of Z(beta_hat) - tau X_j c0 on tau X_{-j}.
/// Returns the full length-p vector with entry j equal to c0.
inline CoefVector constrained_es_fit(const Dataset& ds, const QuantileLevel& level, const Vector& beta_hat, Index j,
                                     double c0, double lambda_e, const SolverConfig& cfg = {},
                                     SolveReport* diagnostics = nullptr) {
    detail::check_target(ds, j);
    if (beta_hat.size() != ds.p()) throw InputError("beta_hat length does not match design columns");
    const double tau = level.tau();
    const Vector z = adjusted_responses(ds.y(), ds.X() * beta_hat, tau);
    const Vector offset = z - tau * c0 * ds.X().col(j);
    const Matrix tX = tau * drop_column(ds.X(), j);
    const Vector w = drop_entry(default_penalty_weights(ds), j);
    auto rep = lasso_ls_fit(tX, offset, PenaltySpec{tau * lambda_e, w}, cfg);
    CoefVector out{insert_entry(rep.coefficients, j, c0), CoefRole::es};
    if (diagnostics) *diagnostics = std::move(rep);
    return out;
}

/// S_n = n^{-1} sum {Z_i(beta) - tau X_ij theta_j - tau X_{i,-j}'theta_{-j}} (X_ij - X_{i,-j}'gamma).
inline double score_Sn(double theta_j, const Vector& theta_minus_j, const Vector& beta, const Vector& gamma,
                       const Dataset& ds, double tau, Index j) {
    detail::check_target(ds, j);
    if (beta.size() != ds.p() || theta_minus_j.size() != ds.p() - 1 || gamma.size() != ds.p() - 1) {
        throw InputError("score_Sn dimension mismatch");
    }
    const Matrix Xm = drop_column(ds.X(), j);
    const Vector xj = ds.X().col(j);
    const Vector z = adjusted_responses(ds.y(), ds.X() * beta, tau);
    const Vector e = z - tau * theta_j * xj - tau * (Xm * theta_minus_j);
    const Vector omega = xj - Xm * gamma;
    return e.dot(omega) / static_cast<double>(ds.n());
}

/// dS_n / dtheta_j = -tau n^{-1} sum X_ij omega_i.
inline double score_slope(const Dataset& ds, double tau, const ProjectionFit& proj) {
    return -tau * ds.X().col(proj.j).dot(proj.omega_hat) / static_cast<double>(ds.n());
}

/// theta_tilde_j = theta_hat_j + sum(e_i omega_i) / (tau sum X_ij omega_i).
inline double debias(const Dataset& ds, const TwoStepFit& fit, const ProjectionFit& proj) {
    const Index j = proj.j;
    detail::check_target(ds, j);
    const double tau = fit.level.tau();
    const double num = fit.es_residuals.dot(proj.omega_hat);
    const double den = tau * ds.X().col(j).dot(proj.omega_hat);
    const double scale = std::max(1.0, ds.X().col(j).cwiseAbs().maxCoeff());
    if (!(std::abs(den) >= 1e-12 * static_cast<double>(ds.n()) * scale)) {
        throw DegenerateError("projection residuals are orthogonal to the target column; debiasing undefined");
    }
    return fit.theta_hat[j] + num / den;
}

inline std::pair<double, double> wald_ci(double theta_tilde, double sigma_s2, double sigma_omega2, double alpha, Index n,
                                         double tau) {
    if (!(sigma_s2 > 0.0) || !(sigma_omega2 > 0.0)) {
        throw DegenerateError("variance estimates must be positive for a confidence interval");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0,1)");
    const double z = normal_quantile(1.0 - alpha / 2.0);
    const double half = z * std::sqrt(sigma_s2) / (std::sqrt(static_cast<double>(n)) * tau * sigma_omega2);
    return {theta_tilde - half, theta_tilde + half};
}

struct ScoreTest {
    double score = 0.0;
    double stat = 0.0;
    double p_value = 1.0;
    bool reject = false;
};

/// Decorrelated score test of theta_j = c0 given the constrained nuisance fit theta(c0).
/// One-sided alternatives ("greater" / "less") are available through `sides`.
inline ScoreTest score_test(const Dataset& ds, const QuantileLevel& level, Index j, const Vector& beta_hat,
                            const Vector& theta_c0, const ProjectionFit& proj, double sigma_s2, double alpha,
                            int sides = 0) {
    if (!(sigma_s2 > 0.0)) throw DegenerateError("score test needs a positive variance estimate");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0,1)");
    const double tau = level.tau();
    ScoreTest t;
    t.score = score_Sn(theta_c0[j], drop_entry(theta_c0, j), beta_hat, proj.gamma_hat.values, ds, tau, j);
    t.stat = std::sqrt(static_cast<double>(ds.n())) * t.score / std::sqrt(sigma_s2);
    if (sides == 0) {
        t.p_value = two_sided_p_value(t.stat);
        t.reject = std::abs(t.stat) > normal_quantile(1.0 - alpha / 2.0);
    } else {
        // S_n decreases in theta_j, so large positive scores point to theta_j > c0
        const double s = sides > 0 ? t.stat : -t.stat;
        t.p_value = 1.0 - normal_cdf(s);
        t.reject = s > normal_quantile(1.0 - alpha);
    }
    return t;
}

} // namespace esreg
