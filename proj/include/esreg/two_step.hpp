#pragma once

#include <string>
#include <utility>
#include <vector>

#include <esreg/core.hpp>
#include <esreg/solvers.hpp>

namespace esreg {

/// Output of the two-step estimator: penalized quantile fit, adjusted responses, penalized ES fit.
struct TwoStepFit {
    QuantileLevel level{0.5};
    CoefVector beta_hat;
    CoefVector theta_hat;
    Vector z_hat;         // Z_i(beta_hat)
    Vector es_residuals;  // z_hat - tau X theta_hat
    std::vector<Index> support_q;
    std::vector<Index> support_e;
    double lambda_q = 0.0;
    double lambda_e = 0.0;
    SolveReport report_q;
    SolveReport report_e;
    std::vector<std::string> warnings;
};

/// Penalized (smoothed) quantile regression with the intercept unpenalized.
inline CoefVector fit_quantile_stage(const Dataset& ds, const QuantileLevel& level, double lambda_q,
                                     const SolverConfig& cfg = {}, SolveReport* diagnostics = nullptr) {
    auto rep = sqr_fit(ds.X(), ds.y(), level, PenaltySpec{lambda_q, default_penalty_weights(ds)}, cfg);
    CoefVector out{rep.coefficients, CoefRole::quantile};
    if (diagnostics) *diagnostics = std::move(rep);
    return out;
}

/// Minimizes (2n)^{-1} sum (Z_i(beta_hat) - tau X_i'theta)^2 + tau lambda_e ||theta||_1, i.e. a lasso of Z
/// on the design tau X with penalty level tau lambda_e.
inline CoefVector fit_es_stage(const Dataset& ds, const QuantileLevel& level, const Vector& beta_hat, double lambda_e,
                               const SolverConfig& cfg = {}, SolveReport* diagnostics = nullptr) {
    if (beta_hat.size() != ds.p()) throw InputError("beta_hat length does not match design columns");
    const double tau = level.tau();
    const Vector z = adjusted_responses(ds.y(), ds.X() * beta_hat, tau);
    const Matrix tX = tau * ds.X();
    auto rep = lasso_ls_fit(tX, z, PenaltySpec{tau * lambda_e, default_penalty_weights(ds)}, cfg);
    CoefVector out{rep.coefficients, CoefRole::es};
    if (diagnostics) *diagnostics = std::move(rep);
    return out;
}

/// Populates the derived fields of a fit from its two coefficient vectors.
inline TwoStepFit assemble_two_step(const Dataset& ds, const QuantileLevel& level, CoefVector beta, CoefVector theta,
                                    double lambda_q, double lambda_e) {
    TwoStepFit fit;
    fit.level = level;
    const double tau = level.tau();
    const Vector xb = ds.X() * beta.values;
    fit.z_hat = adjusted_responses(ds.y(), xb, tau);
    fit.es_residuals = fit.z_hat - tau * (ds.X() * theta.values);
    fit.support_q = support_of(beta.values, ds.has_intercept());
    fit.support_e = support_of(theta.values, ds.has_intercept());
    fit.beta_hat = std::move(beta);
    fit.theta_hat = std::move(theta);
    fit.lambda_q = lambda_q;
    fit.lambda_e = lambda_e;
    Index exceed = 0;
    for (Index i = 0; i < ds.n(); ++i) exceed += ds.y()[i] <= xb[i] ? 1 : 0;
    if (exceed == 0) {
        fit.warnings.emplace_back("no observation lies at or below the fitted quantile; the ES stage reduces to "
                                  "a projection of the quantile fit");
    }
    return fit;
}

inline TwoStepFit fit_two_step(const Dataset& ds, const QuantileLevel& level, double lambda_q, double lambda_e,
                               const SolverConfig& cfg = {}) {
    SolveReport rq, re;
    CoefVector beta = fit_quantile_stage(ds, level, lambda_q, cfg, &rq);
    CoefVector theta = fit_es_stage(ds, level, beta.values, lambda_e, cfg, &re);
    TwoStepFit fit = assemble_two_step(ds, level, std::move(beta), std::move(theta), lambda_q, lambda_e);
    fit.report_q = std::move(rq);
    fit.report_e = std::move(re);
    return fit;
}

/// Unpenalized least squares of z_hat on tau X restricted to the intercept and the ES support.
inline CoefVector refit_on_support(const Dataset& ds, const TwoStepFit& fit) {
    std::vector<Index> cols;
    if (ds.has_intercept()) cols.push_back(0);
    cols.insert(cols.end(), fit.support_e.begin(), fit.support_e.end());
    if (static_cast<Index>(cols.size()) >= ds.n()) {
        throw DegenerateError("refit support of size " + std::to_string(cols.size()) + " needs more than n rows");
    }
    const double tau = fit.level.tau();
    const Matrix XS = tau * select_columns(ds.X(), cols);
    const Vector coef = least_squares(XS, fit.z_hat);
    CoefVector out{Vector::Zero(ds.p()), CoefRole::es};
    for (std::size_t k = 0; k < cols.size(); ++k) out.values[cols[k]] = coef[static_cast<Index>(k)];
    return out;
}

/// Upper-tail fits at level tau are lower-tail fits of -y at level 1 - tau. The map is an involution
/// on (y, level); coefficients and interval endpoints come back through negate_coefs / flip_interval.
inline std::pair<Dataset, QuantileLevel> upper_tail_transform(const Dataset& ds, const QuantileLevel& level) {
    const Tail flipped = level.tail() == Tail::upper ? Tail::lower : Tail::upper;
    return {ds.with_response(-ds.y()), QuantileLevel(1.0 - level.tau(), flipped)};
}

inline CoefVector negate_coefs(CoefVector c) {
    c.values = -c.values;
    return c;
}

inline std::pair<double, double> flip_interval(double lower, double upper) { return {-upper, -lower}; }

} // namespace esreg
