#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include <esreg/core.hpp>
#include <esreg/errors.hpp>

namespace esreg {

/// lambda * sum_j weights_j |b_j|. Weight 0 leaves a coordinate unpenalized.
struct PenaltySpec {
    double lambda = 0.0;
    Vector weights;
};

struct SolverConfig {
    double tol = 1e-8;        // max absolute coefficient change
    int max_iter = 10000;     // sweeps (coordinate descent) or gradient steps (proximal)
    double kkt_tol = 1e-6;
    std::optional<Vector> warm_start;
    std::optional<double> smoothing_bandwidth;  // unset: default_bandwidth(n, p, tau)
    bool track_objective = false;
};

struct SolveReport {
    Vector coefficients;
    int iterations = 0;
    bool converged = false;
    double objective = 0.0;
    double kkt_violation = 0.0;
    double bandwidth = 0.0;  // smoothed quantile problems only
    std::vector<double> objective_trace;
};

enum class Problem { ls, sqr };

// ---------------------------------------------------------------------------------------------
// Smoothed check loss: rho_tau convolved with the uniform kernel on [-h, h].
// Equal to rho_tau outside [-h, h]; quadratic bridge u^2/(4h) + (tau - 1/2) u + h/4 inside.

inline double smoothed_check_loss(double u, double tau, double h) {
    if (u > h) return tau * u;
    if (u < -h) return (tau - 1.0) * u;
    return u * u / (4.0 * h) + (tau - 0.5) * u + 0.25 * h;
}

inline double smoothed_check_derivative(double u, double tau, double h) {
    if (u > h) return tau;
    if (u < -h) return tau - 1.0;
    return u / (2.0 * h) + tau - 0.5;
}

inline double default_bandwidth(Index n, Index p, double tau) {
    const double lp = std::log(static_cast<double>(std::max<Index>(p, 2)));
    return std::max(0.05, std::sqrt(tau * (1.0 - tau)) * std::pow(lp / static_cast<double>(n), 0.25));
}

inline double soft_threshold(double z, double t) {
    if (std::abs(z) <= t) return 0.0;  // ties go to zero
    return z > 0 ? z - t : z + t;
}

namespace detail {

inline void validate_problem(const Matrix& X, const Vector& y, const PenaltySpec& pen) {
    if (y.size() != X.rows()) throw InputError("response length does not match design rows");
    if (pen.weights.size() != X.cols()) throw InputError("penalty weights length does not match design columns");
    if (!(pen.lambda >= 0.0) || !std::isfinite(pen.lambda)) throw InputError("lambda must be finite and >= 0");
    if ((pen.weights.array() < 0.0).any() || !pen.weights.allFinite()) throw InputError("penalty weights must be >= 0");
    if (!X.allFinite() || !y.allFinite()) throw InputError("design or response contains non-finite values");
}

inline double l1_term(const Vector& b, const PenaltySpec& pen) {
    return pen.lambda * (pen.weights.array() * b.array().abs()).sum();
}

/// Max KKT violation given the negative loss gradient g (i.e. X'psi/n).
inline double kkt_violation(const Vector& g, const Vector& b, const PenaltySpec& pen) {
    double v = 0.0;
    for (Index j = 0; j < b.size(); ++j) {
        const double t = pen.lambda * pen.weights[j];
        const double e = b[j] != 0.0 ? std::abs(g[j] - (b[j] > 0 ? t : -t)) : std::max(0.0, std::abs(g[j]) - t);
        v = std::max(v, e);
    }
    return v;
}

inline double smoothed_loss_mean(const Vector& r, double tau, double h) {
    double s = 0.0;
    for (Index i = 0; i < r.size(); ++i) s += smoothed_check_loss(r[i], tau, h);
    return s / static_cast<double>(r.size());
}

inline Vector smoothed_psi(const Vector& r, double tau, double h) {
    Vector psi(r.size());
    for (Index i = 0; i < r.size(); ++i) psi[i] = smoothed_check_derivative(r[i], tau, h);
    return psi;
}

inline double empirical_quantile(Vector v, double tau) {
    std::sort(v.data(), v.data() + v.size());
    const double pos = tau * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<Index>(std::floor(pos));
    const auto hi = std::min<Index>(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Index of an unpenalized all-ones column, or -1.
inline Index find_free_intercept(const Matrix& X, const Vector& w) {
    for (Index j = 0; j < X.cols(); ++j) {
        if (w[j] == 0.0 && (X.col(j).array() == 1.0).all()) return j;
    }
    return -1;
}

/// Proximal gradient with Barzilai-Borwein steps and backtracking for the smoothed quantile
/// objective, restricted to the columns of XW. Updates b and r = y - XW b in place.
/// Returns the number of gradient steps taken.
inline int sqr_restricted_solve(const Matrix& XW, const Vector& wW, double lambda, double tau, double h,
                                Vector& b, Vector& r, double tol, double kkt_tol, int max_iter,
                                std::vector<double>* trace, bool& converged) {
    const double n = static_cast<double>(XW.rows());
    const Index m = XW.cols();
    converged = false;
    if (m == 0) {
        converged = true;
        return 0;
    }
    auto penalty = [&](const Vector& v) { return lambda * (wW.array() * v.array().abs()).sum(); };

    double f = smoothed_loss_mean(r, tau, h);
    Vector grad = -(XW.transpose() * smoothed_psi(r, tau, h)) / n;
    const double trace_sq = XW.squaredNorm() / n;
    double t = 2.0 * h / std::max(trace_sq, 1e-300);
    if (trace) trace->push_back(f + penalty(b));

    Vector b_new(m), d(m), r_new(r.size()), grad_new(m);
    int it = 0;
    while (it < max_iter) {
        ++it;
        double f_new = 0.0;
        for (int bt = 0; bt < 60; ++bt) {
            for (Index j = 0; j < m; ++j) b_new[j] = soft_threshold(b[j] - t * grad[j], t * lambda * wW[j]);
            d = b_new - b;
            r_new.noalias() = r - XW * d;
            f_new = smoothed_loss_mean(r_new, tau, h);
            const double model = f + grad.dot(d) + d.squaredNorm() / (2.0 * t);
            if (f_new <= model + 1e-15 * std::max(1.0, std::abs(f))) break;
            t *= 0.5;
        }
        grad_new.noalias() = -(XW.transpose() * smoothed_psi(r_new, tau, h)) / n;

        const Vector yv = grad_new - grad;
        const double sy = d.dot(yv);
        const double max_step = d.cwiseAbs().maxCoeff();
        b.swap(b_new);
        r.swap(r_new);
        grad.swap(grad_new);
        f = f_new;
        if (trace) trace->push_back(f + penalty(b));

        if (max_step < tol) {
            double kkt = 0.0;
            for (Index j = 0; j < m; ++j) {
                const double th = lambda * wW[j];
                const double g = -grad[j];
                kkt = std::max(kkt, b[j] != 0.0 ? std::abs(g - (b[j] > 0 ? th : -th)) : std::max(0.0, std::abs(g) - th));
            }
            if (kkt < kkt_tol) {
                converged = true;
                break;
            }
        }
        if (sy > 0.0) {
            // alternate the two Barzilai-Borwein step lengths
            t = (it % 2 == 1) ? d.squaredNorm() / sy : sy / yv.squaredNorm();
            t = std::clamp(t, 1e-12, 1e12);
        } else {
            t *= 2.0;
        }
    }
    return it;
}

/// Proximal Newton for the same restricted problem. The smoothed loss is piecewise quadratic, so its
/// generalized Hessian is the Gram matrix of the rows whose residual lies inside the bandwidth window.
/// Each step solves the damped quadratic model with coordinate descent and is accepted by an Armijo
/// line search; the damping adapts to the accepted step length. Returns the number of Newton steps,
/// or -1 when it stalls (the caller then falls back to proximal gradient).
inline int sqr_newton_restricted_solve(const Matrix& XW, const Vector& wW, double lambda, double tau, double h,
                                       Vector& b, Vector& r, double kkt_tol, int max_iter,
                                       std::vector<double>* trace, bool& converged) {
    const Index n = XW.rows();
    const Index m = XW.cols();
    const double nd = static_cast<double>(n);
    converged = false;
    if (m == 0) {
        converged = true;
        return 0;
    }
    auto penalty = [&](const Vector& v) { return lambda * (wW.array() * v.array().abs()).sum(); };
    const double diag_scale = XW.colwise().squaredNorm().mean() / (2.0 * h * nd);
    double mu = 1e-4 * diag_scale;

    double F = smoothed_loss_mean(r, tau, h) + penalty(b);
    if (trace) trace->push_back(F);
    Vector g(m), v(m), q(m), d(m), xd(n), r_new(n);
    Matrix H(m, m), band;
    int it = 0;
    while (it < max_iter) {
        g.noalias() = -(XW.transpose() * smoothed_psi(r, tau, h)) / nd;
        double kkt = 0.0;
        for (Index k = 0; k < m; ++k) {
            const double th = lambda * wW[k];
            kkt = std::max(kkt, b[k] != 0.0 ? std::abs(-g[k] - (b[k] > 0 ? th : -th)) : std::max(0.0, std::abs(g[k]) - th));
        }
        if (kkt < kkt_tol) {
            converged = true;
            return it;
        }
        ++it;

        std::vector<Index> rows;
        for (Index i = 0; i < n; ++i) {
            if (std::abs(r[i]) <= h) rows.push_back(i);
        }
        band.resize(static_cast<Index>(rows.size()), m);
        for (std::size_t k = 0; k < rows.size(); ++k) band.row(static_cast<Index>(k)) = XW.row(rows[k]);
        H.setZero();
        H.selfadjointView<Eigen::Lower>().rankUpdate(band.transpose(), 1.0 / (2.0 * h * nd));
        H = H.selfadjointView<Eigen::Lower>();
        H.diagonal().array() += mu;

        // coordinate descent on g'(v - b) + (v - b)'H(v - b)/2 + lambda sum w|v|
        v = b;
        q.setZero();
        // inexact solve: the accuracy tracks the current optimality gap
        const double inner_tol = std::max(1e-3 * kkt, 1e-14 * std::max(1.0, diag_scale));
        for (int sweep = 0; sweep < 200; ++sweep) {
            double delta = 0.0;
            for (Index k = 0; k < m; ++k) {
                const double hk = H(k, k);
                const double c = g[k] + q[k] - hk * (v[k] - b[k]);
                const double nv = soft_threshold(hk * b[k] - c, lambda * wW[k]) / hk;
                const double dv = nv - v[k];
                if (dv != 0.0) {
                    q.noalias() += dv * H.col(k);
                    v[k] = nv;
                    delta = std::max(delta, std::abs(dv) * hk);
                }
            }
            if (delta < inner_tol) break;
        }
        d = v - b;
        const double pen_b = penalty(b);
        const double decrease = g.dot(d) + penalty(v) - pen_b;
        if (!(decrease < 0.0)) return -1;

        xd.noalias() = XW * d;
        double t = 1.0;
        bool accepted = false;
        for (int bt = 0; bt < 40; ++bt) {
            r_new = r - t * xd;
            const double F_new = smoothed_loss_mean(r_new, tau, h) + penalty(b + t * d);
            if (F_new <= F + 1e-4 * t * decrease) {
                b += t * d;
                r.swap(r_new);
                F = F_new;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) return -1;
        if (trace) trace->push_back(F);
        mu = t == 1.0 ? std::max(mu * 0.25, 1e-10 * diag_scale) : mu * 4.0;
    }
    return it;
}

} // namespace detail

/// Objective (2n)^{-1} ||y - X b||^2 + lambda sum w_j |b_j|.
inline double lasso_ls_objective(const Matrix& X, const Vector& y, const PenaltySpec& pen, const Vector& b) {
    return (y - X * b).squaredNorm() / (2.0 * static_cast<double>(X.rows())) + detail::l1_term(b, pen);
}

/// Objective n^{-1} sum l_h(y - X b) + lambda sum w_j |b_j| with the smoothed check loss.
inline double sqr_objective(const Matrix& X, const Vector& y, double tau, double h, const PenaltySpec& pen,
                            const Vector& b) {
    return detail::smoothed_loss_mean(y - X * b, tau, h) + detail::l1_term(b, pen);
}

/// Unsmoothed objective n^{-1} sum rho_tau(y - X b) + lambda sum w_j |b_j|.
inline double qr_objective(const Matrix& X, const Vector& y, double tau, const PenaltySpec& pen, const Vector& b) {
    return mean_check_loss(y - X * b, tau) + detail::l1_term(b, pen);
}

inline double lasso_ls_kkt(const Matrix& X, const Vector& y, const PenaltySpec& pen, const Vector& b) {
    const Vector g = X.transpose() * (y - X * b) / static_cast<double>(X.rows());
    return detail::kkt_violation(g, b, pen);
}

inline double sqr_kkt(const Matrix& X, const Vector& y, double tau, double h, const PenaltySpec& pen,
                      const Vector& b) {
    const Vector g = X.transpose() * detail::smoothed_psi(y - X * b, tau, h) / static_cast<double>(X.rows());
    return detail::kkt_violation(g, b, pen);
}

/// Weighted-l1 least squares by cyclic coordinate descent with active-set cycling.
inline SolveReport lasso_ls_fit(const Matrix& X, const Vector& y, const PenaltySpec& pen, const SolverConfig& cfg = {}) {
    detail::validate_problem(X, y, pen);
    const Index n = X.rows();
    const Index p = X.cols();
    const double inv_n = 1.0 / static_cast<double>(n);

    Vector col_sq(p);
    for (Index j = 0; j < p; ++j) col_sq[j] = X.col(j).squaredNorm() * inv_n;

    Vector b = Vector::Zero(p);
    if (cfg.warm_start) {
        if (cfg.warm_start->size() != p) throw InputError("warm start has wrong length");
        b = *cfg.warm_start;
    }
    for (Index j = 0; j < p; ++j) {
        if (col_sq[j] == 0.0) b[j] = 0.0;
    }
    Vector r = y - X * b;

    SolveReport rep;
    auto objective = [&] { return r.squaredNorm() * 0.5 * inv_n + detail::l1_term(b, pen); };
    if (cfg.track_objective) rep.objective_trace.push_back(objective());

    auto sweep = [&](const std::vector<Index>& idx) {
        double max_delta = 0.0;
        for (Index j : idx) {
            if (col_sq[j] == 0.0) continue;
            const double old = b[j];
            const double rho = X.col(j).dot(r) * inv_n + col_sq[j] * old;
            const double nb = soft_threshold(rho, pen.lambda * pen.weights[j]) / col_sq[j];
            if (nb != old) {
                r.noalias() -= (nb - old) * X.col(j);
                b[j] = nb;
                max_delta = std::max(max_delta, std::abs(nb - old));
            }
        }
        ++rep.iterations;
        if (cfg.track_objective) rep.objective_trace.push_back(objective());
        return max_delta;
    };

    std::vector<Index> all(static_cast<std::size_t>(p));
    for (Index j = 0; j < p; ++j) all[static_cast<std::size_t>(j)] = j;
    std::vector<Index> active;

    while (rep.iterations < cfg.max_iter) {
        const double full_delta = sweep(all);
        if (full_delta < cfg.tol) {
            r = y - X * b;
            const Vector g = X.transpose() * r * inv_n;
            rep.kkt_violation = detail::kkt_violation(g, b, pen);
            if (rep.kkt_violation < cfg.kkt_tol) {
                rep.converged = true;
                break;
            }
            continue;
        }
        active.clear();
        for (Index j = 0; j < p; ++j) {
            if (b[j] != 0.0) active.push_back(j);
        }
        while (rep.iterations < cfg.max_iter) {
            if (sweep(active) < cfg.tol) break;
        }
    }

    r = y - X * b;
    rep.kkt_violation = detail::kkt_violation(X.transpose() * r * inv_n, b, pen);
    rep.objective = objective();
    rep.coefficients = std::move(b);
    return rep;
}

/// Weighted-l1 penalized smoothed quantile regression on a working set that grows with KKT violators
/// until the full problem is optimal. The restricted problems use proximal Newton, with proximal
/// gradient (Barzilai-Borwein steps) as the fallback.
inline SolveReport sqr_fit(const Matrix& X, const Vector& y, const QuantileLevel& level, const PenaltySpec& pen,
                           const SolverConfig& cfg = {}) {
    detail::validate_problem(X, y, pen);
    const double tau = level.tau();
    const Index n = X.rows();
    const Index p = X.cols();
    const double h = cfg.smoothing_bandwidth.value_or(default_bandwidth(n, p, tau));
    if (!(h > 0.0)) throw InputError("smoothing bandwidth must be positive");

    Vector b = Vector::Zero(p);
    if (cfg.warm_start) {
        if (cfg.warm_start->size() != p) throw InputError("warm start has wrong length");
        b = *cfg.warm_start;
    } else if (Index ic = detail::find_free_intercept(X, pen.weights); ic >= 0) {
        b[ic] = detail::empirical_quantile(y, tau);
    }
    Vector r = y - X * b;

    SolveReport rep;
    rep.bandwidth = h;
    std::vector<double>* trace = cfg.track_objective ? &rep.objective_trace : nullptr;

    std::vector<char> in_ws(static_cast<std::size_t>(p), 0);
    Vector g = X.transpose() * detail::smoothed_psi(r, tau, h) / static_cast<double>(n);
    for (Index j = 0; j < p; ++j) {
        if (pen.weights[j] == 0.0 || b[j] != 0.0 || std::abs(g[j]) > pen.lambda * pen.weights[j]) {
            in_ws[static_cast<std::size_t>(j)] = 1;
        }
    }

    for (int outer = 0; outer < 1000; ++outer) {
        std::vector<Index> ws;
        for (Index j = 0; j < p; ++j) {
            if (in_ws[static_cast<std::size_t>(j)]) ws.push_back(j);
        }
        const Matrix XW = select_columns(X, ws);
        Vector bW(static_cast<Index>(ws.size())), wW(static_cast<Index>(ws.size()));
        for (std::size_t k = 0; k < ws.size(); ++k) {
            bW[static_cast<Index>(k)] = b[ws[k]];
            wW[static_cast<Index>(k)] = pen.weights[ws[k]];
        }
        bool sub_converged = false;
        const int newton = detail::sqr_newton_restricted_solve(XW, wW, pen.lambda, tau, h, bW, r, cfg.kkt_tol,
                                                               std::min(200, cfg.max_iter - rep.iterations), trace,
                                                               sub_converged);
        if (newton >= 0) rep.iterations += newton;
        if (!sub_converged) {
            rep.iterations += detail::sqr_restricted_solve(XW, wW, pen.lambda, tau, h, bW, r, cfg.tol, cfg.kkt_tol,
                                                           cfg.max_iter - rep.iterations, trace, sub_converged);
        }
        for (std::size_t k = 0; k < ws.size(); ++k) b[ws[k]] = bW[static_cast<Index>(k)];

        r = y - X * b;
        g = X.transpose() * detail::smoothed_psi(r, tau, h) / static_cast<double>(n);
        bool added = false;
        for (Index j = 0; j < p; ++j) {
            if (!in_ws[static_cast<std::size_t>(j)] && std::abs(g[j]) > pen.lambda * pen.weights[j] + 0.5 * cfg.kkt_tol) {
                in_ws[static_cast<std::size_t>(j)] = 1;
                added = true;
            }
        }
        rep.kkt_violation = detail::kkt_violation(g, b, pen);
        if (!added) {
            rep.converged = sub_converged && rep.kkt_violation < cfg.kkt_tol;
            break;
        }
        if (rep.iterations >= cfg.max_iter) break;
    }
    rep.objective = detail::smoothed_loss_mean(r, tau, h) + detail::l1_term(b, pen);
    rep.coefficients = std::move(b);
    return rep;
}

/// Plain ISTA with backtracking on the full problem. Slow; intended as an independent oracle
/// for small instances (n * p up to ~1e5).
inline SolveReport reference_prox_solve(Problem problem, const Matrix& X, const Vector& y, const PenaltySpec& pen,
                                        const SolverConfig& cfg = {}, double tau = 0.5) {
    detail::validate_problem(X, y, pen);
    const Index n = X.rows();
    const Index p = X.cols();
    const double nd = static_cast<double>(n);
    double h = 0.0;
    if (problem == Problem::sqr) {
        QuantileLevel level(tau);  // validates
        h = cfg.smoothing_bandwidth.value_or(default_bandwidth(n, p, level.tau()));
    }

    auto loss = [&](const Vector& b) {
        const Vector r = y - X * b;
        return problem == Problem::ls ? r.squaredNorm() / (2.0 * nd) : detail::smoothed_loss_mean(r, tau, h);
    };
    auto neg_grad = [&](const Vector& b) -> Vector {
        const Vector r = y - X * b;
        return problem == Problem::ls ? Vector(X.transpose() * r / nd)
                                      : Vector(X.transpose() * detail::smoothed_psi(r, tau, h) / nd);
    };

    SolveReport rep;
    rep.bandwidth = h;
    Vector b = cfg.warm_start ? *cfg.warm_start : Vector::Zero(p);
    double t = 1.0;
    double f = loss(b);
    Vector g = neg_grad(b);
    while (rep.iterations < cfg.max_iter) {
        ++rep.iterations;
        Vector b_new(p);
        double f_new = 0.0;
        for (int bt = 0; bt < 100; ++bt) {
            for (Index j = 0; j < p; ++j) b_new[j] = soft_threshold(b[j] + t * g[j], t * pen.lambda * pen.weights[j]);
            const Vector d = b_new - b;
            f_new = loss(b_new);
            if (f_new <= f - g.dot(d) + d.squaredNorm() / (2.0 * t) + 1e-16 * std::max(1.0, std::abs(f))) break;
            t *= 0.5;
        }
        const double step = (b_new - b).cwiseAbs().maxCoeff();
        b = std::move(b_new);
        f = f_new;
        g = neg_grad(b);
        if (cfg.track_objective) rep.objective_trace.push_back(f + detail::l1_term(b, pen));
        if (step < cfg.tol) {
            rep.kkt_violation = detail::kkt_violation(g, b, pen);
            if (rep.kkt_violation < cfg.kkt_tol) {
                rep.converged = true;
                break;
            }
        }
    }
    rep.kkt_violation = detail::kkt_violation(g, b, pen);
    rep.objective = f + detail::l1_term(b, pen);
    rep.coefficients = std::move(b);
    return rep;
}

/// Unpenalized least squares via column-pivoted QR; throws SolverError when rank deficient.
inline Vector least_squares(const Matrix& X, const Vector& y) {
    if (X.cols() == 0) return Vector();
    Eigen::ColPivHouseholderQR<Matrix> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < X.cols()) {
        throw SolverError("rank-deficient least-squares refit (rank " + std::to_string(qr.rank()) + " < " +
                          std::to_string(X.cols()) + " columns)");
    }
    return qr.solve(y);
}

/// Smallest lambda at which the solution with every penalized coordinate at zero is optimal.
inline double lambda_path_max(const Matrix& X, const Vector& y, const Vector& weights, Problem problem,
                              double tau = 0.5, std::optional<double> bandwidth = std::nullopt) {
    if (weights.size() != X.cols()) throw InputError("weights length does not match design columns");
    const double nd = static_cast<double>(X.rows());
    std::vector<Index> free_cols;
    for (Index j = 0; j < X.cols(); ++j) {
        if (weights[j] == 0.0) free_cols.push_back(j);
    }
    Vector r = y;
    const double h = bandwidth.value_or(default_bandwidth(X.rows(), X.cols(), tau));
    if (!free_cols.empty()) {
        const Matrix XF = select_columns(X, free_cols);
        if (problem == Problem::ls) {
            r = y - XF * least_squares(XF, y);
        } else {
            SolverConfig cfg;
            cfg.smoothing_bandwidth = h;
            const auto rep = sqr_fit(XF, y, QuantileLevel(tau), PenaltySpec{0.0, Vector::Zero(XF.cols())}, cfg);
            r = y - XF * rep.coefficients;
        }
    }
    const Vector g = problem == Problem::ls ? Vector(X.transpose() * r / nd)
                                            : Vector(X.transpose() * detail::smoothed_psi(r, tau, h) / nd);
    double lmax = 0.0;
    for (Index j = 0; j < X.cols(); ++j) {
        if (weights[j] > 0.0) lmax = std::max(lmax, std::abs(g[j]) / weights[j]);
    }
    return lmax;
}

/// Warm-started solutions along a decreasing grid.
inline std::vector<SolveReport> lasso_ls_path(const Matrix& X, const Vector& y, const Vector& weights,
                                              const std::vector<double>& grid, SolverConfig cfg = {}) {
    std::vector<SolveReport> out;
    out.reserve(grid.size());
    for (double lam : grid) {
        out.push_back(lasso_ls_fit(X, y, PenaltySpec{lam, weights}, cfg));
        cfg.warm_start = out.back().coefficients;
    }
    return out;
}

inline std::vector<SolveReport> sqr_path(const Matrix& X, const Vector& y, const QuantileLevel& level,
                                         const Vector& weights, const std::vector<double>& grid, SolverConfig cfg = {}) {
    std::vector<SolveReport> out;
    out.reserve(grid.size());
    if (!cfg.smoothing_bandwidth) cfg.smoothing_bandwidth = default_bandwidth(X.rows(), X.cols(), level.tau());
    for (double lam : grid) {
        out.push_back(sqr_fit(X, y, level, PenaltySpec{lam, weights}, cfg));
        cfg.warm_start = out.back().coefficients;
    }
    return out;
}

} // namespace esreg
