#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>

#include <esreg/core.hpp>
#include <esreg/errors.hpp>
#include <esreg/normal.hpp>
#include <esreg/rng.hpp>

namespace esreg {

enum class Design { abs_normal_identity, abs_normal_ar08, uniform_0_1p5 };
enum class NoiseModel { heteroscedastic, homogeneous };

inline const char* to_string(Design d) {
    switch (d) {
    case Design::abs_normal_identity: return "abs_normal_identity";
    case Design::abs_normal_ar08: return "abs_normal_ar08";
    case Design::uniform_0_1p5: return "uniform_0_1p5";
    }
    return "?";
}

inline const char* to_string(NoiseModel m) { return m == NoiseModel::heteroscedastic ? "heteroscedastic" : "homogeneous"; }

inline Design parse_design(const std::string& s) {
    if (s == "abs_normal_identity" || s == "identity") return Design::abs_normal_identity;
    if (s == "abs_normal_ar08" || s == "ar08") return Design::abs_normal_ar08;
    if (s == "uniform_0_1p5" || s == "uniform") return Design::uniform_0_1p5;
    throw InputError("unknown design '" + s + "'");
}

inline NoiseModel parse_noise_model(const std::string& s) {
    if (s == "heteroscedastic") return NoiseModel::heteroscedastic;
    if (s == "homogeneous") return NoiseModel::homogeneous;
    throw InputError("unknown model '" + s + "'");
}

/// A simulation design. p counts covariates; generated designs carry an extra leading intercept column.
struct SimScenario {
    Index n = 0;
    Index p = 0;
    Index s = 0;
    double tau = 0.2;
    Design design = Design::abs_normal_identity;
    NoiseModel model = NoiseModel::heteroscedastic;
    double signal_scale = 1.0;
    std::uint64_t seed = 1;
    bool standardize = true;

    void validate() const {
        if (n < 2) throw InputError("scenario n must be >= 2");
        if (p < 1) throw InputError("scenario p must be >= 1");
        if (s < 0 || s > p) throw InputError("scenario needs 0 <= s <= p");
        QuantileLevel check(tau);
        (void)check;
        if (!(signal_scale > 0.0)) throw InputError("signal_scale must be positive");
    }
};

/// Ground truth; every vector has length p + 1 with the intercept at index 0.
struct SimTruth {
    Vector zeta_star;
    Vector eta_star;
    Vector beta_star;
    Vector theta_star;
    double q_tau = 0.0;  // Phi^{-1}(tau)
    double s_tau = 0.0;  // lower tau-ES of N(0,1)
    Index s = 0;
};

inline SimTruth make_truth(Index p, Index s, double tau, double c = 1.0, NoiseModel model = NoiseModel::heteroscedastic) {
    if (s > p || s < 0) throw InputError("make_truth requires 0 <= s <= p");
    SimTruth t;
    t.s = s;
    t.q_tau = normal_quantile(tau);
    t.s_tau = normal_tail_es(tau);
    t.zeta_star = Vector::Zero(p + 1);
    t.eta_star = Vector::Zero(p + 1);
    const Index half = (s + 1) / 2;
    for (Index j = 1; j <= s; ++j) t.zeta_star[j] = c * (j <= half ? 2.0 : 1.0);
    if (model == NoiseModel::heteroscedastic) {
        for (Index j = 1; j <= half; ++j) t.eta_star[j] = 1.0 / 3.0;
        t.beta_star = t.zeta_star + t.eta_star * t.q_tau;
        t.theta_star = t.zeta_star + t.eta_star * t.s_tau;
    } else {
        // y = X'zeta + eps with eps ~ N(0,1): the tail shift lands on the intercept
        t.beta_star = t.zeta_star;
        t.theta_star = t.zeta_star;
        t.beta_star[0] += t.q_tau;
        t.theta_star[0] += t.s_tau;
    }
    return t;
}

/// n x (p+1) design with a leading column of ones.
inline Matrix gen_design(Index n, Index p, Design design, std::uint64_t seed) {
    CounterRng rng(seed, {0x64657369676eULL});
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.5);
    Matrix X(n, p + 1);
    X.col(0).setOnes();
    constexpr double rho = 0.8;
    const double innov = std::sqrt(1.0 - rho * rho);
    for (Index i = 0; i < n; ++i) {
        double z_prev = 0.0;
        for (Index j = 1; j <= p; ++j) {
            switch (design) {
            case Design::abs_normal_identity: X(i, j) = std::abs(normal(rng)); break;
            case Design::abs_normal_ar08: {
                // z = L e with L the Cholesky factor of 0.8^{|j-k|}, applied by its recursion
                const double e = normal(rng);
                const double z = j == 1 ? e : rho * z_prev + innov * e;
                z_prev = z;
                X(i, j) = std::abs(z);
                break;
            }
            case Design::uniform_0_1p5: X(i, j) = unif(rng); break;
            }
        }
    }
    return X;
}

inline Vector gen_response(const Matrix& X, const SimTruth& truth, NoiseModel model, std::uint64_t seed) {
    if (X.cols() != truth.zeta_star.size()) throw InputError("design width does not match truth");
    CounterRng rng(seed, {0x726573706f6e7365ULL});
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector y(X.rows());
    for (Index i = 0; i < X.rows(); ++i) {
        const double loc = X.row(i).dot(truth.zeta_star);
        const double xi = normal(rng);
        if (model == NoiseModel::heteroscedastic) {
            const double scale = X.row(i).dot(truth.eta_star);
            if (!(scale > 0.0) && truth.eta_star.cwiseAbs().sum() > 0.0) {
                throw InputError("nonpositive heteroscedastic scale x'eta at row " + std::to_string(i));
            }
            y[i] = loc + scale * xi;
        } else {
            y[i] = loc + xi;
        }
    }
    return y;
}

/// Dataset for one replication; design and noise use independent sub-streams of (seed, replication).
inline Dataset simulate_dataset(const SimScenario& sc, const SimTruth& truth, std::uint64_t replication) {
    sc.validate();
    const Matrix X = gen_design(sc.n, sc.p, sc.design, derive_seed(sc.seed, {replication, 1}));
    Vector y = gen_response(X, truth, sc.model, derive_seed(sc.seed, {replication, 2}));
    return Dataset(std::move(y), X, true);
}

inline SimTruth make_truth(const SimScenario& sc) { return make_truth(sc.p, sc.s, sc.tau, sc.signal_scale, sc.model); }

/// Population second-moment matrix E(X X') of the design including the intercept, in closed form
/// (folded-normal moments; E|Z1 Z2| = (2/pi)(sqrt(1-r^2) + r asin r)).
inline Matrix design_second_moment(Index p, Design design) {
    Matrix S(p + 1, p + 1);
    const double m1 = design == Design::uniform_0_1p5 ? 0.75 : std::sqrt(2.0 / std::numbers::pi);
    const double m2 = design == Design::uniform_0_1p5 ? 0.75 : 1.0;  // E U^2 = 1.5^2/3
    S(0, 0) = 1.0;
    for (Index j = 1; j <= p; ++j) {
        S(0, j) = S(j, 0) = m1;
        S(j, j) = m2;
        for (Index k = j + 1; k <= p; ++k) {
            double v = m1 * m1;
            if (design == Design::abs_normal_ar08) {
                const double r = std::pow(0.8, static_cast<double>(k - j));
                v = 2.0 / std::numbers::pi * (std::sqrt(1.0 - r * r) + r * std::asin(r));
            }
            S(j, k) = S(k, j) = v;
        }
    }
    return S;
}

/// Population projection coefficients gamma* = Sigma_{-j}^{-1} E(X_j X_{-j}) (length p, intercept first).
inline Vector projection_truth(Index p, Design design, Index j) {
    if (j < 1 || j > p) throw InputError("projection target must be a covariate column");
    const Matrix S = design_second_moment(p, design);
    Matrix Sm(p, p);
    Vector c(p);
    for (Index a = 0, ia = 0; a <= p; ++a) {
        if (a == j) continue;
        c[ia] = S(a, j);
        for (Index b = 0, ib = 0; b <= p; ++b) {
            if (b == j) continue;
            Sm(ia, ib++) = S(a, b);
        }
        ++ia;
    }
    return Sm.ldlt().solve(c);
}

} // namespace esreg
