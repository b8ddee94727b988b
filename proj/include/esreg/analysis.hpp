#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <esreg/core.hpp>
#include <esreg/inference.hpp>
#include <esreg/rcv.hpp>
#include <esreg/tuning.hpp>
#include <esreg/two_step.hpp>

namespace esreg {

/// End-to-end settings for fitting and inference on user data.
struct AnalysisOptions {
    TuningOptions tuning;
    bool standardize = true;
    double alpha = 0.05;
    double null_value = 0.0;  // c0 for the score test, on the original scale
    int sides = 0;            // 0 two-sided, +1 greater, -1 less
    std::uint64_t seed = 1;
};

/// A tuned two-step fit together with the working problem it was computed on. The working problem is
/// the lower-tail, optionally standardized version of the input; beta / theta are reported on the
/// original scale and tail.
struct FittedModel {
    QuantileLevel level{0.5};        // as requested
    QuantileLevel working_level{0.5};
    Dataset working;
    StandardizationInfo info;
    TwoStepFit fit;                   // working coordinates
    std::optional<LambdaPath> path_q;
    std::optional<LambdaPath> path_e;
    CoefVector beta{Vector(), CoefRole::quantile};
    CoefVector theta{Vector(), CoefRole::es};

    bool upper() const { return level.tail() == Tail::upper; }
    double column_scale(Index j) const { return info.applied ? info.scale[j] : 1.0; }

    /// Maps working-scale coefficients back to the caller's scale and tail.
    CoefVector to_original(const CoefVector& c) const {
        CoefVector out = info.applied ? destandardize_coefs(c, info) : c;
        return upper() ? negate_coefs(std::move(out)) : out;
    }
};

inline TuningOptions seeded(TuningOptions t, std::uint64_t seed) {
    t.cv.seed = seed;
    return t;
}

inline FittedModel fit_model(const Dataset& ds, const QuantileLevel& level, const AnalysisOptions& opt) {
    Dataset work = ds;
    QuantileLevel wl = level;
    if (level.tail() == Tail::upper) {
        auto flipped = upper_tail_transform(ds, level);
        work = std::move(flipped.first);
        wl = flipped.second;
    }
    StandardizationInfo info;
    if (opt.standardize) {
        auto st = standardize(work);
        work = std::move(st.first);
        info = std::move(st.second);
    }
    TunedTwoStep tuned = fit_two_step_tuned(work, wl, seeded(opt.tuning, derive_seed(opt.seed, {0x6376})));
    FittedModel m{level, wl, std::move(work), std::move(info), std::move(tuned.fit), std::move(tuned.path_q),
                  std::move(tuned.path_e)};
    m.beta = m.to_original(m.fit.beta_hat);
    m.theta = m.to_original(m.fit.theta_hat);
    return m;
}

/// Projection lasso for column j on the working design, tuned by the configured rule unless fixed.
inline ProjectionFit tuned_projection(const Dataset& ds, const QuantileLevel& level, Index j, const TuningOptions& t,
                                      std::optional<LambdaPath>* path_out = nullptr) {
    if (t.lambda_m) return fit_projection(ds, j, *t.lambda_m, t.solver);
    CvConfig cvm = t.cv;
    cvm.seed = derive_seed(t.cv.seed, {static_cast<std::uint64_t>(Stage::proj)});
    LambdaPath pm = select_lambda(ds, Stage::proj, level, t.rule_m, cvm, t.solver, t.hbic, nullptr, j);
    ProjectionFit proj = make_projection(ds, j, pm.selected_solution(), pm.selected_lambda());
    if (path_out) *path_out = std::move(pm);
    return proj;
}

struct InferenceDetail {
    InferenceResult result;
    ProjectionFit projection;
    RcvEstimate rcv;
    std::uint64_t rcv_seed = 0;
};

/// Debiased estimate, RCV variance, Wald interval and score test for column j, reported on the
/// original scale and tail.
inline InferenceDetail infer_coordinate(const FittedModel& m, Index j, const AnalysisOptions& opt) {
    const Dataset& ds = m.working;
    detail::check_target(ds, j);
    const TuningOptions t = seeded(opt.tuning, derive_seed(opt.seed, {0x6376}));
    InferenceDetail out;
    out.projection = tuned_projection(ds, m.working_level, j, t);
    const double tilde = debias(ds, m.fit, out.projection);

    out.rcv_seed = derive_seed(opt.seed, {0x726376, static_cast<std::uint64_t>(j)});
    out.rcv = rcv_variance(ds, m.working_level, j, t, out.rcv_seed);
    const auto [lo, hi] = wald_ci(tilde, out.rcv.sigma_s2, out.rcv.sigma_omega2, opt.alpha, ds.n(), m.working_level.tau());

    const double scale = m.column_scale(j);
    const double sign = m.upper() ? -1.0 : 1.0;
    const double c0 = sign * opt.null_value * scale;
    const CoefVector theta_c0 =
        constrained_es_fit(ds, m.working_level, m.fit.beta_hat.values, j, c0, m.fit.lambda_e, t.solver);
    const ScoreTest st = score_test(ds, m.working_level, j, m.fit.beta_hat.values, theta_c0.values, out.projection,
                                    out.rcv.sigma_s2, opt.alpha, static_cast<int>(sign) * opt.sides);

    InferenceResult& r = out.result;
    r.j = j;
    r.name = ds.column_names()[static_cast<std::size_t>(j)];
    r.alpha = opt.alpha;
    r.null_value = opt.null_value;
    r.theta_hat = m.theta[j];
    r.theta_tilde = sign * tilde / scale;
    auto ci = std::pair{lo / scale, hi / scale};
    if (m.upper()) ci = flip_interval(ci.first, ci.second);
    r.ci_lower = ci.first;
    r.ci_upper = ci.second;
    r.sigma_s2 = out.rcv.sigma_s2 * scale * scale;
    r.sigma_omega2 = out.rcv.sigma_omega2 * scale * scale;
    r.score_value = sign * st.score * scale;
    r.test_stat = sign * st.stat;
    r.p_value = st.p_value;
    r.reject = st.reject;
    return out;
}

} // namespace esreg
