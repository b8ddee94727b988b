#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <esreg/normal.hpp>
#include <esreg/rcv.hpp>
#include <esreg/rng.hpp>
#include <esreg/simgen.hpp>

using namespace esreg;

namespace {

// var(min(eps - q, 0)) for standard normal eps, by quadrature over (-inf, q]
double lower_part_variance(double tau) {
    const double q = normal_quantile(tau);
    using boost::math::quadrature::gauss_kronrod;
    const double inf = std::numeric_limits<double>::infinity();
    const double m1 = gauss_kronrod<double, 61>::integrate([&](double u) { return (u - q) * normal_pdf(u); }, -inf, q);
    const double m2 =
        gauss_kronrod<double, 61>::integrate([&](double u) { return (u - q) * (u - q) * normal_pdf(u); }, -inf, q);
    return m2 - m1 * m1;
}

// intercept, target column (standard normal), one independent nuisance column; y = scale * eps
Dataset independent_pieces(Index n, double scale, std::uint64_t seed) {
    CounterRng rng(seed);
    std::normal_distribution<double> nd;
    Matrix X(n, 3);
    Vector y(n);
    for (Index i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        X(i, 1) = nd(rng);
        X(i, 2) = nd(rng);
        y[i] = scale * nd(rng);
    }
    return Dataset(y, X, true);
}

Dataset sim(Index n, Index p, Index s, double tau, std::uint64_t seed) {
    SimScenario sc{n, p, s, tau, Design::abs_normal_ar08};
    sc.seed = seed;
    return simulate_dataset(sc, make_truth(sc), 0);
}

} // namespace

TEST(RcvSplit, SizesCoverAndDeterminism) {
    const auto [a, b] = rcv_split(5, 1);
    EXPECT_EQ(a.size(), 3u);
    EXPECT_EQ(b.size(), 2u);
    for (Index n : {4, 7, 100, 1001}) {
        const auto [s1, s2] = rcv_split(n, 42);
        EXPECT_LE(static_cast<Index>(s1.size()) - static_cast<Index>(s2.size()), 1);
        std::set<Index> all(s1.begin(), s1.end());
        all.insert(s2.begin(), s2.end());
        EXPECT_EQ(static_cast<Index>(all.size()), n);
        EXPECT_EQ(*all.begin(), 0);
        EXPECT_EQ(*all.rbegin(), n - 1);
        EXPECT_EQ(rcv_split(n, 42).first, s1);
    }
    EXPECT_NE(rcv_split(100, 1).first, rcv_split(100, 2).first);
    EXPECT_THROW(rcv_split(3, 0), InputError);
}

TEST(RcvSymmetryInvariant, SwappingHalvesLeavesEstimateUnchanged) {
    const Dataset ds = sim(300, 30, 3, 0.2, 1);
    TuningOptions opt;
    opt.cv.folds = 5;
    const auto [s1, s2] = rcv_split(ds.n(), 9);
    const RcvEstimate a = rcv_variance(ds, QuantileLevel(0.2), 2, opt, s1, s2);
    const RcvEstimate b = rcv_variance(ds, QuantileLevel(0.2), 2, opt, s2, s1);
    EXPECT_EQ(a.sigma_s2, b.sigma_s2);
    EXPECT_EQ(a.sigma_omega2, b.sigma_omega2);
    EXPECT_EQ(a.half_estimates[0], b.half_estimates[1]);
    EXPECT_EQ(a.half_estimates[2], b.half_estimates[3]);
    EXPECT_DOUBLE_EQ(a.sigma_s2, 0.5 * (a.half_estimates[0] + a.half_estimates[1]));
}

TEST(Rcv, DeterministicGivenSeed) {
    const Dataset ds = sim(200, 20, 3, 0.2, 2);
    TuningOptions opt;
    opt.cv.folds = 5;
    const RcvEstimate a = rcv_variance(ds, QuantileLevel(0.2), 3, opt, 17);
    const RcvEstimate b = rcv_variance(ds, QuantileLevel(0.2), 3, opt, 17);
    EXPECT_EQ(a.sigma_s2, b.sigma_s2);
    EXPECT_EQ(a.sigma_omega2, b.sigma_omega2);
    EXPECT_EQ(a.split_seed, 17u);
    EXPECT_EQ(a.split_sizes[0] + a.split_sizes[1], 200);
}

TEST(Rcv, IndependentUnitPiecesGiveUnitVariances) {
    const double tau = 0.2;
    const double v = lower_part_variance(tau);
    const double scale = 1.0 / std::sqrt(v);
    const Index n = 20000;
    const Dataset ds = independent_pieces(n, scale, 3);
    TuningOptions opt;
    const RcvEstimate est = rcv_variance(ds, QuantileLevel(tau), 1, opt, 5);
    // plug-in with the true quantile, tail mean and projection on the same sample
    const double q = normal_quantile(tau) * scale;
    const double es = normal_tail_es(tau) * scale;
    Vector prod(n);
    for (Index i = 0; i < n; ++i) {
        const double e = std::min(ds.y()[i] - q, 0.0) + tau * q - tau * es;
        prod[i] = ds.X()(i, 1) * ds.X()(i, 1) * e * e;
    }
    const double oracle = prod.mean();
    const double mc_se = std::sqrt((prod.array() - oracle).square().sum() / (n - 1.0) / n);
    EXPECT_NEAR(est.sigma_s2, oracle, 0.05 * oracle);
    EXPECT_NEAR(est.sigma_s2, 1.0, 4 * mc_se + 0.05);
    EXPECT_NEAR(est.sigma_omega2, 1.0, 0.05);
}

TEST(Rcv, GaussianLowerPartVarianceByQuadrature) {
    const double tau = 0.1;
    const Dataset ds = independent_pieces(20000, 1.0, 4);
    TuningOptions opt;
    const RcvEstimate est = rcv_variance(ds, QuantileLevel(tau), 1, opt, 6);
    // with omega independent of the tail residual, sigma_s^2 = E(omega^2) var(min(eps - q, 0))
    EXPECT_NEAR(est.sigma_s2 / est.sigma_omega2, lower_part_variance(tau), 0.05 * lower_part_variance(tau));
}

TEST(Rcv, SupportSizesExcludeInterceptAndDenominatorsPositive) {
    const Dataset ds = sim(400, 40, 4, 0.2, 7);
    TuningOptions opt;
    opt.cv.folds = 5;
    const RcvEstimate est = rcv_variance(ds, QuantileLevel(0.2), 2, opt, 8);
    for (int h = 0; h < 2; ++h) {
        const Index other = est.split_sizes[1 - h];
        const auto& s = est.support_sizes[static_cast<std::size_t>(h)];
        EXPECT_GT(other - s[0] - s[1] - s[2], 0);
        EXPECT_LE(s[0], 40);
    }
    EXPECT_GT(est.sigma_s2, 0.0);
    EXPECT_GT(est.sigma_omega2, 0.0);
}

TEST(Rcv, OversizedSupportIsDegenerate) {
    const Dataset ds = sim(16, 40, 4, 0.2, 8);
    TuningOptions opt;
    opt.lambda_q = 1e-4;
    opt.lambda_e = 1e-4;
    opt.lambda_m = 1e-4;
    try {
        rcv_variance(ds, QuantileLevel(0.2), 2, opt, 1);
        FAIL() << "expected DegenerateError";
    } catch (const DegenerateError& e) {
        EXPECT_NE(std::string(e.what()).find("larger sample"), std::string::npos);
    }
}

TEST(NaiveVariance, NonnegativeAndCloseToRcvInLowDimensions) {
    const Dataset ds = independent_pieces(10000, 1.0, 9);
    const QuantileLevel lv(0.2);
    TuningOptions opt;
    const TunedTwoStep fit = fit_two_step_tuned(ds, lv, opt);
    const ProjectionFit pf = fit_projection(ds, 1, 0.0);
    const auto [ns, nw] = naive_variance(fit.fit, pf);
    EXPECT_GE(ns, 0.0);
    EXPECT_GE(nw, 0.0);
    const RcvEstimate est = rcv_variance(ds, lv, 1, opt, 10);
    EXPECT_NEAR(ns / est.sigma_s2, 1.0, 0.1);
    EXPECT_NEAR(nw / est.sigma_omega2, 1.0, 0.1);
}
