#include <gtest/gtest.h>

#include <cmath>

#include <esreg/harness.hpp>
#include <esreg/report.hpp>

using namespace esreg;

namespace {

ExperimentConfig small_config() {
    ExperimentConfig c;
    c.scenario = SimScenario{150, 20, 3, 0.2, Design::abs_normal_ar08};
    c.scenario.seed = 11;
    c.replications = 4;
    c.methods = {Method::two_step, Method::two_step_refitted, Method::two_step_oracle};
    c.tuning.cv.folds = 5;
    c.tuning.cv.n_lambda = 20;
    return c;
}

} // namespace

TEST(SupportMetrics, HandComputed) {
    Vector truth(6), theta(6);
    truth << 9.0, 2.0, 1.0, 0.0, 0.0, 0.0;
    theta << -4.0, 2.5, 0.0, 0.0, -1.0, 0.0;
    const SupportMetrics m = support_metrics(theta, truth);
    const double norm = std::sqrt(5.0);
    EXPECT_NEAR(m.error_p, std::sqrt(0.25 + 1.0) / norm, 1e-15);
    EXPECT_NEAR(m.error_fp, 1.0 / norm, 1e-15);
    EXPECT_EQ(m.tpr, 0.5);
    EXPECT_NEAR(m.fpr, 1.0 / 3.0, 1e-15);
}

TEST(SupportMetrics, PerfectRecovery) {
    const SimTruth t = make_truth(30, 5, 0.2);
    const SupportMetrics m = support_metrics(t.theta_star, t.theta_star);
    EXPECT_EQ(m.error_p, 0.0);
    EXPECT_EQ(m.error_fp, 0.0);
    EXPECT_EQ(m.tpr, 1.0);
    EXPECT_EQ(m.fpr, 0.0);
}

TEST(Harness, OracleHasNoFalsePositivesAndRowsPerMethod) {
    const ExperimentResult res = run_experiment(small_config());
    EXPECT_EQ(res.failures, 0);
    ASSERT_EQ(res.rows.size(), 3u);
    for (const auto& row : res.rows) {
        EXPECT_EQ(row.replications, 4);
        EXPECT_TRUE(row.has_support);
        EXPECT_TRUE(std::isnan(row.coverage));
        if (row.method == "two_step_oracle") {
            EXPECT_EQ(row.error_fp, 0.0);
            EXPECT_EQ(row.fpr, 0.0);
            EXPECT_EQ(row.tpr, 1.0);
        }
    }
}

TEST(HarnessInvariant, DeterministicAcrossRuns) {
    const ExperimentConfig c = small_config();
    const ExperimentResult a = run_experiment(c);
    const ExperimentResult b = run_experiment(c);
    EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
}

TEST(HarnessInvariant, WorkerCountDoesNotChangeResults) {
    ExperimentConfig c = small_config();
    c.methods.insert(Method::debiased);
    c.scenario.n = 200;
    const ExperimentResult one = run_experiment(c);
    c.workers = 3;
    const ExperimentResult three = run_experiment(c);
    ASSERT_EQ(one.records.size(), three.records.size());
    for (std::size_t r = 0; r < one.records.size(); ++r) {
        EXPECT_EQ(one.records[r].replication, three.records[r].replication);
        ASSERT_EQ(one.records[r].methods.size(), three.records[r].methods.size());
        for (std::size_t k = 0; k < one.records[r].methods.size(); ++k) {
            const auto& x = one.records[r].methods[k];
            const auto& y = three.records[r].methods[k];
            ASSERT_EQ(x.targets.size(), y.targets.size());
            for (std::size_t t = 0; t < x.targets.size(); ++t) {
                EXPECT_EQ(x.targets[t].estimate, y.targets[t].estimate);
                EXPECT_EQ(x.targets[t].ci_lower, y.targets[t].ci_lower);
            }
        }
    }
    std::ostringstream a, b;
    write_metrics_csv(a, one);
    write_metrics_csv(b, three);
    // the first line embeds the configuration, which records the worker count
    EXPECT_EQ(a.str().substr(a.str().find('\n')), b.str().substr(b.str().find('\n')));
}

TEST(HarnessInvariant, ReplicationDependsOnlyOnItsIndex) {
    ExperimentConfig c = small_config();
    const SimTruth t = make_truth(c.scenario);
    const ReplicationRecord direct = run_replication(c, t, 2);
    c.replications = 3;
    const ExperimentResult res = run_experiment(c);
    EXPECT_EQ(res.records[2].methods[0].targets[0].estimate, direct.methods[0].targets[0].estimate);
}

TEST(Harness, FailedReplicationsAreExcludedWithReason) {
    ReplicationRecord ok;
    ok.replication = 0;
    MethodRecord mr;
    mr.method = Method::two_step;
    mr.support = SupportMetrics{0.1, 0.0, 1.0, 0.0};
    mr.targets.push_back(TargetEstimate{2, 1.5, 1.4, {}, {}, {}, {}});
    ok.methods.push_back(mr);
    ReplicationRecord bad;
    bad.replication = 1;
    bad.ok = false;
    bad.failure = "boom";
    bad.methods.push_back(mr);
    bad.methods.back().targets[0].estimate = 100.0;
    ExperimentConfig c = small_config();
    c.methods = {Method::two_step};
    const auto rows = aggregate({ok, bad}, c);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].replications, 1);
    EXPECT_NEAR(rows[0].bias, 0.1, 1e-12);
}

TEST(Harness, TooManyFailuresRaise) {
    ExperimentConfig c = small_config();
    // n = 12 with 10 folds cannot be cross-validated, so every replication fails
    c.scenario.n = 12;
    c.tuning.cv.folds = 10;
    EXPECT_THROW(run_experiment(c), ExperimentError);
}

TEST(Harness, CoverageComputedForIntervals) {
    ReplicationRecord r;
    MethodRecord mr;
    mr.method = Method::debiased;
    mr.targets.push_back(TargetEstimate{2, 1.5, 1.4, 1.3, 1.7, 1.0, 1.0});
    r.methods.push_back(mr);
    ReplicationRecord r2 = r;
    r2.methods[0].targets[0].ci_lower = 1.45;
    ExperimentConfig c = small_config();
    c.methods = {Method::debiased};
    const auto rows = aggregate({r, r2}, c);
    EXPECT_EQ(rows[0].coverage, 0.5);
    EXPECT_FALSE(rows[0].has_support);
}

TEST(Harness, BootstrapWithOneDrawIsOneResampledFit) {
    SimScenario sc{120, 10, 3, 0.2, Design::abs_normal_identity};
    const Dataset ds = simulate_dataset(sc, make_truth(sc), 0);
    const QuantileLevel lv(0.2);
    const CoefVector a = bootstrap_estimator(ds, lv, 0.03, 0.05, 1, 9, false);
    CounterRng rng(9, {0x626f6f74ULL, 0});
    std::vector<Index> rows(120);
    for (auto& r : rows) r = static_cast<Index>(rng() % 120u);
    const TwoStepFit direct = fit_two_step(ds.subset_rows(rows), lv, 0.03, 0.05);
    EXPECT_EQ(a.values, direct.theta_hat.values);
    EXPECT_THROW(bootstrap_estimator(ds, lv, 0.03, 0.05, 0, 9), InputError);
}

TEST(Harness, ConfigValidation) {
    ExperimentConfig c = small_config();
    c.targets = {0};
    EXPECT_THROW(c.validate(), InputError);
    c = small_config();
    c.workers = 0;
    EXPECT_THROW(c.validate(), InputError);
    c = small_config();
    c.methods.clear();
    EXPECT_THROW(c.validate(), InputError);
    EXPECT_THROW(parse_method("magic"), InputError);
}
