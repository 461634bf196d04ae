#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "eocal/calibration.hpp"
#include "oracles.hpp"

namespace eocal {
namespace {

auto percent_model() { return bind_uniform(100.0); }  // e(t) = t / 100

TEST(ExpectedSumsTest, WorkedExample) {
    const Cohort c(testing::worked_example_subjects(), 5.0);
    const ExpectedSums s = expected_sums(c, classify_subjects(c), percent_model());
    EXPECT_NEAR(s.e_m1, 490.0, 1e-9);
    EXPECT_NEAR(s.e_full, 500.0, 1e-9);
    EXPECT_NEAR(s.e_m2, 500.0, 1e-9);
    EXPECT_EQ(s.e_uks, 0.0);
}

TEST(ExpectedSumsTest, NoCensoringNoEarlyCases) {
    const Cohort c({{12, 0}, {15, 1}, {11, 0}}, 10);
    const ExpectedSums s = expected_sums(c, classify_subjects(c), percent_model());
    EXPECT_EQ(s.e_m1, s.e_full);
    EXPECT_EQ(s.e_m2, s.e_full);
}

TEST(ExpectedSumsTest, TwoSubjectHandValues) {
    const Cohort c({{3, 1}, {12, 0}}, 10);
    const ExpectedSums s = expected_sums(c, classify_subjects(c), percent_model());
    EXPECT_NEAR(s.e_m1, 0.13, 1e-15);
    EXPECT_NEAR(s.e_m2, 0.20, 1e-15);
}

TEST(ExpectedSumsTest, RiskFailureNamesSubject) {
    const Cohort c({{3, 1}, {12, 0}}, 10);
    auto bad = [](std::size_t i, double t) { return i == 1 ? 1.5 : t / 100.0; };
    try {
        expected_sums(c, classify_subjects(c), bad);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("subject 1"), std::string::npos);
    }
}

TEST(ExpectedSumsTest, OrderingAndSplit) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const Cohort c(testing::random_subjects(rng, 500, 60.0, 40.0), 10.0);
        const ExpectedSums s = expected_sums(c, classify_subjects(c), bind_uniform(60.0));
        EXPECT_NEAR(s.e_ks + s.e_uks, s.e_full, 1e-9 * s.e_full);
        EXPECT_LE(s.e_m1, s.e_m2);
        EXPECT_LE(s.e_m2, s.e_full);
    }
}

TEST(EstimatorTest, PoissonRatios) {
    EXPECT_DOUBLE_EQ(estimate_m0(500, 500).point, 1.0);
    EXPECT_DOUBLE_EQ(estimate_m0(450, 500).point, 0.9);
    EXPECT_DOUBLE_EQ(estimate_m1(490, 500).point, 0.98);
    EXPECT_DOUBLE_EQ(estimate_m2(500, 500).point, 1.0);
    const EORatioEstimate e = estimate_m2(500, 500);
    EXPECT_EQ(e.method, Method::m2);
    EXPECT_EQ(e.numerator, 500.0);
    EXPECT_EQ(e.denominator, 500.0);
}

TEST(EstimatorTest, ZeroCasesIsNoEventsError) {
    for (auto f : {estimate_m0, estimate_m1, estimate_m2}) {
        try {
            f(10.0, 0);
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::no_events);
        }
    }
    KMEstimate km;
    km.incidence = 0.0;
    EXPECT_THROW(estimate_m3(10.0, km, 100), Error);
    EXPECT_THROW(ci_delta_km(1.0, km), Error);
    EXPECT_THROW(ci_poisson(1.0, 0), Error);
    EXPECT_THROW(correction_c0_tilde(0.1, 0.0), Error);
}

TEST(EstimatorTest, M3FromIncidence) {
    KMEstimate km;
    km.incidence = 0.01;
    km.survival = 0.99;
    km.greenwood_var = 1e-7;
    EXPECT_NEAR(estimate_m3(200.0, km, 20000).point, 1.0, 1e-12);
}

TEST(ConfidenceIntervalTest, PoissonWidth) {
    const ConfidenceInterval ci = ci_poisson(1.0, 2000);
    EXPECT_NEAR(ci.high - ci.low, 0.0877, 1e-4);
    EXPECT_NEAR(ci.high - ci.low, 0.088, 0.0005);  // published mean width for 2,000 cases
}

TEST(ConfidenceIntervalTest, PoissonBounds) {
    const ConfidenceInterval ci = ci_poisson(1.0, 500);
    EXPECT_NEAR(ci.low, std::exp(-1.96 / std::sqrt(500.0)), 1e-15);
    EXPECT_NEAR(ci.high, std::exp(1.96 / std::sqrt(500.0)), 1e-15);
    EXPECT_NEAR(ci.low, 0.9160, 1e-4);
    EXPECT_NEAR(ci.high, 1.0917, 1e-4);
    const ConfidenceInterval half = ci_poisson(0.5, 500);
    EXPECT_NEAR(half.low, 0.5 * ci.low, 1e-15);
    EXPECT_NEAR(half.high, 0.5 * ci.high, 1e-15);
}

TEST(ConfidenceIntervalTest, DeltaMethodBinomialCase) {
    KMEstimate km;
    km.incidence = 0.1;
    km.survival = 0.9;
    km.greenwood_var = 0.1 * 0.9 / 20000.0;
    const ConfidenceInterval ci = ci_delta_km(1.0, km);
    EXPECT_NEAR(std::sqrt(km.greenwood_var) / km.incidence, 0.0212, 1e-4);
    EXPECT_NEAR(ci.high - ci.low, 0.0832, 1e-4);
    EXPECT_NEAR(ci.high - ci.low, 0.083, 0.0005);
}

TEST(ConfidenceIntervalTest, DeltaMethodZeroVarianceCollapses) {
    KMEstimate km;
    km.incidence = 0.2;
    km.greenwood_var = 0.0;
    const ConfidenceInterval ci = ci_delta_km(1.3, km);
    EXPECT_EQ(ci.low, 1.3);
    EXPECT_EQ(ci.high, 1.3);
}

TEST(ConfidenceIntervalTest, DeltaMethodHandCohort) {
    const Cohort c({{1, 1}, {2, 0}, {3, 1}, {4, 0}, {5, 1}}, 4);
    const KMEstimate km = kaplan_meier(c, 4);
    const double sigma = std::sqrt((64.0 / 225.0) * (13.0 / 60.0));
    const double half = 1.96 * sigma / (7.0 / 15.0);
    const ConfidenceInterval ci = ci_delta_km(1.0, km);
    EXPECT_NEAR(ci.low, std::exp(-half), 1e-12);
    EXPECT_NEAR(ci.high, std::exp(half), 1e-12);
    EXPECT_NEAR(ci.low, 0.352515, 1e-6);
    EXPECT_NEAR(ci.high, 2.836762, 1e-6);
}

TEST(ConfidenceIntervalTest, DegenerateGreenwoodIsFlagged) {
    const Cohort c({{1, 1}}, 1);
    const KMEstimate km = kaplan_meier(c, 1);
    const EORatioEstimate e = estimate_m3(0.4, km, 1);
    EXPECT_TRUE(e.ci_degenerate);
    EXPECT_EQ(e.ci_low, e.point);
    EXPECT_EQ(e.ci_high, e.point);
}

TEST(CorrectionTest, C0AndC1) {
    EXPECT_DOUBLE_EQ(correction_c0_tilde(0.1, 0.1), 1.0);
    EXPECT_NEAR(correction_c1(estimate_m2(500, 500), estimate_m1(490, 500)), 1.0204, 1e-4);
    EXPECT_DOUBLE_EQ(correction_c1(estimate_m2(400, 500), estimate_m1(400, 500)), 1.0);
}

TEST(EvaluateTest, WorkedExample) {
    const Cohort c(testing::worked_example_subjects(), 5.0);
    const CalibrationReport r = evaluate(c, percent_model());
    EXPECT_NEAR(r.estimate(Method::m1).point, 0.98, 1e-12);
    EXPECT_NEAR(r.estimate(Method::m0).point, 1.0, 1e-12);
    EXPECT_NEAR(r.estimate(Method::m2).point, 1.0, 1e-12);
    EXPECT_NEAR(r.estimate(Method::m3).point, 1.0, 1e-12);
    EXPECT_EQ(r.n_uks, 0u);
    EXPECT_EQ(r.observed.o_ks, 500u);
    EXPECT_NEAR(r.c0_tilde, 1.0, 1e-12);
    EXPECT_NEAR(r.c1, 1.0 / 0.98, 1e-12);
}

TEST(EvaluateTest, SingleCaseAtHorizon) {
    const Cohort c({{1, 1}}, 1);
    const CalibrationReport r = evaluate(c, bind_uniform(5.0));
    for (Method m : {Method::m0, Method::m2, Method::m3}) {
        EXPECT_NEAR(r.estimate(m).point, 0.2, 1e-15) << to_string(m);
    }
    EXPECT_TRUE(std::isfinite(r.estimate(Method::m1).point));
}

TEST(EvaluateTest, ZeroEventsIsStructuredError) {
    const Cohort c({{3, 0}, {12, 0}, {14, 1}}, 10);
    try {
        evaluate(c, percent_model());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::no_events);
    }
}

TEST(EvaluateTest, RecomputationIsIdempotent) {
    std::mt19937_64 rng(17);
    const Cohort c(testing::random_subjects(rng, 3000, 100.0, 95.0), 10.0);
    const CalibrationReport a = evaluate(c, percent_model());
    const CalibrationReport b = evaluate(c, percent_model());
    for (Method m : all_methods) {
        EXPECT_EQ(a.estimate(m).point, b.estimate(m).point);
        EXPECT_EQ(a.estimate(m).ci_low, b.estimate(m).ci_low);
    }
    EXPECT_EQ(a.c0_tilde, b.c0_tilde);
    EXPECT_EQ(a.n_ks + a.n_uks, a.n);
}

TEST(EvaluatePropertyTest, RandomCohortInvariants) {
    std::mt19937_64 rng(123);
    std::uniform_real_distribution<double> lam(30.0, 400.0);
    std::uniform_real_distribution<double> om(12.0, 300.0);
    for (int trial = 0; trial < 300; ++trial) {
        const double lambda = lam(rng);
        const bool censored = trial % 3 != 0;
        auto subjects = testing::random_subjects(rng, 2000, lambda, censored ? om(rng) : 0.0);
        const Cohort c(std::move(subjects), 10.0);
        const CalibrationReport r = evaluate(c, bind_uniform(lambda));
        const auto& r0 = r.estimate(Method::m0);
        const auto& r1 = r.estimate(Method::m1);
        const auto& r2 = r.estimate(Method::m2);
        const auto& r3 = r.estimate(Method::m3);
        EXPECT_LE(r1.point, r2.point);
        EXPECT_GE(r.c1, 1.0);
        for (const auto& e : r.estimates) {
            EXPECT_LE(e.ci_low, e.point);
            EXPECT_LE(e.point, e.ci_high);
            EXPECT_GT(e.ci_low, 0.0);
        }
        if (!censored) {
            EXPECT_EQ(r0.point, r2.point);
            EXPECT_NEAR(r3.point, r0.point, 1e-12 * r0.point);
            EXPECT_NEAR(r.c0_tilde, 1.0, 1e-12);
        }
    }
}

TEST(EvaluatePropertyTest, IntervalWidthShrinksAsRootN) {
    // Quadrupling the number of cases halves the log-scale half width.
    const double w1 = std::log(ci_poisson(1.0, 400).high);
    const double w4 = std::log(ci_poisson(1.0, 1600).high);
    EXPECT_NEAR(w4 / w1, 0.5, 1e-12);

    std::mt19937_64 rng(8);
    const Cohort small(testing::random_subjects(rng, 5000, 100.0, 95.0), 10.0);
    const Cohort large(testing::random_subjects(rng, 20000, 100.0, 95.0), 10.0);
    const double ws = evaluate(small, percent_model()).estimate(Method::m3).width();
    const double wl = evaluate(large, percent_model()).estimate(Method::m3).width();
    EXPECT_NEAR(wl / ws, 0.5, 0.05);
}

TEST(GroupedTest, RejectsMixedHorizonEstimators) {
    const Cohort c({{3, 1}, {12, 0}}, 10);
    const std::vector<Method> with_m2{Method::m0, Method::m2};
    const std::vector<Method> with_m1{Method::m1};
    EXPECT_THROW(evaluate_grouped(c, percent_model(), with_m2), Error);
    EXPECT_THROW(evaluate_grouped(c, percent_model(), with_m1), Error);
}

TEST(GroupedTest, DecilesOfPredictedRisk) {
    std::mt19937_64 rng(21);
    std::vector<Subject> subjects = testing::random_subjects(rng, 10000, 100.0, 190.0);
    std::vector<double> scale(subjects.size());
    std::uniform_real_distribution<double> u(0.5, 1.5);
    for (double& s : scale) s = u(rng);
    auto risk = [&scale](std::size_t i, double t) { return std::min(1.0, scale[i] * t / 100.0); };
    const Cohort c(std::move(subjects), 10.0);
    const std::vector<Method> methods{Method::m0, Method::m3};
    const auto groups = evaluate_grouped(c, risk, methods);
    ASSERT_EQ(groups.size(), 10u);
    std::size_t total = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        total += groups[g].n;
        EXPECT_EQ(groups[g].n, 1000u);
        EXPECT_TRUE(groups[g].m0.has_value());
        EXPECT_TRUE(groups[g].m3.has_value()) << groups[g].note;
        if (g > 0) {
            EXPECT_GE(groups[g].risk_low, groups[g - 1].risk_high);
        }
    }
    EXPECT_EQ(total, 10000u);
}

TEST(GroupedTest, UndefinedGroupKeepsNote) {
    // Group 1 (lowest risk) has no cases by t0 and nobody followed to t0.
    const Cohort c({{3, 0}, {12, 1}, {2, 1}, {15, 0}}, 10);
    std::vector<double> score{0.01, 0.02, 0.5, 0.6};
    auto risk = [&score](std::size_t i, double t) { return std::min(1.0, score[i] * t / 10.0); };
    const std::vector<Method> methods{Method::m0, Method::m3};
    const auto groups = evaluate_grouped(c, risk, methods, 2);
    ASSERT_EQ(groups.size(), 2u);
    EXPECT_FALSE(groups[0].m0.has_value());
    EXPECT_FALSE(groups[0].note.empty());
    EXPECT_TRUE(groups[1].m0.has_value());
    EXPECT_TRUE(groups[1].m3.has_value());
}

}  // namespace
}  // namespace eocal
