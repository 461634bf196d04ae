#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "eocal/risk_models.hpp"

namespace eocal {
namespace {

RCMCovariates nulliparous_premenopausal(double age = 50.0) {
    RCMCovariates c;
    c.age = age;
    c.age_menarche = 13.0;
    return c;
}

TEST(UniformModelTest, Values) {
    EXPECT_DOUBLE_EQ(uniform_risk(100, 10), 0.10);
    EXPECT_DOUBLE_EQ(uniform_risk(100, 5), 0.05);
    EXPECT_EQ(uniform_risk(100, 0), 0.0);
    EXPECT_EQ(uniform_risk(100, 250), 1.0);
    EXPECT_THROW(uniform_risk(0, 1), Error);
    EXPECT_THROW(uniform_risk(10, -1), Error);
    static_assert(RiskModel<UniformModel, int>);
    static_assert(RiskModel<RCMModel, RCMCovariates>);
}

TEST(RCMCoefficientsTest, PublishedDefaults) {
    const RCMCoefficients c;
    EXPECT_EQ(c.alpha, -9.687);
    EXPECT_EQ(c.beta0, 0.048);
    EXPECT_EQ(c.beta1, 0.081);
    EXPECT_EQ(c.beta2, 0.050);
    EXPECT_EQ(c.beta3, 0.013);
    EXPECT_EQ(c.beta4, -0.0036);
    EXPECT_EQ(c.beta5, -0.00020);
}

TEST(RCMLogIncidenceTest, NulliparousPremenopausalHandValue) {
    EXPECT_NEAR(rcm_log_incidence(nulliparous_premenopausal(), RCMCoefficients{}), -6.066, 1e-9);
}

TEST(RCMLogIncidenceTest, AtMenarcheOnlyInterceptAndMenarcheTerm) {
    const RCMCoefficients coef;
    const auto cov = nulliparous_premenopausal(13.0);
    EXPECT_NEAR(rcm_log_incidence(cov, coef), coef.alpha + coef.beta0 * 13.0, 1e-12);
}

TEST(RCMLogIncidenceTest, InterceptOnlyCoefficients) {
    RCMCoefficients coef;
    coef.beta0 = coef.beta1 = coef.beta2 = coef.beta3 = coef.beta4 = coef.beta5 = 0.0;
    RCMCovariates cov = nulliparous_premenopausal();
    cov.birth_ages = {20, 25};
    cov.menopausal = true;
    cov.age = 55;
    cov.age_menopause = 50;
    EXPECT_EQ(rcm_log_incidence(cov, coef), coef.alpha);
}

TEST(RCMLogIncidenceTest, FullFormulaByHand) {
    // Parous postmenopausal woman: a0 = 12, births at 24 and 28,
    // menopause at 50, current age 56.
    RCMCovariates cov;
    cov.age = 56;
    cov.age_menarche = 12;
    cov.menopausal = true;
    cov.age_menopause = 50;
    cov.birth_ages = {24, 28};
    const double a_star = 50;
    const double b = (a_star - 24) + (a_star - 28);  // 48
    const double expected = -9.687 + 0.048 * 12 + 0.081 * (a_star - 12) + 0.050 * (56 - 50) +
                            0.013 * (24 - 12) - 0.0036 * b - 0.00020 * b * (56 - 50);
    EXPECT_NEAR(rcm_log_incidence(cov, RCMCoefficients{}), expected, 1e-12);
    EXPECT_DOUBLE_EQ(birth_index(cov, 56), 48.0);
}

TEST(RCMLogIncidenceTest, MissingMenopauseAgeIsError) {
    RCMCovariates cov = nulliparous_premenopausal();
    cov.menopausal = true;
    EXPECT_THROW(rcm_log_incidence(cov, RCMCoefficients{}), Error);
}

TEST(RCMCovariatesTest, ValidationRejectsInconsistentHistories) {
    RCMCovariates cov = nulliparous_premenopausal();
    cov.birth_ages = {12};
    EXPECT_THROW(validate(cov), Error);  // birth before menarche
    cov.birth_ages = {30, 25};
    EXPECT_THROW(validate(cov), Error);  // not sorted
    cov.birth_ages = {};
    cov.age_menopause = 45;
    EXPECT_THROW(validate(cov), Error);  // premenopausal but past a_m
    cov.menopausal = true;
    EXPECT_NO_THROW(validate(cov));
}

TEST(BirthIndexTest, PiecewiseLinearNondecreasingAndFrozenAfterMenopause) {
    RCMCovariates cov;
    cov.age = 20;
    cov.age_menarche = 13;
    cov.birth_ages = {22, 30};
    cov.age_menopause = 50;
    double prev = -1.0;
    for (double a = 20; a <= 70; a += 0.5) {
        const double b = birth_index(cov, a);
        EXPECT_GE(b, prev);
        prev = b;
        if (a >= 50) {
            EXPECT_DOUBLE_EQ(b, (50 - 22) + (50 - 30));
        }
    }
    EXPECT_DOUBLE_EQ(birth_index(cov, 26), 4.0);
    EXPECT_DOUBLE_EQ(birth_index(cov, 34), 12.0 + 4.0);
    // A birth after a* leaves b unchanged.
    RCMCovariates later = cov;
    later.birth_ages.push_back(40);
    EXPECT_DOUBLE_EQ(birth_index(later, 35), birth_index(cov, 35));
}

TEST(BirthIndexTest, MenopauseFreezesBeta1TermOnly) {
    RCMCovariates cov;
    cov.age = 40;
    cov.age_menarche = 13;
    cov.birth_ages = {25};
    cov.age_menopause = 50;
    RCMCoefficients beta1_only{};
    beta1_only.alpha = beta1_only.beta0 = beta1_only.beta2 = beta1_only.beta3 = beta1_only.beta4 =
        beta1_only.beta5 = 0;
    EXPECT_DOUBLE_EQ(rcm_log_incidence_at(cov, beta1_only, 55), rcm_log_incidence_at(cov, beta1_only, 60));
    RCMCoefficients beta2_only{};
    beta2_only.alpha = beta2_only.beta0 = beta2_only.beta1 = beta2_only.beta3 = beta2_only.beta4 =
        beta2_only.beta5 = 0;
    EXPECT_NEAR(rcm_log_incidence_at(cov, beta2_only, 60) - rcm_log_incidence_at(cov, beta2_only, 55),
                0.050 * 5, 1e-12);
    EXPECT_EQ(rcm_log_incidence_at(cov, beta2_only, 49), 0.0);
}

TEST(TYearRiskTest, RatesCompose) {
    const std::vector<double> zeros(10, 0.0);
    EXPECT_EQ(risk_from_yearly_rates(zeros, 10), 0.0);
    const double r = 0.003;
    const std::vector<double> constant(10, r);
    EXPECT_NEAR(risk_from_yearly_rates(constant, 10), 1 - std::exp(-10 * r), 1e-15);
    EXPECT_NEAR(risk_from_yearly_rates(constant, 2.5), 1 - std::exp(-2.5 * r), 1e-15);
    EXPECT_THROW(risk_from_yearly_rates(constant, 10.5), Error);
}

TEST(TYearRiskTest, TwoYearHandComposition) {
    const double r1 = std::exp(-6.066);
    const double r2 = std::exp(-6.066 + 0.081);
    EXPECT_NEAR(t_year_risk(nulliparous_premenopausal(), RCMCoefficients{}, 2.0), 1 - std::exp(-(r1 + r2)), 1e-12);
}

TEST(TYearRiskTest, ZeroHorizonAndContinuity) {
    const auto cov = nulliparous_premenopausal();
    const RCMCoefficients coef;
    EXPECT_EQ(t_year_risk(cov, coef, 0.0), 0.0);
    EXPECT_NEAR(t_year_risk(cov, coef, 3.0 - 1e-9), t_year_risk(cov, coef, 3.0), 1e-9);
    EXPECT_NEAR(t_year_risk(cov, coef, 3.0 + 1e-9), t_year_risk(cov, coef, 3.0), 1e-9);
}

TEST(TYearRiskTest, MenopauseDuringProjection) {
    RCMCovariates cov = nulliparous_premenopausal(48);
    cov.age_menopause = 50;
    const RCMCoefficients coef;
    const auto rates = rcm_yearly_rates(cov, coef, 5);
    // Ages 48, 49 premenopausal; from 50 on beta1 is frozen and beta2 grows.
    EXPECT_NEAR(std::log(rates[1]) - std::log(rates[0]), coef.beta1, 1e-12);
    EXPECT_NEAR(std::log(rates[3]) - std::log(rates[2]), coef.beta2, 1e-12);
    EXPECT_NEAR(std::log(rates[4]) - std::log(rates[3]), coef.beta2, 1e-12);
}

TEST(TYearRiskTest, MonotoneAndBounded) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        RCMCovariates cov;
        cov.age_menarche = 10 + 6 * u(rng);
        cov.age = cov.age_menarche + 10 + 50 * u(rng);
        const double am = cov.age_menarche + 30 + 25 * u(rng);
        cov.age_menopause = am;
        cov.menopausal = cov.age >= am;
        const int births = trial % 4;
        double a = cov.age_menarche + 1;
        for (int k = 0; k < births; ++k) {
            a += 1 + 5 * u(rng);
            cov.birth_ages.push_back(a);
        }
        double prev = 0.0;
        for (double t = 0.25; t <= 15; t += 0.25) {
            const double r = t_year_risk(cov, RCMCoefficients{}, t);
            EXPECT_GT(r, prev);
            EXPECT_LT(r, 1.0);
            prev = r;
        }
    }
}

TEST(CoefficientFileTest, OverridesAndDefaults) {
    std::istringstream in("# custom set\nalpha = -9.5\nbeta4: -0.004\n\nbeta5 -0.0001  # trailing\n");
    const RCMCoefficients c = parse_rcm_coefficients(in);
    EXPECT_EQ(c.alpha, -9.5);
    EXPECT_EQ(c.beta4, -0.004);
    EXPECT_EQ(c.beta5, -0.0001);
    EXPECT_EQ(c.beta1, 0.081);
}

TEST(CoefficientFileTest, Errors) {
    std::istringstream unknown("alpha -9\ngamma 1\n");
    try {
        parse_rcm_coefficients(unknown);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
    std::istringstream bad("beta1 = fast\n");
    EXPECT_THROW(parse_rcm_coefficients(bad), Error);
}

}  // namespace
}  // namespace eocal
