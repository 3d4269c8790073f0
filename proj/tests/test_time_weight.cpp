#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace twcrl;

// Reference values below were evaluated with 50-digit arithmetic directly from
// f = (e^{at} - 1) / (e^{aT} - 1) and w = 1 - (1 - f)^t.

TEST(TransitionProb, Endpoints) {
    for (double a : {0.1, 2.0, 7.0}) {
        const TimeWeightParams p{a, 300};
        EXPECT_EQ(transition_prob_f(0, p), 0.0);
        EXPECT_EQ(transition_prob_f(300, p), 1.0);
    }
}

TEST(TransitionProb, StableNearHorizon) {
    EXPECT_NEAR(transition_prob_f(299, {2.0, 300}), 0.13533528323661269189, 1e-12);
}

TEST(TransitionProb, OutOfRange) {
    EXPECT_THROW(transition_prob_f(301, {2.0, 300}), OutOfRange);
    EXPECT_THROW(time_weight_w(11, {2.0, 10}), OutOfRange);
}

TEST(TransitionProb, InvalidParams) {
    EXPECT_THROW(transition_prob_f(1, {0.0, 10}), ValidationError);
    EXPECT_THROW(transition_prob_f(0, {1.0, 0}), InvalidHorizon);
}

TEST(TransitionProb, NoOverflowUpToLargeAlphaT) {
    const TimeWeightParams p{2.0, 1000};
    for (std::size_t t = 0; t <= 1000; ++t) EXPECT_TRUE(std::isfinite(transition_prob_f(t, p)));
}

TEST(TimeWeight, ShortHorizonValues) {
    const TimeWeightParams p{2.0, 10};
    const double expected[] = {0.00022696873478295835791, 0.0020110761525804043546, 0.017222754327617996637,
                               0.13746845610876315588, 0.72983465060735931811};
    for (std::size_t t = 5; t <= 9; ++t) {
        EXPECT_NEAR(time_weight_w(t, p), expected[t - 5], 1e-13 + 1e-12 * expected[t - 5]) << "t=" << t;
        EXPECT_LT(time_weight_w(t - 1, p), time_weight_w(t, p));
    }
    EXPECT_EQ(time_weight_w(10, p), 1.0);
}

TEST(TimeWeight, BoundaryExactAndMonotone) {
    for (double a : {0.1, 1.0, 2.0})
        for (std::size_t T : {50u, 300u, 1000u}) {
            const TimeWeightParams p{a, T};
            EXPECT_EQ(time_weight_w(0, p), 0.0);
            EXPECT_EQ(time_weight_w(T, p), 1.0);
            double prev = 0.0;
            for (std::size_t t = 0; t <= T; ++t) {
                const double w = time_weight_w(t, p);
                ASSERT_TRUE(std::isfinite(w));
                ASSERT_GE(w, prev) << "alpha " << a << " T " << T << " t " << t;
                ASSERT_LE(w, 1.0);
                prev = w;
            }
        }
}

TEST(TimeWeight, DecreasesWithAlpha) {
    const double expected[] = {0.32594843931474320124, 0.033019300079889960858, 0.00022696873478295835791,
                               6.9439719321926978201e-11};
    const double alphas[] = {0.5, 1.0, 2.0, 5.0};
    for (int i = 0; i < 4; ++i) {
        const double w = time_weight_w(5, {alphas[i], 10});
        EXPECT_NEAR(w, expected[i], 1e-12 * expected[i]);
        if (i > 0) {
            EXPECT_LT(w, time_weight_w(5, {alphas[i - 1], 10}));
        }
    }
}

TEST(ExactConditional, Endpoints) {
    const TimeWeightParams p{2.0, 300};
    EXPECT_EQ(exact_conditional(0, p), 0.0);
    EXPECT_EQ(exact_conditional(300, p), 1.0);
}

TEST(ExactConditional, TailAgreesWithApproximation) {
    for (double a : {0.1, 1.0, 2.0})
        for (std::size_t T : {50u, 300u, 1000u}) {
            const TimeWeightParams p{a, T};
            for (std::size_t t = 1; t <= T; ++t)
                if (transition_prob_f(t, p) * static_cast<double>(T) >= 40.0) {
                    EXPECT_LE(std::abs(exact_conditional(t, p) - time_weight_w(t, p)), 1e-6);
                }
        }
}

TEST(ExactConditional, DivergesAtEarlierSteps) {
    // At t = 290 f(t)T is about 6e-7, far outside the tail regime: the exact
    // ratio approaches t/T while w is still near zero.
    const TimeWeightParams p{2.0, 300};
    EXPECT_NEAR(exact_conditional(290, p), 0.96666667662890822715, 1e-9);
    EXPECT_NEAR(time_weight_w(290, p), 5.977343724799319285e-7, 1e-15);
}

TEST(ExactConditional, SmallFLimit) {
    const TimeWeightParams p{2.0, 1000};
    EXPECT_DOUBLE_EQ(exact_conditional(10, p), 10.0 / 1000.0);
}

TEST(MonteCarlo, ShortChainMatchesClosedForm) {
    const double closed = constant_k_conditional(0.1, 2, 5);
    EXPECT_NEAR(closed, 0.19 / 0.40951, 1e-12);
    const auto mc = mc_constant_k_conditional(0.1, 2, 5, 100000, 17);
    EXPECT_LE(std::abs(mc.estimate - closed), 3.0 * mc.std_error);
}

TEST(MonteCarlo, HorizonStepIsCertain) {
    const auto mc = mc_constant_k_conditional(0.05, 40, 40, 5000, 3);
    EXPECT_EQ(mc.estimate, 1.0);
}

TEST(MonteCarlo, NearCertainAbsorption) {
    const auto mc = mc_constant_k_conditional(0.999, 1, 10, 10000, 5);
    EXPECT_GT(mc.estimate, 0.99);
}

TEST(MonteCarlo, DeterministicGivenSeed) {
    const auto a = mc_constant_k_conditional(0.2, 3, 9, 2000, 99);
    const auto b = mc_constant_k_conditional(0.2, 3, 9, 2000, 99);
    EXPECT_EQ(a.estimate, b.estimate);
    EXPECT_EQ(a.std_error, b.std_error);
}

TEST(MonteCarlo, RangeChecks) {
    EXPECT_THROW(mc_constant_k_conditional(0.0, 1, 2, 1000, 1), OutOfRange);
    EXPECT_THROW(mc_constant_k_conditional(0.5, 0, 2, 1000, 1), OutOfRange);
    EXPECT_THROW(mc_constant_k_conditional(0.5, 3, 2, 1000, 1), OutOfRange);
    EXPECT_THROW(mc_constant_k_conditional(0.5, 1, 2, 999, 1), OutOfRange);
}
