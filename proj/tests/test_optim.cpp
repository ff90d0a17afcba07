#include "repbc/optim.hpp"
#include "repbc/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace repbc;

TEST(Adam, FirstStepMovesByLr) {
    auto st = AdamState::for_size(3, 0.1);
    std::vector<double> p{1.0, -2.0, 0.5}, g{3.0, -0.01, 0.0};
    adam_step(st, p, g);
    EXPECT_NEAR(p[0], 0.9, 1e-6);
    EXPECT_NEAR(p[1], -1.9, 1e-4);
    EXPECT_EQ(p[2], 0.5);
    EXPECT_EQ(st.t, 1);
}

TEST(Adam, ClosedFormSecondStep) {
    auto st = AdamState::for_size(1, 0.01);
    std::vector<double> p{0.0};
    adam_step(st, p, std::vector<double>{1.0});
    adam_step(st, p, std::vector<double>{2.0});
    const double m = 0.9 * 0.1 + 0.1 * 2.0;
    const double v = 0.999 * 0.001 + 0.001 * 4.0;
    const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
    const double first = -0.01 * 1.0 / (1.0 + 1e-8);
    EXPECT_NEAR(p[0], first - 0.01 * mh / (std::sqrt(vh) + 1e-8), 1e-12);
}

TEST(Adam, MinimizesQuadratic) {
    auto st = AdamState::for_size(2, 0.05);
    std::vector<double> p{3.0, -4.0};
    for (int i = 0; i < 2000; ++i) adam_step(st, p, std::vector<double>{2 * (p[0] - 1), 2 * (p[1] + 2)});
    EXPECT_NEAR(p[0], 1.0, 1e-3);
    EXPECT_NEAR(p[1], -2.0, 1e-3);
}

TEST(Adam, RejectsBadInput) {
    auto st = AdamState::for_size(2, 0.1);
    std::vector<double> p{0, 0};
    EXPECT_THROW(adam_step(st, p, std::vector<double>{1.0}), std::invalid_argument);
    EXPECT_ANY_THROW(adam_step(st, p, std::vector<double>{NAN, 0.0}));
}

TEST(FiniteDiff, MatchesAnalyticGradient) {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> x(5);
        for (double& v : x) v = rng.normal();
        LossFn f = [](std::span<const double> p) {
            double s = 0.0;
            for (std::size_t i = 0; i < p.size(); ++i) s += std::sin(p[i]) * (i + 1) + p[i] * p[i] * p[i];
            return s;
        };
        Vector analytic(5);
        for (int i = 0; i < 5; ++i) analytic[i] = std::cos(x[i]) * (i + 1) + 3 * x[i] * x[i];
        EXPECT_LE(relative_error(finite_diff_grad(f, x), analytic), 1e-8);
    }
}

TEST(RelativeError, Floor) {
    Vector a = Vector::Zero(3), b = Vector::Constant(3, 1e-12);
    EXPECT_LE(relative_error(a, b), 1e-3);
    EXPECT_EQ(relative_error(a, a), 0.0);
}
