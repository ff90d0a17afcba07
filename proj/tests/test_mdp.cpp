#include "helpers.hpp"

#include "repbc/bounds.hpp"
#include "repbc/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace repbc;
using namespace repbc::testing;

TEST(Visitation, SingleState) {
    auto mdp = chain_mdp({{0, 0}}, mat({{0.3, 0.1}}), vec({1.0}), 0.7);
    auto d = visitation(mdp, TabularPolicy::uniform(1, 2));
    EXPECT_NEAR(d.probs[0], 1.0, 1e-15);
}

TEST(Visitation, ZeroGammaReturnsInitial) {
    Rng rng(3);
    auto mdp = random_mdp(rng, 5, 2, 0.0);
    auto d = visitation(mdp, random_policy(rng, 5, 2));
    for (int s = 0; s < 5; ++s) EXPECT_NEAR(d.probs[s], mdp.initial()[s], 1e-15);
}

TEST(Visitation, TwoStateChain) {
    auto mdp = chain_mdp({{1}, {1}}, mat({{0.0}, {0.0}}), vec({1.0, 0.0}), 0.5);
    auto d = visitation(mdp, TabularPolicy::uniform(2, 1));
    EXPECT_NEAR(d.probs[0], 0.5, 1e-14);
    EXPECT_NEAR(d.probs[1], 0.5, 1e-14);
}

TEST(Visitation, MatchesTruncatedSeries) {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const int S = 2 + static_cast<int>(rng.uniform_index(6));
        const int A = 1 + static_cast<int>(rng.uniform_index(3));
        const double g = rng.uniform(0.0, 0.9);
        auto mdp = random_mdp(rng, S, A, g);
        auto pi = random_policy(rng, S, A);
        auto d = visitation(mdp, pi);
        const Matrix p = policy_transition(mdp, pi);
        Eigen::RowVectorXd pr = mdp.initial().transpose();
        Vector series = Vector::Zero(S);
        const int T = 400;
        for (int t = 0; t <= T; ++t) {
            series += (1 - g) * std::pow(g, t) * pr.transpose();
            pr = pr * p;
        }
        EXPECT_NEAR(d.probs.sum(), 1.0, 1e-10);
        EXPECT_GE(d.probs.minCoeff(), -1e-12);
        for (int s = 0; s < S; ++s) EXPECT_NEAR(d.probs[s], series[s], std::pow(g, T + 1) / (1 - g) + 1e-12);
    }
}

TEST(Performance, ZeroReward) {
    Rng rng(5);
    auto base = random_mdp(rng, 4, 2, 0.9);
    TabularMdp mdp(base.transition(), Matrix::Zero(4, 2), base.initial(), 0.9, 1.0);
    EXPECT_EQ(performance(mdp, TabularPolicy::uniform(4, 2)), 0.0);
}

TEST(Performance, UnitRewardGeometric) {
    Rng rng(6);
    auto base = random_mdp(rng, 4, 2, 0.9);
    TabularMdp mdp(base.transition(), Matrix::Ones(4, 2), base.initial(), 0.9, 1.0);
    EXPECT_NEAR(performance(mdp, random_policy(rng, 4, 2)), 10.0, 1e-10);
}

TEST(Performance, MatchesMonteCarlo) {
    Rng rng(2024);
    auto mdp = random_mdp(rng, 3, 2, 0.9);
    auto pi = random_policy(rng, 3, 2);
    const double exact = performance(mdp, pi);
    Rng sim(99);
    const int episodes = 100000;
    double total = 0.0;
    for (int e = 0; e < episodes; ++e) {
        int s = static_cast<int>(sim.categorical(as_span(mdp.initial())));
        double disc = 1.0, ret = 0.0;
        for (int t = 0; t < 200; ++t) {
            const int a = static_cast<int>(sim.categorical(row_span(pi.probs, s)));
            ret += disc * mdp.reward(s, a);
            disc *= mdp.gamma();
            s = static_cast<int>(sim.categorical(mdp.next_dist(s, a)));
        }
        total += ret;
    }
    EXPECT_NEAR(total / episodes, exact, 1e-2);
}

TEST(Performance, IdentityWithVisitation) {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        auto mdp = random_mdp(rng, 6, 3, 0.95);
        auto pi = random_policy(rng, 6, 3);
        auto d = visitation(mdp, pi);
        double e = 0.0;
        for (int s = 0; s < 6; ++s)
            for (int a = 0; a < 3; ++a) e += d.probs[s] * pi.probs(s, a) * mdp.reward(s, a);
        EXPECT_NEAR(performance(mdp, pi), e / (1 - mdp.gamma()), 1e-9);
    }
}

TEST(PerfDiff, SymmetricAndZeroOnSelf) {
    Rng rng(9);
    auto mdp = random_mdp(rng, 5, 2, 0.9);
    auto p1 = random_policy(rng, 5, 2);
    auto p2 = random_policy(rng, 5, 2);
    EXPECT_EQ(perf_diff(mdp, p1, p1), 0.0);
    EXPECT_EQ(perf_diff(mdp, p1, p2), perf_diff(mdp, p2, p1));
}

TEST(PerfDiff, CounterexampleIsPositive) {
    auto ce = make_counterexample();
    auto d = visitation(ce.mdp, ce.target);
    auto m = marginalize(ce.phi, ce.target, d);
    Matrix probs(6, 2);
    for (int s = 0; s < 6; ++s) probs.row(s) = m.policy.probs.row(ce.phi(s));
    EXPECT_GT(perf_diff(ce.mdp, TabularPolicy(probs), ce.target), 0.0);
}

TEST(Divergence, KlOracles) {
    const std::vector<double> a{1, 0}, b{0.5, 0.5};
    EXPECT_EQ(kl(b, b), 0.0);
    EXPECT_NEAR(kl(a, b), std::log(2.0), 1e-15);
    EXPECT_TRUE(std::isinf(kl(b, a)));
}

TEST(Divergence, TvOracles) {
    EXPECT_EQ(tv(std::vector<double>{0.3, 0.7}, std::vector<double>{0.3, 0.7}), 0.0);
    EXPECT_NEAR(tv(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 1.0, 1e-15);
    EXPECT_NEAR(tv(std::vector<double>{0.7, 0.3}, std::vector<double>{0.5, 0.5}), 0.2, 1e-15);
}

TEST(Divergence, Chi2Oracles) {
    EXPECT_EQ(chi2(std::vector<double>{0.3, 0.7}, std::vector<double>{0.3, 0.7}), 0.0);
    EXPECT_NEAR(chi2(std::vector<double>{1, 0}, std::vector<double>{0.5, 0.5}), 1.0, 1e-15);
    EXPECT_TRUE(std::isinf(chi2(std::vector<double>{0.5, 0.5}, std::vector<double>{1, 0})));
}

TEST(Divergence, PinskerAndNonNegativity) {
    Rng rng(12);
    for (int i = 0; i < 500; ++i) {
        const std::size_t k = 2 + rng.uniform_index(8);
        auto p = rng.dirichlet(k, 0.7);
        auto q = rng.dirichlet(k, 0.7);
        const double t = tv(p, q), k1 = kl(p, q), c = chi2(p, q);
        EXPECT_GE(t, 0.0);
        EXPECT_GE(k1, 0.0);
        EXPECT_GE(c, 0.0);
        EXPECT_LE(t * t, 0.5 * k1 + 1e-12);
    }
}

TEST(Divergence, ZeroIffEqual) {
    std::vector<double> p{0.2, 0.8}, q{0.2 + 1e-3, 0.8 - 1e-3};
    EXPECT_GT(kl(p, q), 0.0);
    EXPECT_GT(tv(p, q), 0.0);
    EXPECT_GT(chi2(p, q), 0.0);
}

TEST(Divergence, RejectsNonDistributions) {
    EXPECT_THROW(kl(std::vector<double>{0.5, 0.6}, std::vector<double>{0.5, 0.5}), std::invalid_argument);
    EXPECT_THROW(tv(std::vector<double>{1.0}, std::vector<double>{0.5, 0.5}), std::invalid_argument);
}

TEST(Marginalize, IdentityUnchanged) {
    Rng rng(13);
    auto pi = random_policy(rng, 4, 3);
    StateDistribution d(vec({0.1, 0.2, 0.3, 0.4}));
    auto m = marginalize(TabularPhi::identity(4), pi, d);
    EXPECT_TRUE(m.latent.probs.isApprox(d.probs, 1e-15));
    EXPECT_TRUE(m.policy.probs.isApprox(pi.probs, 1e-14));
}

TEST(Marginalize, ConstantPhi) {
    Rng rng(14);
    auto pi = random_policy(rng, 4, 2);
    StateDistribution d(vec({0.1, 0.2, 0.3, 0.4}));
    auto m = marginalize(TabularPhi::constant(4), pi, d);
    EXPECT_NEAR(m.latent.probs[0], 1.0, 1e-15);
    const Eigen::RowVectorXd expect = d.probs.transpose() * pi.probs;
    EXPECT_TRUE(m.policy.probs.row(0).isApprox(expect, 1e-14));
}

TEST(Marginalize, TwoGroups) {
    TabularPolicy pi(mat({{1, 0}, {0, 1}, {0.5, 0.5}, {0.2, 0.8}}));
    StateDistribution d(vec({0.1, 0.3, 0.4, 0.2}));
    TabularPhi phi{{0, 0, 1, 1}, 2};
    auto m = marginalize(phi, pi, d);
    EXPECT_NEAR(m.latent.probs[0], 0.4, 1e-15);
    EXPECT_NEAR(m.latent.probs[1], 0.6, 1e-15);
    EXPECT_NEAR(m.policy.probs(0, 0), 0.1 / 0.4, 1e-15);
    EXPECT_NEAR(m.policy.probs(1, 0), (0.4 * 0.5 + 0.2 * 0.2) / 0.6, 1e-15);
}

TEST(Marginalize, UnvisitedLatentIsUniform) {
    TabularPolicy pi(mat({{1, 0}, {0, 1}}));
    StateDistribution d(vec({1.0, 0.0}));
    auto m = marginalize(TabularPhi{{0, 1}, 2}, pi, d);
    EXPECT_EQ(m.policy.probs(1, 0), 0.5);
}

TEST(Marginalize, ConservesMass) {
    Rng rng(15);
    for (int trial = 0; trial < 50; ++trial) {
        const int S = 3 + static_cast<int>(rng.uniform_index(7));
        const int Z = 1 + static_cast<int>(rng.uniform_index(S));
        TabularPhi phi;
        phi.latent_count = Z;
        for (int s = 0; s < S; ++s) phi.latent_of.push_back(s < Z ? s : static_cast<int>(rng.uniform_index(Z)));
        auto pi = random_policy(rng, S, 3);
        auto raw = rng.dirichlet(S, 1.0);
        StateDistribution d(Eigen::Map<Vector>(raw.data(), S));
        auto m = marginalize(phi, pi, d);
        EXPECT_NEAR(m.latent.probs.sum(), 1.0, 1e-10);
        const Eigen::RowVectorXd lhs = m.latent.probs.transpose() * m.policy.probs;
        const Eigen::RowVectorXd rhs = d.probs.transpose() * pi.probs;
        EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(TabularMdp, RejectsInvalidRows) {
    Matrix t = Matrix::Constant(2, 2, 0.6);
    EXPECT_THROW(TabularMdp(t, Matrix::Zero(2, 1), vec({0.5, 0.5}), 0.9, 1.0), std::invalid_argument);
    Matrix ok = Matrix::Constant(2, 2, 0.5);
    EXPECT_THROW(TabularMdp(ok, Matrix::Zero(2, 1), vec({0.5, 0.5}), 1.0, 1.0), std::invalid_argument);
}

TEST(TabularMdp, JsonRoundTrip) {
    Rng rng(16);
    auto mdp = random_mdp(rng, 4, 3, 0.8);
    auto back = mdp_from_json(nlohmann::json::parse(to_json(mdp).dump()));
    EXPECT_EQ(back.transition(), mdp.transition());
    EXPECT_EQ(back.reward(), mdp.reward());
    EXPECT_EQ(back.initial(), mdp.initial());
    EXPECT_EQ(back.gamma(), mdp.gamma());
    const auto j = to_json(mdp);
    EXPECT_EQ(j["transition"].size(), 4u);
    EXPECT_EQ(j["transition"][0].size(), 3u);
}
