#include "helpers.hpp"

#include "repbc/optim.hpp"
#include "repbc/repr.hpp"
#include "repbc/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace repbc;
using namespace repbc::testing;

namespace {

Dataset toy_data(Rng& rng, int S, int A, int n) {
    Dataset d;
    for (int i = 0; i < n; ++i)
        d.records.push_back({0, i, static_cast<int>(rng.uniform_index(S)), static_cast<int>(rng.uniform_index(A)),
                             rng.normal(), static_cast<int>(rng.uniform_index(S))});
    return d;
}

// Concatenated (f, g, h, c) of a model, and the inverse.
std::vector<double> flatten(const EnergyModel& m) {
    std::vector<double> p;
    for (const Matrix* x : {&m.f, &m.g, &m.h}) p.insert(p.end(), x->data(), x->data() + x->size());
    p.insert(p.end(), m.c.data(), m.c.data() + m.c.size());
    return p;
}

EnergyModel unflatten(EnergyModel m, std::span<const double> p) {
    std::size_t o = 0;
    for (Matrix* x : {&m.f, &m.g, &m.h})
        for (Eigen::Index i = 0; i < x->size(); ++i) x->data()[i] = p[o++];
    for (Eigen::Index i = 0; i < m.c.size(); ++i) m.c[i] = p[o++];
    return m;
}

double gradient_error(const EnergyModel& model, const FourierFeaturizer* feat, const Dataset& data,
                      const std::vector<std::size_t>& batch) {
    const double ar = 0.7, at = 1.3;
    const BatchLoss bl = contrastive_batch_loss(model, feat, data, batch, ar, at);
    std::vector<double> analytic;
    for (const Matrix* x : {&bl.gf, &bl.gg, &bl.gh}) analytic.insert(analytic.end(), x->data(), x->data() + x->size());
    analytic.insert(analytic.end(), bl.gc.data(), bl.gc.data() + bl.gc.size());
    LossFn f = [&](std::span<const double> p) {
        return contrastive_batch_loss(unflatten(model, p), feat, data, batch, ar, at).total;
    };
    const Vector numeric = finite_diff_grad(f, flatten(model));
    return relative_error(Eigen::Map<const Vector>(analytic.data(), static_cast<Eigen::Index>(analytic.size())), numeric);
}

std::vector<std::size_t> iota_batch(std::size_t n) {
    std::vector<std::size_t> b(n);
    std::iota(b.begin(), b.end(), 0);
    return b;
}

}  // namespace

TEST(Contrastive, SingleSamplePerfectModelHasZeroLoss) {
    EnergyModel m = init_energy_model(2, 1, 2, 2, true, vec({0.5, 0.5}), 0.0, 1);
    m.f.row(0) << 1.0, 0.0;
    m.h.col(0) << 2.0, 0.0;
    m.c[0] = 0.5;
    Dataset d;
    d.records.push_back({0, 0, 0, 0, 2.5, 1});
    const auto bl = contrastive_batch_loss(m, nullptr, d, iota_batch(1), 1.0, 1.0);
    EXPECT_NEAR(bl.loss_r, 0.0, 1e-15);
    EXPECT_NEAR(bl.loss_t, 0.0, 1e-15);
    EXPECT_NEAR(bl.total, 0.0, 1e-15);
}

TEST(Contrastive, TwoSampleHandOracle) {
    EnergyModel m = init_energy_model(2, 1, 1, 1, true, vec({0.5, 0.5}), 0.0, 1);
    m.f << 0.0, 1.0;
    m.g << 0.0, 1.0;
    Dataset d;
    d.records.push_back({0, 0, 0, 0, 1.0, 0});
    d.records.push_back({0, 1, 1, 0, 0.0, 1});
    const auto bl = contrastive_batch_loss(m, nullptr, d, iota_batch(2), 2.0, 3.0);
    EXPECT_NEAR(bl.loss_r, 1.0, 1e-15);
    EXPECT_NEAR(bl.loss_t, 2.0 * std::log(1.0 + std::exp(-0.5)), 1e-14);
    EXPECT_NEAR(bl.total, 2.0 + 3.0 * bl.loss_t, 1e-14);
}

TEST(Contrastive, ZeroWeightsGiveZeroGradients) {
    Rng rng(2);
    auto data = toy_data(rng, 4, 2, 6);
    EnergyModel m = init_energy_model(4, 2, 3, 3, true, Vector::Constant(4, 0.25), 0.5, 9);
    const auto bl = contrastive_batch_loss(m, nullptr, data, iota_batch(6), 0.0, 0.0);
    EXPECT_EQ(bl.total, 0.0);
    EXPECT_EQ(bl.gf.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(bl.gg.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(bl.gh.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Contrastive, TransitionLossNonNegative) {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        auto data = toy_data(rng, 5, 3, 12);
        EnergyModel m = init_energy_model(5, 3, 4, 4, true, Vector::Constant(5, 0.2), 2.0, trial);
        EXPECT_GE(contrastive_batch_loss(m, nullptr, data, iota_batch(12), 1.0, 1.0).loss_t, 0.0);
    }
}

TEST(Contrastive, EnergyGradientCheck) {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const int S = 3 + trial % 3, A = 2, k = 3;
        auto data = toy_data(rng, S, A, 8);
        EnergyModel m = init_energy_model(S, A, k, k, true, Vector::Constant(S, 1.0 / S), 0.7, trial);
        for (Eigen::Index i = 0; i < m.h.size(); ++i) m.h.data()[i] = rng.normal();
        m.c << rng.normal(), rng.normal();
        EXPECT_LE(gradient_error(m, nullptr, data, iota_batch(8)), 1e-4) << "trial " << trial;
    }
}

TEST(Contrastive, FourierGradientCheck) {
    Rng rng(22);
    for (int trial = 0; trial < 20; ++trial) {
        const int S = 3 + trial % 3, A = 2, k = 3, d = 16;
        auto data = toy_data(rng, S, A, 8);
        FourierFeaturizer feat(k, d, 100 + trial);
        Matrix stats(10, k);
        for (Eigen::Index i = 0; i < stats.size(); ++i) stats.data()[i] = rng.normal();
        feat.update_stats(stats);
        EnergyModel m = init_energy_model(S, A, k, d, false, Vector::Constant(S, 1.0 / S), 0.7, trial);
        for (Eigen::Index i = 0; i < m.h.size(); ++i) m.h.data()[i] = 0.3 * rng.normal();
        EXPECT_LE(gradient_error(m, &feat, data, iota_batch(8)), 1e-4) << "trial " << trial;
    }
}

TEST(Contrastive, ShapeMismatchThrows) {
    Dataset d;
    d.records.push_back({0, 0, 0, 0, 0.0, 0});
    EnergyModel m = init_energy_model(1, 1, 2, 3, true, vec({1.0}), 0.1, 1);
    EXPECT_THROW(contrastive_batch_loss(m, nullptr, d, iota_batch(1), 1, 1), std::invalid_argument);
    EXPECT_THROW(contrastive_batch_loss(m, nullptr, d, {}, 1, 1), std::invalid_argument);
}

TEST(Training, ZeroStepsKeepsInitialization) {
    Rng rng(3);
    auto data = toy_data(rng, 6, 2, 40);
    TrainConfig cfg;
    cfg.steps = 0;
    cfg.seed = 4;
    auto res = train_energy(data, 6, 2, cfg, 3);
    const auto init = init_energy_model(6, 2, 3, 3, true, next_state_marginal(data, 6), cfg.init_std, cfg.seed);
    EXPECT_EQ(res.repr.features, init.f);
    EXPECT_TRUE(res.log.empty());
}

TEST(Training, Deterministic) {
    Rng rng(3);
    auto data = toy_data(rng, 6, 2, 40);
    TrainConfig cfg;
    cfg.steps = 30;
    cfg.batch_size = 8;
    cfg.seed = 11;
    EXPECT_EQ(train_energy(data, 6, 2, cfg, 3).repr.features, train_energy(data, 6, 2, cfg, 3).repr.features);
    auto a = train_fourier(data, 6, 2, cfg, 3, 32), b = train_fourier(data, 6, 2, cfg, 3, 32);
    EXPECT_EQ(a.repr.features, b.repr.features);
    EXPECT_EQ(a.repr.variant, ReprVariant::fourier);
    EXPECT_EQ(a.repr.latent_dim(), 32);
    cfg.seed = 12;
    EXPECT_NE(train_energy(data, 6, 2, cfg, 3).repr.features, b.repr.embeddings);
}

TEST(Training, LossDecreasesOnTree) {
    TreeEnvSpec spec;
    spec.duplication = 2;
    auto env = make_tree_env(spec);
    auto data = sample_offline(env, 3000, 1);
    auto cfg = TrainConfig::defaults(spec.gamma);
    cfg.steps = 300;
    cfg.log_every = 10;
    auto res = train_energy(data, env.mdp.n_states(), 2, cfg, 8);
    ASSERT_GE(res.log.size(), 2u);
    EXPECT_LT(res.log.back().total, res.log.front().total);
}

TEST(Svd, RankOneWhenAllRowsEqual) {
    Dataset d;
    for (int s = 0; s < 4; ++s) {
        d.records.push_back({0, 0, s, 0, 0.0, 1});
        d.records.push_back({0, 0, s, 1, 0.0, 2});
    }
    auto r = svd_features(d, 4, 2, 3);
    EXPECT_EQ(r.latent_dim(), 3);
    EXPECT_LE(r.features.rightCols(2).cwiseAbs().maxCoeff(), 1e-12);
    for (int s = 1; s < 4; ++s) EXPECT_NEAR(std::abs(r.features(s, 0)), std::abs(r.features(0, 0)), 1e-12);
}

TEST(Svd, GramMatchesTransitionMatrix) {
    Rng rng(6);
    auto data = toy_data(rng, 5, 2, 200);
    const Matrix t = empirical_transition_matrix(data, 5, 2);
    for (int s = 0; s < 5; ++s) EXPECT_NEAR(t.row(s).sum(), 1.0, 1e-12);
    auto r = svd_features(data, 5, 2, 8);
    EXPECT_LE((r.features * r.features.transpose() - t * t.transpose()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Predictions, EnergyRowsOnSimplex) {
    EnergyModel m = init_energy_model(4, 2, 3, 3, true, vec({0.4, 0.3, 0.3, 0.0}), 3.0, 7);
    m.h.setConstant(5.0);
    auto p = energy_predictions(m, 1.0);
    EXPECT_LE(p.reward.cwiseAbs().maxCoeff(), 1.0);
    for (Eigen::Index r = 0; r < p.transition.rows(); ++r) {
        EXPECT_NEAR(p.transition.row(r).sum(), 1.0, 1e-12);
        EXPECT_GE(p.transition.row(r).minCoeff(), kProbFloor * 0.99);
    }
}

TEST(Predictions, LinearDynamicsRowsOnSimplex) {
    Rng rng(8);
    FourierFeaturizer feat(3, 256, 5);
    EnergyModel m = init_energy_model(5, 2, 3, 256, false, Vector::Constant(5, 0.2), 1.0, 3);
    auto lin = extract_linear_dynamics(m, feat, 1.0);
    EXPECT_EQ(lin.models.psi.size(), 2u);
    EXPECT_EQ(lin.models.psi[0].rows(), 5);
    EXPECT_EQ(lin.models.psi[0].cols(), 256);
    const auto& t = lin.prediction.predictions.transition;
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
        EXPECT_NEAR(t.row(r).sum(), 1.0, 1e-12);
        EXPECT_GE(t.row(r).minCoeff(), 0.0);
    }
    EXPECT_GE(lin.prediction.max_projection_tv, lin.prediction.mean_projection_tv);
    EXPECT_GT(lin.psi_norm_normalized, 0.0);
}

TEST(Representation, TabulateGroupsEqualRows) {
    auto phi = tabulate(mat({{1, 2}, {3, 4}, {1, 2}, {0, 0}}));
    EXPECT_EQ(phi.latent_count, 3);
    EXPECT_EQ(phi.latent_of, (std::vector<int>{0, 1, 0, 2}));
}

TEST(Representation, JsonRoundTrip) {
    Rng rng(1);
    auto data = toy_data(rng, 4, 2, 30);
    TrainConfig cfg;
    cfg.steps = 5;
    cfg.batch_size = 4;
    std::vector<Representation> reprs{Representation::from_table(TabularPhi{{0, 1, 1, 0}, 2}),
                                      svd_features(data, 4, 2, 3), train_energy(data, 4, 2, cfg, 2).repr,
                                      train_fourier(data, 4, 2, cfg, 2, 16).repr};
    for (const auto& r : reprs) {
        auto back = representation_from_json(nlohmann::json::parse(to_json(r).dump()));
        EXPECT_EQ(back.variant, r.variant);
        EXPECT_EQ(back.features, r.features) << to_string(r.variant);
    }
    EXPECT_THROW(repr_variant_from_string("pca"), std::invalid_argument);
}
