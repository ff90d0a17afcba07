#include "repbc/rff.hpp"
#include "repbc/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace repbc;

namespace {

Vector random_vec(Rng& rng, int k, double scale = 1.0) {
    Vector v(k);
    for (int i = 0; i < k; ++i) v[i] = scale * rng.normal();
    return v;
}

// Max |estimate - exp(-|x-y|^2/2)| over 100 pairs with |x - y| <= 4.
double max_kernel_error(int d, std::uint64_t seed) {
    const int k = 4;
    FourierFeaturizer feat(k, d, seed);
    Rng rng(derive_seed(seed, "pairs"));
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const Vector x = random_vec(rng, k);
        Vector dir = random_vec(rng, k);
        dir /= dir.norm();
        const Vector y = x + rng.uniform(0.0, 4.0) * dir;
        const double truth = std::exp(-0.5 * (x - y).squaredNorm());
        worst = std::max(worst, std::abs(kernel_estimate(feat, x, y) - truth));
    }
    return worst;
}

}  // namespace

TEST(Fourier, DeterministicWeights) {
    FourierFeaturizer a(5, 64, 17), b(5, 64, 17), c(5, 64, 18);
    EXPECT_EQ(a.w(), b.w());
    EXPECT_EQ(a.b(), b.b());
    EXPECT_NE(a.w(), c.w());
    EXPECT_GE(a.b().minCoeff(), 0.0);
    EXPECT_LT(a.b().maxCoeff(), 2 * M_PI);
}

TEST(Fourier, InitialStatsAreIdentity) {
    FourierFeaturizer f(3, 10, 1);
    EXPECT_EQ(f.f_avg(), Vector::Zero(3));
    EXPECT_EQ(f.f_sq(), Vector::Ones(3));
    const Vector x = (Vector(3) << 0.3, -1.0, 2.0).finished();
    EXPECT_EQ(f.map(x), (f.w() * x + f.b()).array().cos().matrix());
}

TEST(Fourier, ScalarLoopOracle) {
    FourierFeaturizer f(2, 32, 99);
    const Vector x = (Vector(2) << 1.0, 2.0).finished();
    const Vector z = f.map(x);
    for (int i = 0; i < 32; ++i) {
        double u = f.b()[i];
        for (int j = 0; j < 2; ++j) u += f.w()(i, j) * x[j];
        EXPECT_NEAR(z[i], std::cos(u), 1e-14);
    }
}

TEST(Fourier, NormalizedInputAtMeanGivesCosB) {
    FourierFeaturizer f(2, 16, 5);
    f.set_stats((Vector(2) << 0.5, -1.0).finished(), (Vector(2) << 1.25, 5.0).finished());
    const Vector z = f.map(f.f_avg());
    for (int i = 0; i < 16; ++i) EXPECT_NEAR(z[i], std::cos(f.b()[i]), 1e-15);
    EXPECT_NEAR(f.scale()[0], 1.0, 1e-15);
    EXPECT_NEAR(f.scale()[1], 2.0, 1e-15);
}

TEST(Fourier, ScaleIsClamped) {
    FourierFeaturizer f(1, 4, 5);
    f.set_stats(Vector::Constant(1, 2.0), Vector::Constant(1, 4.0));
    EXPECT_EQ(f.scale()[0], FourierFeaturizer::kEpsNorm);
    EXPECT_TRUE(f.map(Vector::Constant(1, 3.0)).allFinite());
}

TEST(Fourier, InputScaleWidensKernel) {
    FourierFeaturizer plain(2, 16, 5);
    FourierFeaturizer wide(2, 16, 5, FourierFeaturizer::kDefaultDecay, 0.25);
    const Vector x = (Vector(2) << 0.8, -2.0).finished();
    EXPECT_EQ(wide.map(x), plain.map(0.25 * x));
    EXPECT_NEAR(wide.scale()[0], 4.0, 1e-15);
    EXPECT_THROW(FourierFeaturizer(2, 16, 5, 0.9, 0.0), std::invalid_argument);
    auto back = featurizer_from_json(nlohmann::json::parse(to_json(wide).dump()));
    EXPECT_EQ(back.input_scale(), 0.25);
    EXPECT_EQ(back.map(x), wide.map(x));
}

TEST(Fourier, OutputBounded) {
    Rng rng(3);
    FourierFeaturizer f(6, 200, 3);
    for (int i = 0; i < 50; ++i) {
        const Vector z = f.map(random_vec(rng, 6, 100.0));
        EXPECT_TRUE(z.allFinite());
        EXPECT_LE(z.cwiseAbs().maxCoeff(), 1.0);
    }
}

TEST(Fourier, EmaFixedPointAndClosedForm) {
    FourierFeaturizer f(2, 4, 1, 0.9);
    Matrix batch = Matrix::Constant(3, 2, 2.0);
    f.update_stats(batch);
    EXPECT_NEAR(f.f_avg()[0], 0.1 * 2.0, 1e-15);
    for (int i = 0; i < 2000; ++i) f.update_stats(batch);
    EXPECT_NEAR(f.f_avg()[1], 2.0, 1e-9);
    EXPECT_NEAR(f.f_sq()[1], 4.0, 1e-9);
}

TEST(Fourier, EmaOnStandardNormal) {
    Rng rng(8);
    FourierFeaturizer f(4, 4, 1);
    for (int step = 0; step < 100; ++step) {
        Matrix batch(256, 4);
        for (Eigen::Index i = 0; i < batch.size(); ++i) batch.data()[i] = rng.normal();
        f.update_stats(batch);
    }
    EXPECT_LE(f.f_avg().cwiseAbs().maxCoeff(), 0.1);
    EXPECT_LE((f.f_sq().array() - 1.0).abs().maxCoeff(), 0.15);
}

TEST(Fourier, JsonRoundTripIsBitExact) {
    FourierFeaturizer f(3, 50, 12345);
    Matrix batch = Matrix::Random(8, 3);
    f.update_stats(batch);
    auto back = featurizer_from_json(nlohmann::json::parse(to_json(f).dump()));
    const Vector x = (Vector(3) << 0.1, 0.2, -0.3).finished();
    EXPECT_EQ(back.map(x), f.map(x));
    auto j = to_json(f);
    EXPECT_FALSE(j.contains("w"));
    EXPECT_EQ(j["decay"], f.decay());
}

TEST(Fourier, KernelIdenticalInputs) {
    FourierFeaturizer f(3, 8192, 4);
    const Vector x = (Vector(3) << 0.4, -0.2, 1.0).finished();
    EXPECT_NEAR(kernel_estimate(f, x, x), 1.0, 0.08);
}

TEST(Fourier, KernelFarInputs) {
    FourierFeaturizer f(3, 8192, 4);
    const Vector x = Vector::Zero(3), y = Vector::Constant(3, 10.0);
    EXPECT_NEAR(kernel_estimate(f, x, y), 0.0, 0.08);
}

TEST(Fourier, SingleFeatureBounded) {
    Rng rng(1);
    FourierFeaturizer f(2, 1, 4);
    for (int i = 0; i < 20; ++i) EXPECT_LE(std::abs(kernel_estimate(f, random_vec(rng, 2), random_vec(rng, 2))), 2.0);
}

TEST(Fourier, KernelErrorShrinksWithD) {
    double small = 0.0, large = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const double e_large = max_kernel_error(8192, seed);
        EXPECT_LE(e_large, 0.08) << "seed " << seed;
        large += e_large / 5;
        small += max_kernel_error(512, seed) / 5;
    }
    EXPECT_LE(large, small);
}
