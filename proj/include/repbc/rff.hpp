#pragma once

// Random Fourier features cos(W normalize(x) + b) with running input statistics.

#include "repbc/mdp.hpp"

#include <cstdint>

namespace repbc {

class FourierFeaturizer {
public:
    static constexpr double kDefaultDecay = 0.99;
    static constexpr double kEpsNorm = 1e-6;

    /// W ~ N(0,1) of shape d x k and b ~ U[0, 2pi) drawn from `seed`; f_avg = 0, f_sq = 1.
    /// input_scale multiplies normalized inputs (kernel bandwidth 1 / input_scale); 1 is the plain map.
    FourierFeaturizer(int k, int d, std::uint64_t seed, double decay = kDefaultDecay, double input_scale = 1.0);

    int k() const { return k_; }
    int d() const { return d_; }
    std::uint64_t seed() const { return seed_; }
    double decay() const { return decay_; }
    double input_scale() const { return input_scale_; }

    const Matrix& w() const { return w_; }
    const Vector& b() const { return b_; }
    const Vector& f_avg() const { return f_avg_; }
    const Vector& f_sq() const { return f_sq_; }

    /// sqrt(max(f_sq - f_avg^2, eps^2)) / input_scale per input coordinate.
    Vector scale() const;
    Vector normalize(const Eigen::Ref<const Vector>& x) const;

    Vector map(const Eigen::Ref<const Vector>& x) const;
    /// Row-wise map of an n x k matrix into n x d.
    Matrix map_rows(const Matrix& x) const;

    /// EMA of the batch mean and mean-square; rows of `batch` are inputs.
    void update_stats(const Matrix& batch);
    void set_stats(Vector f_avg, Vector f_sq);

private:
    int k_;
    int d_;
    std::uint64_t seed_;
    double decay_;
    double input_scale_;
    Matrix w_;
    Vector b_;
    Vector f_avg_;
    Vector f_sq_;
};

/// (2/d) map(x)ᵀ map(y), an estimate of exp(-||x - y||^2 / 2) under identity normalization.
double kernel_estimate(const FourierFeaturizer& feat, const Eigen::Ref<const Vector>& x,
                       const Eigen::Ref<const Vector>& y);

nlohmann::json to_json(const FourierFeaturizer& feat);
FourierFeaturizer featurizer_from_json(const nlohmann::json& j);

}  // namespace repbc
