#include "repbc/rff.hpp"

#include "repbc/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace repbc {

namespace {

void check_finite(const Eigen::Ref<const Vector>& x, const char* what) {
    if (!x.allFinite()) throw std::domain_error(std::string(what) + ": non-finite input");
}

}  // namespace

FourierFeaturizer::FourierFeaturizer(int k, int d, std::uint64_t seed, double decay, double input_scale)
    : k_(k), d_(d), seed_(seed), decay_(decay), input_scale_(input_scale) {
    if (k < 1 || d < 1) throw std::invalid_argument("featurizer: k and d must be >= 1");
    if (!(decay >= 0.0 && decay < 1.0)) throw std::invalid_argument("featurizer: decay must lie in [0, 1)");
    if (!(input_scale > 0.0) || !std::isfinite(input_scale))
        throw std::invalid_argument("featurizer: input_scale must be positive");
    Rng rw(derive_seed(seed, "rff-w"));
    w_.resize(d, k);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < k; ++j) w_(i, j) = rw.normal();
    Rng rb(derive_seed(seed, "rff-b"));
    b_.resize(d);
    for (int i = 0; i < d; ++i) b_[i] = 2.0 * std::numbers::pi * rb.uniform();
    f_avg_ = Vector::Zero(k);
    f_sq_ = Vector::Ones(k);
}

Vector FourierFeaturizer::scale() const {
    Vector var = f_sq_ - f_avg_.cwiseProduct(f_avg_);
    return var.cwiseMax(kEpsNorm * kEpsNorm).cwiseSqrt() / input_scale_;
}

Vector FourierFeaturizer::normalize(const Eigen::Ref<const Vector>& x) const {
    if (x.size() != k_) throw std::invalid_argument("featurizer: input length mismatch");
    check_finite(x, "featurizer");
    return (x - f_avg_).cwiseQuotient(scale());
}

Vector FourierFeaturizer::map(const Eigen::Ref<const Vector>& x) const {
    Vector u = w_ * normalize(x) + b_;
    return u.array().cos().matrix();
}

Matrix FourierFeaturizer::map_rows(const Matrix& x) const {
    if (x.cols() != k_) throw std::invalid_argument("featurizer: input width mismatch");
    if (!x.allFinite()) throw std::domain_error("featurizer: non-finite input");
    const Vector inv = scale().cwiseInverse();
    Matrix n = (x.rowwise() - f_avg_.transpose()) * inv.asDiagonal();
    Matrix u = n * w_.transpose();
    u.rowwise() += b_.transpose();
    return u.array().cos().matrix();
}

void FourierFeaturizer::update_stats(const Matrix& batch) {
    if (batch.rows() == 0) throw std::invalid_argument("update_stats: empty batch");
    if (batch.cols() != k_) throw std::invalid_argument("update_stats: width mismatch");
    const Vector mean = batch.colwise().mean().transpose();
    const Vector sq = batch.array().square().colwise().mean().transpose();
    f_avg_ = decay_ * f_avg_ + (1.0 - decay_) * mean;
    f_sq_ = decay_ * f_sq_ + (1.0 - decay_) * sq;
}

void FourierFeaturizer::set_stats(Vector f_avg, Vector f_sq) {
    if (f_avg.size() != k_ || f_sq.size() != k_) throw std::invalid_argument("featurizer: stats length mismatch");
    f_avg_ = std::move(f_avg);
    f_sq_ = std::move(f_sq);
}

double kernel_estimate(const FourierFeaturizer& feat, const Eigen::Ref<const Vector>& x,
                       const Eigen::Ref<const Vector>& y) {
    return 2.0 / feat.d() * feat.map(x).dot(feat.map(y));
}

nlohmann::json to_json(const FourierFeaturizer& feat) {
    return {{"k", feat.k()},
            {"d", feat.d()},
            {"seed", feat.seed()},
            {"decay", feat.decay()},
            {"input_scale", feat.input_scale()},
            {"f_avg", std::vector<double>(feat.f_avg().data(), feat.f_avg().data() + feat.k())},
            {"f_sq", std::vector<double>(feat.f_sq().data(), feat.f_sq().data() + feat.k())}};
}

FourierFeaturizer featurizer_from_json(const nlohmann::json& j) {
    FourierFeaturizer feat(j.at("k").get<int>(), j.at("d").get<int>(), j.at("seed").get<std::uint64_t>(),
                           j.value("decay", FourierFeaturizer::kDefaultDecay), j.value("input_scale", 1.0));
    const auto avg = j.at("f_avg").get<std::vector<double>>();
    const auto sq = j.at("f_sq").get<std::vector<double>>();
    feat.set_stats(Eigen::Map<const Vector>(avg.data(), static_cast<Eigen::Index>(avg.size())),
                   Eigen::Map<const Vector>(sq.data(), static_cast<Eigen::Index>(sq.size())));
    return feat;
}

}  // namespace repbc
