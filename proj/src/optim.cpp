#include "repbc/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace repbc {

AdamState AdamState::for_size(Eigen::Index n, double lr) {
    if (!(lr > 0.0)) throw std::invalid_argument("adam: lr must be positive");
    AdamState s;
    s.m = Vector::Zero(n);
    s.v = Vector::Zero(n);
    s.lr = lr;
    return s;
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
    const auto n = static_cast<Eigen::Index>(params.size());
    if (static_cast<std::size_t>(n) != grads.size()) throw std::invalid_argument("adam: params/grads size mismatch");
    if (state.m.size() != n || state.v.size() != n) throw std::invalid_argument("adam: state size mismatch");
    for (double g : grads)
        if (!std::isfinite(g)) throw std::invalid_argument("adam: non-finite gradient");
    ++state.t;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (Eigen::Index i = 0; i < n; ++i) {
        const double g = grads[static_cast<std::size_t>(i)];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        params[static_cast<std::size_t>(i)] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
}

Vector finite_diff_grad(const LossFn& loss, std::span<const double> params, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be positive");
    std::vector<double> x(params.begin(), params.end());
    Vector grad(static_cast<Eigen::Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double up = loss(x);
        x[i] = orig - h;
        const double down = loss(x);
        x[i] = orig;
        if (!std::isfinite(up) || !std::isfinite(down)) throw std::domain_error("finite_diff_grad: non-finite loss");
        grad[static_cast<Eigen::Index>(i)] = (up - down) / (2.0 * h);
    }
    return grad;
}

double relative_error(const Vector& a, const Vector& b, double floor) {
    if (a.size() != b.size()) throw std::invalid_argument("relative_error: size mismatch");
    const double scale = std::max({a.norm(), b.norm(), floor});
    return (a - b).norm() / scale;
}

}  // namespace repbc
