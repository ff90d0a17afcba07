#pragma once

// Adam and central-difference gradient checking.

#include "repbc/mdp.hpp"

#include <cstdint>
#include <functional>
#include <span>

namespace repbc {

struct AdamState {
    Vector m;
    Vector v;
    std::int64_t t = 0;
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState for_size(Eigen::Index n, double lr);
};

/// One bias-corrected Adam update in place. Throws on size mismatch or non-finite gradients.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

template <typename Dense>
void adam_step(AdamState& state, Dense& params, const Dense& grads) {
    adam_step(state, std::span<double>(params.data(), static_cast<std::size_t>(params.size())),
              std::span<const double>(grads.data(), static_cast<std::size_t>(grads.size())));
}

using LossFn = std::function<double(std::span<const double>)>;

/// Central differences, one coordinate at a time.
Vector finite_diff_grad(const LossFn& loss, std::span<const double> params, double h = 1e-5);

/// ||a - b||_2 / max(||a||_2, ||b||_2, floor).
double relative_error(const Vector& a, const Vector& b, double floor = 1e-8);

}  // namespace repbc
