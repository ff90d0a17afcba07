#pragma once

// Behavioral cloning on raw states or learned representations.

#include "repbc/env.hpp"
#include "repbc/mdp.hpp"

#include <cstdint>
#include <iosfwd>
#include <variant>
#include <vector>

namespace repbc {

struct BcConfig {
    double lr = 0.01;
    int steps = 2000;
    /// 0 means full batch.
    int batch_size = 0;
    std::uint64_t seed = 0;
    int hidden_units = 512;
    /// Stop once the L1 norm of the full-data gradient drops to this value.
    double grad_tol = 1e-3;
    int log_every = 10;

    void validate() const;
};

struct BcLogRow {
    int step = 0;
    double bc_loss = 0.0;
    double grad_l1 = 0.0;
};

/// Empirical conditional action frequencies per latent; unseen latents are uniform.
LatentTabularPolicy bc_tabular(const Dataset& demos, const TabularPhi& phi, int n_actions);

struct MlpPolicy {
    Matrix w1;  // H x d
    Vector b1;  // H
    Matrix w2;  // A x H
    Vector b2;  // A

    int latent_dim() const { return static_cast<int>(w1.cols()); }
    int hidden_units() const { return static_cast<int>(w1.rows()); }
    int n_actions() const { return static_cast<int>(w2.rows()); }
    Vector action_probs(const Eigen::Ref<const Vector>& z) const;
};

/// Mean negative log-likelihood of `actions` given feature rows `x`; fills `grad` when non-null.
double loglinear_loss(const Matrix& x, const std::vector<int>& actions, const Matrix& theta, Matrix* grad);
double mlp_loss(const Matrix& x, const std::vector<int>& actions, const MlpPolicy& net, MlpPolicy* grad);

struct LogLinearFit {
    LogLinearPolicy policy;
    std::vector<BcLogRow> log;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double final_grad_l1 = 0.0;
    int steps_run = 0;
};

struct MlpFit {
    MlpPolicy policy;
    std::vector<BcLogRow> log;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double final_grad_l1 = 0.0;
    int steps_run = 0;
};

/// `features` holds one row per state id.
LogLinearFit bc_loglinear(const Dataset& demos, const Matrix& features, int n_actions, const BcConfig& cfg);
MlpFit bc_mlp(const Dataset& demos, const Matrix& features, int n_actions, const BcConfig& cfg);

TabularPolicy lift(const LatentTabularPolicy& pi_z, const TabularPhi& phi);
TabularPolicy lift(const LogLinearPolicy& pi, const Matrix& features);
TabularPolicy lift(const MlpPolicy& pi, const Matrix& features);

using AnyPolicy = std::variant<LatentTabularPolicy, LogLinearPolicy, MlpPolicy>;

nlohmann::json to_json(const AnyPolicy& policy);
AnyPolicy policy_from_json(const nlohmann::json& j);

void write_bc_log_csv(std::ostream& os, const std::vector<BcLogRow>& log);

}  // namespace repbc
