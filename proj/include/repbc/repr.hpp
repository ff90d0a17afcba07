#pragma once

// Contrastive representation learning, SVD features and explicit latent models.

#include "repbc/bounds.hpp"
#include "repbc/env.hpp"
#include "repbc/mdp.hpp"
#include "repbc/rff.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace repbc {

enum class ReprVariant { table, svd, energy, fourier };

std::string to_string(ReprVariant v);
ReprVariant repr_variant_from_string(const std::string& s);

struct Representation {
    ReprVariant variant = ReprVariant::table;
    /// One latent vector per state (one-hot for the table variant).
    Matrix features;
    /// Table variant only.
    TabularPhi table;
    /// Fourier variant only: pre-featurizer embeddings f(s) and the frozen featurizer.
    Matrix embeddings;
    std::optional<FourierFeaturizer> featurizer;

    int n_states() const { return static_cast<int>(features.rows()); }
    int latent_dim() const { return static_cast<int>(features.cols()); }

    static Representation from_table(const TabularPhi& phi);
};

/// Groups states whose latent vectors are bitwise equal; ids follow first appearance.
TabularPhi tabulate(const Matrix& features);

struct TrainConfig {
    double alpha_r = 1.0;
    double alpha_t = 20.0;
    int batch_size = 256;
    double lr = 0.01;
    int steps = 2000;
    std::uint64_t seed = 0;
    double init_std = 0.1;
    double decay = FourierFeaturizer::kDefaultDecay;
    double input_scale = 1.0;
    int log_every = 50;

    /// alpha_t = 1 / (1 - gamma).
    static TrainConfig defaults(double gamma);
    void validate() const;
};

/// Tabular f (S x k), g ((S*A) x k, row s'*A + a), linear reward head h and fixed next-state marginal rho.
struct EnergyModel {
    Matrix f;
    Matrix g;
    /// head_dim x A; head_dim is k for the energy path and d for the Fourier path.
    Matrix h;
    /// Per-action bias, energy path only (kept at zero otherwise).
    Vector c;
    bool head_bias = true;
    Vector rho;
    int n_actions = 0;

    int n_states() const { return static_cast<int>(f.rows()); }
    int k() const { return static_cast<int>(f.cols()); }
    Eigen::Index g_row(int next_state, int action) const {
        return static_cast<Eigen::Index>(next_state) * n_actions + action;
    }
};

EnergyModel init_energy_model(int n_states, int n_actions, int k, int head_dim, bool head_bias, Vector rho,
                              double init_std, std::uint64_t seed);

/// Empirical distribution of next states.
Vector next_state_marginal(const Dataset& data, int n_states);

struct BatchLoss {
    double loss_r = 0.0;
    double loss_t = 0.0;
    double total = 0.0;
    Matrix gf;
    Matrix gg;
    Matrix gh;
    Vector gc;
};

/// Summed in-batch contrastive loss over `batch` (record indices). With `feat` the reward head reads
/// the Fourier map of f; otherwise it reads f directly.
BatchLoss contrastive_batch_loss(const EnergyModel& model, const FourierFeaturizer* feat, const Dataset& data,
                                 std::span<const std::size_t> batch, double alpha_r, double alpha_t);

struct TrainLogRow {
    int step = 0;
    double loss_r = 0.0;
    double loss_t = 0.0;
    double total = 0.0;
};

struct TrainResult {
    Representation repr;
    EnergyModel model;
    std::vector<TrainLogRow> log;
};

TrainResult train_energy(const Dataset& data, int n_states, int n_actions, const TrainConfig& cfg, int k);
TrainResult train_fourier(const Dataset& data, int n_states, int n_actions, const TrainConfig& cfg, int k, int d);

/// Top-k left singular vectors of the empirical [s, (a, s')] transition matrix, scaled by singular values.
Representation svd_features(const Dataset& data, int n_states, int n_actions, int k = 16);
Matrix empirical_transition_matrix(const Dataset& data, int n_states, int n_actions);

/// P_Z(s'|f(s),a) proportional to rho(s') exp(-||f(s) - g(s',a)||^2 / 2), floored and renormalized;
/// reward h(f(s),a) clipped to r_max.
ModelPredictions energy_predictions(const EnergyModel& model, double r_max);

struct LinearDynamics {
    /// r from the trained head, psi(s',a) = (2 rho(s') / d) map(g(s',a)).
    LinearLatentModels models;
    /// E(s,a): row sums of the raw linear dynamics.
    Matrix normalizer;
    LinearPrediction prediction;
    /// max_a ||psi(.,a)||_inf / min_s E(s,a), the coefficient scale of the normalized model.
    double psi_norm_normalized = 0.0;
    int degenerate_rows = 0;
};

LinearDynamics extract_linear_dynamics(const EnergyModel& model, const FourierFeaturizer& feat, double r_max);

nlohmann::json to_json(const Representation& repr);
Representation representation_from_json(const nlohmann::json& j);

void write_train_log_csv(std::ostream& os, const std::vector<TrainLogRow>& log);

}  // namespace repbc
