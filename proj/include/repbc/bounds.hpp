#pragma once

// Exact bound terms, theorem-as-oracle property suites and Monte Carlo checks.

#include "repbc/env.hpp"
#include "repbc/mdp.hpp"
#include "repbc/rng.hpp"

#include <cstdint>
#include <string>
#include <iosfwd>
#include <vector>

namespace repbc {

/// Floor applied to learned next-state probabilities before renormalizing rows.
inline constexpr double kProbFloor = 1e-8;
/// Slack below which an inequality counts as violated.
inline constexpr double kSlackTol = 1e-9;

/// Model outputs evaluated at every raw state: R_Z(phi(s), a) and P_Z(.|phi(s), a).
struct ModelPredictions {
    Matrix reward;      // S x A
    Matrix transition;  // (S*A) x S, same row layout as TabularMdp
};

/// R_Z and P_Z tabulated over latent ids.
struct TabularLatentModels {
    Matrix reward;    // |Z| x A
    Matrix dynamics;  // (|Z|*A) x S

    int latent_count() const { return static_cast<int>(reward.rows()); }
    int n_actions() const { return static_cast<int>(reward.cols()); }
};

/// R_Z(z,a) = r(a)ᵀz and P_Z(s'|z,a) = psi(s',a)ᵀz.
struct LinearLatentModels {
    Matrix r;                // d x A
    std::vector<Matrix> psi;  // one S x d table per action
    double r_max = 1.0;

    int latent_dim() const { return static_cast<int>(r.rows()); }
    int n_actions() const { return static_cast<int>(r.cols()); }
    double r_norm() const;    // max_a ||r(a)||_inf
    double psi_norm() const;  // max_{s',a} ||psi(s',a)||_inf
};

ModelPredictions predict(const TabularLatentModels& models, const TabularPhi& phi);

struct LinearPrediction {
    ModelPredictions predictions;
    /// Per-row TV between the raw linear output and its projection onto the simplex.
    double max_projection_tv = 0.0;
    double mean_projection_tv = 0.0;
};

/// Evaluates the linear models on `features` (S x d). Rewards are clipped to r_max;
/// with `project`, dynamics rows are floored at kProbFloor and renormalized.
LinearPrediction predict(const LinearLatentModels& models, const Matrix& features, bool project);

/// Minimal-error tabular models: per (z,a), the d_off-weighted mixture of true rewards and next-state distributions.
TabularLatentModels best_response_models(const TabularMdp& mdp, const TabularPhi& phi, const StateDistribution& d_off);

/// Ground truth for a tree env: canonical rewards and canonical dynamics spread uniformly over duplicates.
TabularLatentModels canonical_models(const TreeEnv& env);

/// Replaces the reward model by the constant E_{d_off, Unif}[R].
void make_reward_agnostic(ModelPredictions& preds, const TabularMdp& mdp, const StateDistribution& d_off);

double j_reward(const TabularMdp& mdp, const StateDistribution& d_off, const ModelPredictions& preds);
double j_trans(const TabularMdp& mdp, const StateDistribution& d_off, const ModelPredictions& preds);
double j_reward(const TabularMdp& mdp, const StateDistribution& d_off, const TabularPhi& phi,
                const TabularLatentModels& models);
double j_trans(const TabularMdp& mdp, const StateDistribution& d_off, const TabularPhi& phi,
               const TabularLatentModels& models);

double epsilon_rt(double j_r, double j_t, int n_actions, double gamma, double r_max);
/// Transition part only, for action-independent rewards.
double epsilon_t(double j_t, int n_actions, double gamma, double r_max);

/// Every term that appears in a bound; unused terms stay NaN and are omitted from JSON.
struct BoundReport {
    std::string bound;
    double j_r;
    double j_t;
    double eps_rt;
    double chi2;
    double offline_term;
    double bc_kl;
    double bc_term;
    double grad_l1;
    double constant_c;
    double grad_term;
    double err_r;
    double err_p;
    double lhs = 0.0;
    double rhs = 0.0;
    double slack = 0.0;
    bool reward_free = false;
    std::vector<std::string> flags;

    BoundReport();
    bool holds(double tol = kSlackTol) const { return slack >= -tol; }
};

nlohmann::json to_json(const BoundReport& report);

/// (1 + x) * eps with the convention 0 * inf = 0.
double offline_term(double chi2, double eps);

struct Thm1Options {
    /// Drop the reward model, valid only for action-independent rewards.
    bool reward_free = false;
};

BoundReport thm1_bound(const TabularMdp& mdp, const TabularPhi& phi, const ModelPredictions& preds,
                       const LatentTabularPolicy& pi_z, const TabularPolicy& target, const StateDistribution& d_off,
                       const Thm1Options& options = {});

enum class GradientMode { exact, demos };

/// lhs uses softmax(thetaᵀ features[s]); the gradient is taken under (d^target, target) in exact
/// mode or over the demo records otherwise.
BoundReport thm2_bound(const TabularMdp& mdp, const Matrix& features, const LinearLatentModels& models,
                       const ModelPredictions& preds, const LogLinearPolicy& theta, const TabularPolicy& target,
                       const StateDistribution& d_off, GradientMode mode, const Dataset* demos = nullptr);

/// d/dtheta E_{s~d, a~target}[-log softmax(thetaᵀ features[s])_a].
Matrix loglinear_bc_gradient(const Matrix& features, const LogLinearPolicy& theta, const TabularPolicy& target,
                             const StateDistribution& d);

BoundReport lemma1_bound(const TabularMdp& mdp, const TabularPolicy& pi, const TabularPolicy& target);

struct Lemma2Errors {
    double err_r = 0.0;
    double err_p = 0.0;
};

/// Err terms under d^{p1}.
Lemma2Errors lemma2_errors(const TabularMdp& mdp, const TabularPolicy& p1, const TabularPolicy& p2);
/// perf_diff(p2, p1) against the error-term bound; `reward_free` drops the reward term.
BoundReport lemma2_bound(const TabularMdp& mdp, const TabularPolicy& p1, const TabularPolicy& p2,
                         bool reward_free = false);

bool action_independent_rewards(const TabularMdp& mdp, double tol = 0.0);

struct BisimError {
    double reward_aliasing = 0.0;
    double latent_transition_aliasing = 0.0;
};

BisimError bisim_error(const TabularMdp& mdp, const TabularPhi& phi, const StateDistribution& d_off);

struct McPoint {
    int n = 0;
    double mean = 0.0;
    double std_error = 0.0;
    double bound = 0.0;
    bool holds = false;
};

/// Expected perf diff of tabular BC over phi from n target demos, against the sample-efficiency bound.
std::vector<McPoint> thm3_experiment(const TreeEnv& env, const TabularPhi& phi, const ModelPredictions& preds,
                                     const std::vector<int>& n_values, int trials, std::uint64_t seed);

/// E[TV(rho, rho_hat_n)] for Dirichlet(1) rho over k outcomes, against 0.5 sqrt(k/n).
std::vector<McPoint> empirical_tv_check(int k, const std::vector<int>& n_values, int trials, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Property suites

struct SuiteSummary {
    std::string suite;
    int instances = 0;
    int violations = 0;
    double max_negative_slack = 0.0;
    double min_slack = kInf;

    void add(const BoundReport& report);
};

SuiteSummary thm1_suite(int instances, std::uint64_t seed, bool reward_free = false);
SuiteSummary thm2_suite(int instances, std::uint64_t seed);
SuiteSummary lemma1_suite(int instances, std::uint64_t seed);
SuiteSummary lemma2_suite(int instances, std::uint64_t seed, bool action_independent = false);

void write_suite_csv(std::ostream& os, const std::vector<SuiteSummary>& rows);

/// Random tabular MDP with Dirichlet rows; rewards uniform in [-r_max, r_max] (or per-state when action_independent).
TabularMdp random_mdp(Rng& rng, int n_states, int n_actions, double gamma, bool action_independent = false);
TabularPolicy random_policy(Rng& rng, int n_states, int n_actions, double deterministic_prob = 0.0);

}  // namespace repbc
