#pragma once

// Exact finite MDPs, policies, state distributions and divergences.

#include <Eigen/Dense>

#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace repbc {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Tolerance for probability vectors supplied at construction.
inline constexpr double kConstructTol = 1e-12;
/// Tolerance for probability vectors produced by a computation.
inline constexpr double kComputeTol = 1e-10;

inline std::span<const double> row_span(const Matrix& m, Eigen::Index r) {
    return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}
inline std::span<const double> as_span(const Vector& v) {
    return {v.data(), static_cast<std::size_t>(v.size())};
}

/// Throws std::invalid_argument unless `p` is a probability vector within `tol`.
void check_simplex(std::span<const double> p, double tol, const std::string& what);

class TabularMdp {
public:
    /// `transition` has one row per (state, action) pair at index s * n_actions + a.
    TabularMdp(Matrix transition, Matrix reward, Vector initial, double gamma, double r_max);

    int n_states() const { return static_cast<int>(reward_.rows()); }
    int n_actions() const { return static_cast<int>(reward_.cols()); }
    double gamma() const { return gamma_; }
    double r_max() const { return r_max_; }

    const Matrix& transition() const { return transition_; }
    const Matrix& reward() const { return reward_; }
    const Vector& initial() const { return initial_; }

    double reward(int s, int a) const { return reward_(s, a); }
    double p(int s, int a, int next) const { return transition_(index(s, a), next); }
    std::span<const double> next_dist(int s, int a) const { return row_span(transition_, index(s, a)); }
    Eigen::Index index(int s, int a) const { return static_cast<Eigen::Index>(s) * n_actions() + a; }

    /// Returns a copy with a different discount.
    TabularMdp with_gamma(double gamma) const;

private:
    Matrix transition_;
    Matrix reward_;
    Vector initial_;
    double gamma_;
    double r_max_;
};

/// Row-stochastic table over states × actions.
struct TabularPolicy {
    Matrix probs;

    TabularPolicy() = default;
    explicit TabularPolicy(Matrix p);

    static TabularPolicy uniform(int n_states, int n_actions);
    /// One-hot policy from an action per state.
    static TabularPolicy deterministic(const std::vector<int>& actions, int n_actions);

    int n_states() const { return static_cast<int>(probs.rows()); }
    int n_actions() const { return static_cast<int>(probs.cols()); }
};

/// Row-stochastic table over latent ids × actions.
struct LatentTabularPolicy {
    Matrix probs;

    LatentTabularPolicy() = default;
    explicit LatentTabularPolicy(Matrix p);

    int latent_count() const { return static_cast<int>(probs.rows()); }
    int n_actions() const { return static_cast<int>(probs.cols()); }
};

/// softmax(thetaᵀz) with theta of shape latent_dim × n_actions.
struct LogLinearPolicy {
    Matrix theta;

    int latent_dim() const { return static_cast<int>(theta.rows()); }
    int n_actions() const { return static_cast<int>(theta.cols()); }

    Vector action_probs(const Eigen::Ref<const Vector>& z) const;
};

struct StateDistribution {
    Vector probs;

    StateDistribution() = default;
    explicit StateDistribution(Vector p, double tol = kComputeTol);

    int size() const { return static_cast<int>(probs.size()); }
    std::span<const double> span() const { return as_span(probs); }
};

/// Discrete state-to-latent map, phi(s) in {0, ..., latent_count - 1}.
struct TabularPhi {
    std::vector<int> latent_of;
    int latent_count = 0;

    static TabularPhi identity(int n_states);
    static TabularPhi constant(int n_states);
    int operator()(int s) const { return latent_of[static_cast<std::size_t>(s)]; }
    int n_states() const { return static_cast<int>(latent_of.size()); }
    void validate() const;
};

/// P_pi[s][s'] = sum_a pi(a|s) P(s'|s,a).
Matrix policy_transition(const TabularMdp& mdp, const TabularPolicy& pi);

/// (1 - gamma) (I - gamma P_piᵀ)^{-1} mu, by dense LU.
StateDistribution visitation(const TabularMdp& mdp, const TabularPolicy& pi);

/// Expected discounted return from the initial distribution.
double performance(const TabularMdp& mdp, const TabularPolicy& pi);

double perf_diff(const TabularMdp& mdp, const TabularPolicy& p1, const TabularPolicy& p2);

/// Divergences return kInf on support violations instead of throwing.
double kl(std::span<const double> p, std::span<const double> q);
double tv(std::span<const double> p, std::span<const double> q);
double chi2(std::span<const double> p, std::span<const double> q);

struct Marginalized {
    StateDistribution latent;
    LatentTabularPolicy policy;
};

/// Pushes (d, pi) through phi. Latents with no mass get the uniform action distribution.
Marginalized marginalize(const TabularPhi& phi, const TabularPolicy& pi, const StateDistribution& d);

nlohmann::json to_json(const TabularMdp& mdp);
TabularMdp mdp_from_json(const nlohmann::json& j);

nlohmann::json to_json(const TabularPolicy& pi);
TabularPolicy tabular_policy_from_json(const nlohmann::json& j);

void check_same_shape(const TabularMdp& mdp, const TabularPolicy& pi);

}  // namespace repbc
