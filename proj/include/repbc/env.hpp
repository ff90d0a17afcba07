#pragma once

// Tree benchmark, bisimulation counterexample, optimal policies and sampled datasets.

#include "repbc/mdp.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace repbc {

/// Scope over which reward means are rescaled to a maximum of 1.
enum class RewardNormalization { level, node };

struct TreeEnvSpec {
    int duplication = 10;
    double intended_child_prob = 0.8;
    double dirichlet_alpha = 1.0;
    int reward_power = 3;
    RewardNormalization reward_normalization = RewardNormalization::node;
    double reward_noise_std = 1.0;
    double gamma = 0.95;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Canonical layout: node 0 is the root, 1-2 the second level, 3-6 the leaf
/// decision level, 7 the absorbing terminal which resets to the root.
inline constexpr int kCanonicalNodes = 8;
inline constexpr int kTerminalNode = 7;
inline constexpr int kTreeHorizon = 3;

struct TreeEnv {
    TreeEnvSpec spec;
    TabularMdp mdp;
    TabularMdp canonical_mdp;
    /// Ground-truth abstraction: state id -> canonical node.
    TabularPhi canonical_map;
    int horizon = kTreeHorizon;

    int duplication() const { return spec.duplication; }
};

TreeEnv make_tree_env(const TreeEnvSpec& spec);

struct OptimalSolution {
    TabularPolicy policy;
    Vector values;
    int iterations = 0;
    double residual = 0.0;
};

/// Value iteration until the Bellman residual is <= tol, then greedy (lowest action id on ties).
OptimalSolution solve_optimal(const TabularMdp& mdp, double tol = 1e-10);
TabularPolicy optimal_policy(const TabularMdp& mdp, double tol = 1e-10);

/// Expected mean per-step reward of `pi` over `horizon`-step episodes from the initial distribution.
double mean_step_reward(const TabularMdp& mdp, const TabularPolicy& pi, int horizon);

struct Counterexample {
    TabularMdp mdp;
    TabularPhi phi;
    TabularPolicy target;
};

/// Six-state, two-action instance where a representation with zero
/// bisimulation error still aliases states the target treats differently.
/// State ids 0..5 stand for s1..s6; action 0 is `left`, 1 is `right`.
Counterexample make_counterexample();

struct CounterexampleReport {
    StateDistribution target_visitation;
    double reward_aliasing = 0.0;
    double latent_transition_aliasing = 0.0;
    double target_performance = 0.0;
    double lifted_performance = 0.0;
    double perf_diff = 0.0;
    double min_j_trans = 0.0;

    bool bisimulation_exact(double tol = 1e-12) const {
        return reward_aliasing <= tol && latent_transition_aliasing <= tol;
    }
};

/// Exact evaluation with d_off = d^{pi*}: bisimulation error, the loss of the
/// lifted marginal policy, and the smallest dynamics error any latent model can reach.
CounterexampleReport verify_counterexample(const TabularMdp& mdp, const TabularPhi& phi, const TabularPolicy& target);

nlohmann::json to_json(const CounterexampleReport& report);

// ---------------------------------------------------------------------------
// Datasets

enum class DatasetKind { offline, demos };

struct Transition {
    int episode = 0;
    int t = 0;
    int state = 0;
    int action = 0;
    double reward = 0.0;
    int next_state = 0;
};

struct Dataset {
    std::vector<Transition> records;
    DatasetKind kind = DatasetKind::offline;
    std::string env_fingerprint;
    std::uint64_t seed = 0;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }
    /// Throws unless every id is within the given bounds.
    void validate(int n_states, int n_actions) const;
};

std::string env_fingerprint(const TabularMdp& mdp);

/// Uniform-random-policy episodes; `count` transitions, rounded down to whole episodes.
Dataset sample_offline(const TreeEnv& env, std::size_t count, std::uint64_t seed);
/// Target-policy episodes; `count` transitions, rounded down to whole episodes.
Dataset sample_demos(const TreeEnv& env, const TabularPolicy& target, std::size_t count, std::uint64_t seed);

/// i.i.d. tuples s ~ d, a ~ Unif, s' ~ P(s, a) for non-episodic MDPs.
Dataset sample_iid(const TabularMdp& mdp, const StateDistribution& d, std::size_t count, std::uint64_t seed,
                   double reward_noise_std = 0.0);

std::string to_string(DatasetKind kind);
DatasetKind dataset_kind_from_string(const std::string& s);

void write_dataset_csv(std::ostream& os, const Dataset& data);
Dataset read_dataset_csv(std::istream& is);
nlohmann::json dataset_sidecar(const Dataset& data);
void apply_sidecar(Dataset& data, const nlohmann::json& sidecar);

/// Writes `<stem>.csv` and `<stem>.json`.
void save_dataset(const std::string& stem, const Dataset& data);
Dataset load_dataset(const std::string& stem);

nlohmann::json to_json(const TreeEnv& env);
TreeEnvSpec tree_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TreeEnvSpec& spec);

}  // namespace repbc
