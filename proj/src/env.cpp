#include "repbc/env.hpp"

#include "repbc/bc.hpp"
#include "repbc/bounds.hpp"
#include "repbc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace repbc {

namespace {

constexpr int kMaxDuplication = 1000;

int left_child(int node) { return 2 * node + 1; }

}  // namespace

void TreeEnvSpec::validate() const {
    if (duplication < 1) throw std::invalid_argument("tree spec: duplication must be >= 1");
    if (duplication > kMaxDuplication) throw std::invalid_argument("tree spec: duplication too large for a dense MDP");
    if (!(intended_child_prob > 0.0 && intended_child_prob <= 1.0))
        throw std::invalid_argument("tree spec: intended_child_prob must lie in (0, 1]");
    if (!(dirichlet_alpha > 0.0)) throw std::invalid_argument("tree spec: dirichlet_alpha must be positive");
    if (reward_power < 1) throw std::invalid_argument("tree spec: reward_power must be >= 1");
    if (!(reward_noise_std >= 0.0)) throw std::invalid_argument("tree spec: reward_noise_std must be >= 0");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("tree spec: gamma must lie in [0, 1)");
}

TreeEnv make_tree_env(const TreeEnvSpec& spec) {
    spec.validate();
    constexpr int A = 2;
    constexpr int C = kCanonicalNodes;
    Rng rng(derive_seed(spec.seed, "tree-env"));

    // Reward means: uniform, raised to a power, scaled so the best reward at each depth (or node) is 1.
    Matrix canon_reward = Matrix::Zero(C, A);
    for (int node = 0; node < kTerminalNode; ++node)
        for (int a = 0; a < A; ++a) canon_reward(node, a) = std::pow(rng.uniform(), spec.reward_power);
    if (spec.reward_normalization == RewardNormalization::node) {
        for (int node = 0; node < kTerminalNode; ++node) {
            const double best = canon_reward.row(node).maxCoeff();
            if (best > 0.0) canon_reward.row(node) /= best;
        }
    } else {
        for (int first = 0; first < kTerminalNode; first = 2 * first + 1) {
            const int width = first + 1;
            const double best = canon_reward.middleRows(first, width).maxCoeff();
            if (best > 0.0) canon_reward.middleRows(first, width) /= best;
        }
    }

    Matrix canon_transition = Matrix::Zero(C * A, C);
    for (int node = 0; node < kTerminalNode; ++node) {
        for (int a = 0; a < A; ++a) {
            const auto row = static_cast<Eigen::Index>(node) * A + a;
            if (node < 3) {
                const std::vector<double> explore = rng.dirichlet(2, spec.dirichlet_alpha);
                const int first = left_child(node);
                for (int c = 0; c < 2; ++c)
                    canon_transition(row, first + c) = (1.0 - spec.intended_child_prob) * explore[c];
                canon_transition(row, first + a) += spec.intended_child_prob;
            } else {
                canon_transition(row, kTerminalNode) = 1.0;
            }
        }
    }
    for (int a = 0; a < A; ++a) canon_transition(kTerminalNode * A + a, 0) = 1.0;

    Vector canon_initial = Vector::Zero(C);
    canon_initial[0] = 1.0;
    TabularMdp canonical(canon_transition, canon_reward, canon_initial, spec.gamma, 1.0);

    const int dup = spec.duplication;
    const int S = C * dup;
    TabularPhi cmap;
    cmap.latent_count = C;
    cmap.latent_of.resize(static_cast<std::size_t>(S));
    for (int s = 0; s < S; ++s) cmap.latent_of[static_cast<std::size_t>(s)] = s / dup;

    Matrix transition = Matrix::Zero(static_cast<Eigen::Index>(S) * A, S);
    Matrix reward(S, A);
    for (int s = 0; s < S; ++s) {
        const int node = s / dup;
        reward.row(s) = canon_reward.row(node);
        for (int a = 0; a < A; ++a) {
            const auto row = static_cast<Eigen::Index>(s) * A + a;
            for (int child = 0; child < C; ++child) {
                const double p = canon_transition(node * A + a, child);
                if (p == 0.0) continue;
                for (int j = 0; j < dup; ++j) transition(row, child * dup + j) = p / dup;
            }
        }
    }
    Vector initial = Vector::Zero(S);
    for (int j = 0; j < dup; ++j) initial[j] = 1.0 / dup;

    TabularMdp mdp(std::move(transition), std::move(reward), std::move(initial), spec.gamma, 1.0);
    return TreeEnv{spec, std::move(mdp), std::move(canonical), std::move(cmap), kTreeHorizon};
}

OptimalSolution solve_optimal(const TabularMdp& mdp, double tol) {
    if (!(tol > 0.0)) throw std::invalid_argument("solve_optimal: tol must be positive");
    const int S = mdp.n_states();
    const int A = mdp.n_actions();
    Vector values = Vector::Zero(S);
    Matrix q(S, A);
    auto backup = [&](const Vector& v) {
        const Vector next = mdp.transition() * v;
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) q(s, a) = mdp.reward(s, a) + mdp.gamma() * next[mdp.index(s, a)];
    };
    OptimalSolution out;
    for (;;) {
        backup(values);
        Vector updated = q.rowwise().maxCoeff();
        out.residual = (updated - values).cwiseAbs().maxCoeff();
        values = std::move(updated);
        ++out.iterations;
        if (out.residual <= tol) break;
    }
    backup(values);
    std::vector<int> greedy(static_cast<std::size_t>(S), 0);
    for (int s = 0; s < S; ++s) {
        int best = 0;
        for (int a = 1; a < A; ++a)
            if (q(s, a) > q(s, best) + 1e-12 * std::max(1.0, std::abs(q(s, best)))) best = a;
        greedy[static_cast<std::size_t>(s)] = best;
    }
    out.policy = TabularPolicy::deterministic(greedy, A);
    out.values = std::move(values);
    return out;
}

TabularPolicy optimal_policy(const TabularMdp& mdp, double tol) { return solve_optimal(mdp, tol).policy; }

double mean_step_reward(const TabularMdp& mdp, const TabularPolicy& pi, int horizon) {
    check_same_shape(mdp, pi);
    if (horizon < 1) throw std::invalid_argument("mean_step_reward: horizon must be >= 1");
    const Matrix p_pi = policy_transition(mdp, pi);
    const Vector r_pi = mdp.reward().cwiseProduct(pi.probs).rowwise().sum();
    Eigen::RowVectorXd d = mdp.initial().transpose();
    double total = 0.0;
    for (int t = 0; t < horizon; ++t) {
        total += d.dot(r_pi.transpose());
        d = d * p_pi;
    }
    return total / horizon;
}

Counterexample make_counterexample() {
    constexpr int S = 6;
    constexpr int A = 2;
    constexpr int L = 0;
    constexpr int R = 1;
    // next[s][a], ids 0..5 for s1..s6.
    constexpr int next[S][A] = {
        {0, 0},  // s1: absorbing
        {3, 2},  // s2: L->s4, R->s3
        {4, 5},  // s3: L->s5, R->s6
        {4, 1},  // s4: L->s5, R->s2
        {0, 5},  // s5: L->s1, R->s6
        {1, 2},  // s6: L->s2, R->s3
    };
    Matrix transition = Matrix::Zero(S * A, S);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) transition(s * A + a, next[s][a]) = 1.0;
    Matrix reward = Matrix::Zero(S, A);
    reward(3, L) = 1.0;
    Vector initial = Vector::Zero(S);
    initial[2] = 1.0;

    TabularPhi phi;
    phi.latent_count = 3;
    for (int s = 0; s < S; ++s) phi.latent_of.push_back((s + 1) % 3);

    const std::vector<int> target_actions = {L, L, L, L, R, L};
    return Counterexample{TabularMdp(std::move(transition), std::move(reward), std::move(initial), 0.95, 1.0),
                          std::move(phi), TabularPolicy::deterministic(target_actions, A)};
}

CounterexampleReport verify_counterexample(const TabularMdp& mdp, const TabularPhi& phi, const TabularPolicy& target) {
    if (mdp.n_states() != 6 || mdp.n_actions() != 2)
        throw std::invalid_argument("verify_counterexample: expected 6 states and 2 actions");
    check_same_shape(mdp, target);
    if (phi.n_states() != 6) throw std::invalid_argument("verify_counterexample: phi must cover 6 states");

    CounterexampleReport report;
    report.target_visitation = visitation(mdp, target);
    const auto bisim = bisim_error(mdp, phi, report.target_visitation);
    report.reward_aliasing = bisim.reward_aliasing;
    report.latent_transition_aliasing = bisim.latent_transition_aliasing;

    const auto marg = marginalize(phi, target, report.target_visitation);
    const TabularPolicy lifted = lift(marg.policy, phi);
    report.target_performance = performance(mdp, target);
    report.lifted_performance = performance(mdp, lifted);
    report.perf_diff = std::abs(report.target_performance - report.lifted_performance);

    const TabularLatentModels best = best_response_models(mdp, phi, report.target_visitation);
    report.min_j_trans = j_trans(mdp, report.target_visitation, predict(best, phi));
    return report;
}

nlohmann::json to_json(const CounterexampleReport& r) {
    return {
        {"target_visitation", std::vector<double>(r.target_visitation.probs.data(),
                                                  r.target_visitation.probs.data() + r.target_visitation.size())},
        {"reward_aliasing", r.reward_aliasing},
        {"latent_transition_aliasing", r.latent_transition_aliasing},
        {"target_performance", r.target_performance},
        {"lifted_performance", r.lifted_performance},
        {"perf_diff", r.perf_diff},
        {"min_j_trans", r.min_j_trans},
    };
}

// ---------------------------------------------------------------------------
// Datasets

void Dataset::validate(int n_states, int n_actions) const {
    for (const auto& r : records) {
        if (r.state < 0 || r.state >= n_states || r.next_state < 0 || r.next_state >= n_states)
            throw std::out_of_range("dataset: state id outside environment");
        if (r.action < 0 || r.action >= n_actions) throw std::out_of_range("dataset: action id outside environment");
        if (!std::isfinite(r.reward)) throw std::invalid_argument("dataset: non-finite reward");
    }
}

std::string env_fingerprint(const TabularMdp& mdp) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(to_json(mdp).dump());
    return os.str();
}

namespace {

std::size_t whole_episodes(std::size_t count, int horizon, const char* what) {
    if (count < 1) throw std::invalid_argument(std::string(what) + ": count must be >= 1");
    if (count % static_cast<std::size_t>(horizon) != 0)
        std::cerr << "warning: " << what << ": count " << count << " is not a multiple of the episode length "
                  << horizon << "; rounding down\n";
    return count / static_cast<std::size_t>(horizon);
}

Dataset rollouts(const TreeEnv& env, const TabularPolicy& pi, std::size_t episodes, Rng& rng, DatasetKind kind,
                 std::uint64_t seed) {
    const TabularMdp& mdp = env.mdp;
    Dataset data;
    data.kind = kind;
    data.seed = seed;
    data.env_fingerprint = env_fingerprint(mdp);
    data.records.reserve(episodes * static_cast<std::size_t>(env.horizon));
    const auto init = as_span(mdp.initial());
    for (std::size_t e = 0; e < episodes; ++e) {
        int s = static_cast<int>(rng.categorical(init));
        for (int t = 0; t < env.horizon; ++t) {
            const int a = static_cast<int>(rng.categorical(row_span(pi.probs, s)));
            const double r = mdp.reward(s, a) + env.spec.reward_noise_std * rng.normal();
            const int next = static_cast<int>(rng.categorical(mdp.next_dist(s, a)));
            data.records.push_back({static_cast<int>(e), t, s, a, r, next});
            s = next;
        }
    }
    return data;
}

}  // namespace

Dataset sample_offline(const TreeEnv& env, std::size_t count, std::uint64_t seed) {
    const std::size_t episodes = whole_episodes(count, env.horizon, "sample_offline");
    Rng rng(derive_seed(seed, "offline"));
    return rollouts(env, TabularPolicy::uniform(env.mdp.n_states(), env.mdp.n_actions()), episodes, rng,
                    DatasetKind::offline, seed);
}

Dataset sample_demos(const TreeEnv& env, const TabularPolicy& target, std::size_t count, std::uint64_t seed) {
    check_same_shape(env.mdp, target);
    const std::size_t episodes = whole_episodes(count, env.horizon, "sample_demos");
    Rng rng(derive_seed(seed, "demos"));
    return rollouts(env, target, episodes, rng, DatasetKind::demos, seed);
}

Dataset sample_iid(const TabularMdp& mdp, const StateDistribution& d, std::size_t count, std::uint64_t seed,
                   double reward_noise_std) {
    if (count < 1) throw std::invalid_argument("sample_iid: count must be >= 1");
    if (d.size() != mdp.n_states()) throw std::invalid_argument("sample_iid: distribution length mismatch");
    Rng rng(derive_seed(seed, "iid"));
    Dataset data;
    data.kind = DatasetKind::offline;
    data.seed = seed;
    data.env_fingerprint = env_fingerprint(mdp);
    data.records.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const int s = static_cast<int>(rng.categorical(d.span()));
        const int a = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(mdp.n_actions())));
        const double r = mdp.reward(s, a) + reward_noise_std * rng.normal();
        const int next = static_cast<int>(rng.categorical(mdp.next_dist(s, a)));
        data.records.push_back({static_cast<int>(i), 0, s, a, r, next});
    }
    return data;
}

std::string to_string(DatasetKind kind) { return kind == DatasetKind::offline ? "offline" : "demos"; }

DatasetKind dataset_kind_from_string(const std::string& s) {
    if (s == "offline") return DatasetKind::offline;
    if (s == "demos") return DatasetKind::demos;
    throw std::invalid_argument("unknown dataset kind: " + s);
}

void write_dataset_csv(std::ostream& os, const Dataset& data) {
    os << "episode,t,state,action,reward,next_state\n";
    os << std::setprecision(17);
    for (const auto& r : data.records)
        os << r.episode << ',' << r.t << ',' << r.state << ',' << r.action << ',' << r.reward << ',' << r.next_state
           << '\n';
}

Dataset read_dataset_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw std::invalid_argument("dataset csv: missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "episode,t,state,action,reward,next_state")
        throw std::invalid_argument("dataset csv: unexpected header '" + line + "'");
    Dataset data;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(fields, cell, ',')) cells.push_back(cell);
        if (cells.size() != 6) throw std::invalid_argument("dataset csv: line " + std::to_string(lineno) + " needs 6 fields");
        try {
            data.records.push_back({std::stoi(cells[0]), std::stoi(cells[1]), std::stoi(cells[2]),
                                    std::stoi(cells[3]), std::stod(cells[4]), std::stoi(cells[5])});
        } catch (const std::logic_error&) {
            throw std::invalid_argument("dataset csv: malformed number on line " + std::to_string(lineno));
        }
    }
    return data;
}

nlohmann::json dataset_sidecar(const Dataset& data) {
    return {{"kind", to_string(data.kind)},
            {"seed", data.seed},
            {"env_fingerprint", data.env_fingerprint},
            {"count", data.size()}};
}

void apply_sidecar(Dataset& data, const nlohmann::json& sidecar) {
    data.kind = dataset_kind_from_string(sidecar.at("kind").get<std::string>());
    data.seed = sidecar.at("seed").get<std::uint64_t>();
    data.env_fingerprint = sidecar.at("env_fingerprint").get<std::string>();
    if (sidecar.at("count").get<std::size_t>() != data.size())
        throw std::invalid_argument("dataset sidecar: count does not match csv");
}

void save_dataset(const std::string& stem, const Dataset& data) {
    std::ofstream csv(stem + ".csv");
    if (!csv) throw std::runtime_error("cannot write " + stem + ".csv");
    write_dataset_csv(csv, data);
    std::ofstream side(stem + ".json");
    side << dataset_sidecar(data).dump(2) << '\n';
}

Dataset load_dataset(const std::string& stem) {
    std::ifstream csv(stem + ".csv");
    if (!csv) throw std::runtime_error("cannot read " + stem + ".csv");
    Dataset data = read_dataset_csv(csv);
    std::ifstream side(stem + ".json");
    if (side) apply_sidecar(data, nlohmann::json::parse(side));
    return data;
}

nlohmann::json to_json(const TreeEnvSpec& spec) {
    return {{"type", "tree"},
            {"duplication", spec.duplication},
            {"intended_child_prob", spec.intended_child_prob},
            {"dirichlet_alpha", spec.dirichlet_alpha},
            {"reward_power", spec.reward_power},
            {"reward_normalization", spec.reward_normalization == RewardNormalization::node ? "node" : "level"},
            {"reward_noise_std", spec.reward_noise_std},
            {"gamma", spec.gamma},
            {"seed", spec.seed}};
}

TreeEnvSpec tree_spec_from_json(const nlohmann::json& j) {
    TreeEnvSpec spec;
    spec.duplication = j.value("duplication", spec.duplication);
    spec.intended_child_prob = j.value("intended_child_prob", spec.intended_child_prob);
    spec.dirichlet_alpha = j.value("dirichlet_alpha", spec.dirichlet_alpha);
    spec.reward_power = j.value("reward_power", spec.reward_power);
    spec.reward_noise_std = j.value("reward_noise_std", spec.reward_noise_std);
    const std::string norm = j.value("reward_normalization", std::string("node"));
    if (norm == "node")
        spec.reward_normalization = RewardNormalization::node;
    else if (norm == "level")
        spec.reward_normalization = RewardNormalization::level;
    else
        throw std::invalid_argument("tree spec: reward_normalization must be level or node");
    spec.gamma = j.value("gamma", spec.gamma);
    spec.seed = j.value("seed", spec.seed);
    spec.validate();
    return spec;
}

nlohmann::json to_json(const TreeEnv& env) {
    return {{"spec", to_json(env.spec)},
            {"horizon", env.horizon},
            {"canonical_map", env.canonical_map.latent_of},
            {"fingerprint", env_fingerprint(env.mdp)},
            {"mdp", to_json(env.mdp)},
            {"canonical_mdp", to_json(env.canonical_mdp)}};
}

}  // namespace repbc
