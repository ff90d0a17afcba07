#include "repbc/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace repbc {

namespace {

std::string fmt_index(const std::string& what, Eigen::Index i) {
    std::ostringstream os;
    os << what << "[" << i << "]";
    return os.str();
}

void check_rows(const Matrix& m, double tol, const std::string& what) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) check_simplex(row_span(m, r), tol, fmt_index(what, r));
}

}  // namespace

void check_simplex(std::span<const double> p, double tol, const std::string& what) {
    if (p.empty()) throw std::invalid_argument(what + ": empty probability vector");
    double total = 0.0;
    for (double x : p) {
        if (!std::isfinite(x) || x < -tol) throw std::invalid_argument(what + ": negative or non-finite probability");
        total += x;
    }
    if (std::abs(total - 1.0) > tol) {
        std::ostringstream os;
        os << what << ": probabilities sum to " << total;
        throw std::invalid_argument(os.str());
    }
}

TabularMdp::TabularMdp(Matrix transition, Matrix reward, Vector initial, double gamma, double r_max)
    : transition_(std::move(transition)),
      reward_(std::move(reward)),
      initial_(std::move(initial)),
      gamma_(gamma),
      r_max_(r_max) {
    const auto s = reward_.rows();
    const auto a = reward_.cols();
    if (s < 1 || a < 1) throw std::invalid_argument("TabularMdp: need at least one state and one action");
    if (transition_.rows() != s * a || transition_.cols() != s)
        throw std::invalid_argument("TabularMdp: transition must be (S*A) x S");
    if (initial_.size() != s) throw std::invalid_argument("TabularMdp: initial distribution has wrong length");
    if (!(gamma_ >= 0.0 && gamma_ < 1.0)) throw std::invalid_argument("TabularMdp: gamma must lie in [0, 1)");
    if (!(r_max_ > 0.0) || !std::isfinite(r_max_)) throw std::invalid_argument("TabularMdp: r_max must be positive");
    check_rows(transition_, kConstructTol, "transition");
    check_simplex(as_span(initial_), kConstructTol, "initial");
    for (Eigen::Index i = 0; i < reward_.size(); ++i) {
        const double r = reward_.data()[i];
        if (!std::isfinite(r) || std::abs(r) > r_max_ * (1.0 + 1e-12))
            throw std::invalid_argument("TabularMdp: reward outside [-r_max, r_max]");
    }
}

TabularMdp TabularMdp::with_gamma(double gamma) const {
    return TabularMdp(transition_, reward_, initial_, gamma, r_max_);
}

TabularPolicy::TabularPolicy(Matrix p) : probs(std::move(p)) { check_rows(probs, kConstructTol, "policy"); }

TabularPolicy TabularPolicy::uniform(int n_states, int n_actions) {
    return TabularPolicy(Matrix::Constant(n_states, n_actions, 1.0 / n_actions));
}

TabularPolicy TabularPolicy::deterministic(const std::vector<int>& actions, int n_actions) {
    Matrix p = Matrix::Zero(static_cast<Eigen::Index>(actions.size()), n_actions);
    for (std::size_t s = 0; s < actions.size(); ++s) {
        if (actions[s] < 0 || actions[s] >= n_actions) throw std::invalid_argument("deterministic policy: bad action");
        p(static_cast<Eigen::Index>(s), actions[s]) = 1.0;
    }
    return TabularPolicy(std::move(p));
}

LatentTabularPolicy::LatentTabularPolicy(Matrix p) : probs(std::move(p)) {
    check_rows(probs, kComputeTol, "latent policy");
}

Vector LogLinearPolicy::action_probs(const Eigen::Ref<const Vector>& z) const {
    if (z.size() != theta.rows()) throw std::invalid_argument("LogLinearPolicy: latent dimension mismatch");
    Vector logits = theta.transpose() * z;
    const double m = logits.maxCoeff();
    Vector e = (logits.array() - m).exp();
    return e / e.sum();
}

StateDistribution::StateDistribution(Vector p, double tol) : probs(std::move(p)) {
    check_simplex(as_span(probs), tol, "state distribution");
}

TabularPhi TabularPhi::identity(int n_states) {
    TabularPhi phi;
    phi.latent_count = n_states;
    phi.latent_of.resize(static_cast<std::size_t>(n_states));
    for (int s = 0; s < n_states; ++s) phi.latent_of[static_cast<std::size_t>(s)] = s;
    return phi;
}

TabularPhi TabularPhi::constant(int n_states) {
    return TabularPhi{std::vector<int>(static_cast<std::size_t>(n_states), 0), 1};
}

void TabularPhi::validate() const {
    if (latent_count < 1) throw std::invalid_argument("TabularPhi: latent_count must be positive");
    for (int z : latent_of)
        if (z < 0 || z >= latent_count) throw std::out_of_range("TabularPhi: latent index out of range");
}

void check_same_shape(const TabularMdp& mdp, const TabularPolicy& pi) {
    if (pi.n_states() != mdp.n_states() || pi.n_actions() != mdp.n_actions())
        throw std::invalid_argument("policy shape does not match MDP");
}

Matrix policy_transition(const TabularMdp& mdp, const TabularPolicy& pi) {
    check_same_shape(mdp, pi);
    const int S = mdp.n_states();
    const int A = mdp.n_actions();
    Matrix out = Matrix::Zero(S, S);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            const double w = pi.probs(s, a);
            if (w != 0.0) out.row(s) += w * mdp.transition().row(mdp.index(s, a));
        }
    return out;
}

StateDistribution visitation(const TabularMdp& mdp, const TabularPolicy& pi) {
    const Matrix p_pi = policy_transition(mdp, pi);
    const auto S = p_pi.rows();
    Eigen::MatrixXd system = Eigen::MatrixXd::Identity(S, S) - mdp.gamma() * Eigen::MatrixXd(p_pi.transpose());
    Vector d = (1.0 - mdp.gamma()) * system.partialPivLu().solve(mdp.initial());
    for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = std::max(d[i], 0.0);
    d /= d.sum();
    return StateDistribution(std::move(d));
}

double performance(const TabularMdp& mdp, const TabularPolicy& pi) {
    const Matrix p_pi = policy_transition(mdp, pi);
    const auto S = p_pi.rows();
    const Vector r_pi = mdp.reward().cwiseProduct(pi.probs).rowwise().sum();
    Eigen::MatrixXd system = Eigen::MatrixXd::Identity(S, S) - mdp.gamma() * Eigen::MatrixXd(p_pi);
    const Vector values = system.partialPivLu().solve(r_pi);
    return mdp.initial().dot(values);
}

double perf_diff(const TabularMdp& mdp, const TabularPolicy& p1, const TabularPolicy& p2) {
    return std::abs(performance(mdp, p1) - performance(mdp, p2));
}

double kl(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw std::invalid_argument("kl: length mismatch");
    check_simplex(p, kComputeTol, "kl p");
    check_simplex(q, kComputeTol, "kl q");
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        if (q[i] <= 0.0) return kInf;
        total += p[i] * std::log(p[i] / q[i]);
    }
    return std::max(total, 0.0);
}

double tv(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw std::invalid_argument("tv: length mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) total += std::abs(p[i] - q[i]);
    return 0.5 * total;
}

double chi2(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw std::invalid_argument("chi2: length mismatch");
    check_simplex(p, kComputeTol, "chi2 p");
    check_simplex(q, kComputeTol, "chi2 q");
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (q[i] > 0.0) {
            const double diff = p[i] - q[i];
            total += diff * diff / q[i];
        } else if (p[i] > 0.0) {
            return kInf;
        }
    }
    return total;
}

Marginalized marginalize(const TabularPhi& phi, const TabularPolicy& pi, const StateDistribution& d) {
    phi.validate();
    if (phi.n_states() != pi.n_states() || d.size() != pi.n_states())
        throw std::invalid_argument("marginalize: shape mismatch");
    const int Z = phi.latent_count;
    const int A = pi.n_actions();
    Vector dz = Vector::Zero(Z);
    Matrix mass = Matrix::Zero(Z, A);
    for (int s = 0; s < pi.n_states(); ++s) {
        const int z = phi(s);
        dz[z] += d.probs[s];
        mass.row(z) += d.probs[s] * pi.probs.row(s);
    }
    for (int z = 0; z < Z; ++z) {
        if (dz[z] > 0.0)
            mass.row(z) /= mass.row(z).sum();
        else
            mass.row(z).setConstant(1.0 / A);
    }
    return {StateDistribution(std::move(dz)), LatentTabularPolicy(std::move(mass))};
}

namespace {

nlohmann::json matrix_rows(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        auto span = row_span(m, r);
        rows.push_back(std::vector<double>(span.begin(), span.end()));
    }
    return rows;
}

Matrix rows_matrix(const nlohmann::json& rows, Eigen::Index n_rows, Eigen::Index n_cols, const char* what) {
    if (!rows.is_array() || static_cast<Eigen::Index>(rows.size()) != n_rows)
        throw std::invalid_argument(std::string(what) + ": wrong number of rows");
    Matrix m(n_rows, n_cols);
    for (Eigen::Index r = 0; r < n_rows; ++r) {
        const auto& row = rows[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n_cols)
            throw std::invalid_argument(std::string(what) + ": wrong row length");
        for (Eigen::Index c = 0; c < n_cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

}  // namespace

nlohmann::json to_json(const TabularMdp& mdp) {
    const int S = mdp.n_states();
    const int A = mdp.n_actions();
    nlohmann::json transition = nlohmann::json::array();
    for (int s = 0; s < S; ++s) {
        nlohmann::json per_action = nlohmann::json::array();
        for (int a = 0; a < A; ++a) {
            auto span = mdp.next_dist(s, a);
            per_action.push_back(std::vector<double>(span.begin(), span.end()));
        }
        transition.push_back(std::move(per_action));
    }
    return {
        {"n_states", S},
        {"n_actions", A},
        {"gamma", mdp.gamma()},
        {"r_max", mdp.r_max()},
        {"initial", std::vector<double>(mdp.initial().data(), mdp.initial().data() + S)},
        {"reward", matrix_rows(mdp.reward())},
        {"transition", std::move(transition)},
    };
}

TabularMdp mdp_from_json(const nlohmann::json& j) {
    const int S = j.at("n_states").get<int>();
    const int A = j.at("n_actions").get<int>();
    if (S < 1 || A < 1) throw std::invalid_argument("mdp json: n_states and n_actions must be positive");
    const auto& tr = j.at("transition");
    if (!tr.is_array() || static_cast<int>(tr.size()) != S) throw std::invalid_argument("mdp json: transition shape");
    Matrix transition(static_cast<Eigen::Index>(S) * A, S);
    for (int s = 0; s < S; ++s) {
        Matrix block = rows_matrix(tr[static_cast<std::size_t>(s)], A, S, "transition");
        transition.middleRows(static_cast<Eigen::Index>(s) * A, A) = block;
    }
    const auto init = j.at("initial").get<std::vector<double>>();
    if (static_cast<int>(init.size()) != S) throw std::invalid_argument("mdp json: initial length");
    Vector initial = Eigen::Map<const Vector>(init.data(), S);
    return TabularMdp(std::move(transition), rows_matrix(j.at("reward"), S, A, "reward"), std::move(initial),
                      j.at("gamma").get<double>(), j.at("r_max").get<double>());
}

nlohmann::json to_json(const TabularPolicy& pi) {
    return {{"variant", "tabular"}, {"parameters", {{"probs", matrix_rows(pi.probs)}}}};
}

TabularPolicy tabular_policy_from_json(const nlohmann::json& j) {
    const auto& rows = j.at("parameters").at("probs");
    if (!rows.is_array() || rows.empty()) throw std::invalid_argument("policy json: empty probs");
    return TabularPolicy(rows_matrix(rows, static_cast<Eigen::Index>(rows.size()),
                                     static_cast<Eigen::Index>(rows[0].size()), "probs"));
}

}  // namespace repbc
