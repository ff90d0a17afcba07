#include "repbc/bounds.hpp"

#include "repbc/bc.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace repbc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_preds(const TabularMdp& mdp, const StateDistribution& d, const ModelPredictions& preds) {
    const int S = mdp.n_states();
    const int A = mdp.n_actions();
    if (d.size() != S) throw std::invalid_argument("bounds: distribution length mismatch");
    if (preds.reward.rows() != S || preds.reward.cols() != A)
        throw std::invalid_argument("bounds: reward prediction shape mismatch");
    if (preds.transition.rows() != static_cast<Eigen::Index>(S) * A || preds.transition.cols() != S)
        throw std::invalid_argument("bounds: transition prediction shape mismatch");
}

/// sum_z d_Z(z) KL(pi_{*,Z}(z) || pi_Z(z)).
double latent_bc_kl(const Marginalized& marg, const LatentTabularPolicy& pi_z) {
    double total = 0.0;
    for (int z = 0; z < marg.latent.size(); ++z) {
        const double w = marg.latent.probs[z];
        if (w <= 0.0) continue;
        const double k = kl(row_span(marg.policy.probs, z), row_span(pi_z.probs, z));
        if (std::isinf(k)) return kInf;
        total += w * k;
    }
    return std::max(total, 0.0);
}

double sqrt_half(double x) { return std::isinf(x) ? kInf : std::sqrt(0.5 * std::max(x, 0.0)); }

void finish(BoundReport& r) {
    if (std::isinf(r.rhs)) {
        r.slack = kInf;
        r.flags.push_back("rhs-infinite");
    } else {
        r.slack = r.rhs - r.lhs;
    }
}

}  // namespace

double LinearLatentModels::r_norm() const { return r.size() ? r.cwiseAbs().maxCoeff() : 0.0; }

double LinearLatentModels::psi_norm() const {
    double out = 0.0;
    for (const auto& p : psi)
        if (p.size()) out = std::max(out, p.cwiseAbs().maxCoeff());
    return out;
}

ModelPredictions predict(const TabularLatentModels& models, const TabularPhi& phi) {
    phi.validate();
    if (models.latent_count() != phi.latent_count) throw std::invalid_argument("predict: latent count mismatch");
    const int S = phi.n_states();
    const int A = models.n_actions();
    if (models.dynamics.rows() != static_cast<Eigen::Index>(models.latent_count()) * A || models.dynamics.cols() != S)
        throw std::invalid_argument("predict: dynamics shape mismatch");
    ModelPredictions out;
    out.reward.resize(S, A);
    out.transition.resize(static_cast<Eigen::Index>(S) * A, S);
    for (int s = 0; s < S; ++s) {
        const int z = phi(s);
        out.reward.row(s) = models.reward.row(z);
        for (int a = 0; a < A; ++a)
            out.transition.row(static_cast<Eigen::Index>(s) * A + a) =
                models.dynamics.row(static_cast<Eigen::Index>(z) * A + a);
    }
    return out;
}

LinearPrediction predict(const LinearLatentModels& models, const Matrix& features, bool project) {
    const int A = models.n_actions();
    if (features.cols() != models.latent_dim()) throw std::invalid_argument("predict: latent dim mismatch");
    if (static_cast<int>(models.psi.size()) != A) throw std::invalid_argument("predict: psi must have one table per action");
    const auto S = features.rows();
    LinearPrediction out;
    out.predictions.reward = (features * models.r).cwiseMax(-models.r_max).cwiseMin(models.r_max);
    out.predictions.transition.resize(S * A, S);
    double tv_sum = 0.0;
    for (int a = 0; a < A; ++a) {
        if (models.psi[a].rows() != S || models.psi[a].cols() != features.cols())
            throw std::invalid_argument("predict: psi shape mismatch");
        const Matrix raw = features * models.psi[a].transpose();
        for (Eigen::Index s = 0; s < S; ++s) {
            Eigen::RowVectorXd row = raw.row(s);
            if (project) {
                Eigen::RowVectorXd post = row.cwiseMax(kProbFloor);
                post /= post.sum();
                const double t = 0.5 * (row - post).cwiseAbs().sum();
                out.max_projection_tv = std::max(out.max_projection_tv, t);
                tv_sum += t;
                row = post;
            }
            out.predictions.transition.row(s * A + a) = row;
        }
    }
    out.mean_projection_tv = tv_sum / static_cast<double>(S * A);
    return out;
}

TabularLatentModels best_response_models(const TabularMdp& mdp, const TabularPhi& phi, const StateDistribution& d_off) {
    phi.validate();
    const int S = mdp.n_states();
    const int A = mdp.n_actions();
    if (phi.n_states() != S || d_off.size() != S) throw std::invalid_argument("best_response_models: shape mismatch");
    const int Z = phi.latent_count;
    TabularLatentModels m;
    m.reward = Matrix::Zero(Z, A);
    m.dynamics = Matrix::Zero(static_cast<Eigen::Index>(Z) * A, S);
    Vector mass = Vector::Zero(Z);
    for (int s = 0; s < S; ++s) {
        const double w = d_off.probs[s];
        if (w <= 0.0) continue;
        const int z = phi(s);
        mass[z] += w;
        m.reward.row(z) += w * mdp.reward().row(s);
        for (int a = 0; a < A; ++a)
            m.dynamics.row(static_cast<Eigen::Index>(z) * A + a) += w * mdp.transition().row(mdp.index(s, a));
    }
    for (int z = 0; z < Z; ++z) {
        for (int a = 0; a < A; ++a) {
            auto row = m.dynamics.row(static_cast<Eigen::Index>(z) * A + a);
            if (mass[z] > 0.0)
                row /= mass[z];
            else
                row.setConstant(1.0 / S);
        }
        if (mass[z] > 0.0) m.reward.row(z) /= mass[z];
    }
    return m;
}

TabularLatentModels canonical_models(const TreeEnv& env) {
    const int A = env.mdp.n_actions();
    const int C = env.canonical_mdp.n_states();
    const int dup = env.spec.duplication;
    TabularLatentModels m;
    m.reward = env.canonical_mdp.reward();
    m.dynamics = Matrix::Zero(static_cast<Eigen::Index>(C) * A, env.mdp.n_states());
    for (int z = 0; z < C; ++z)
        for (int a = 0; a < A; ++a)
            for (int c = 0; c < C; ++c) {
                const double p = env.canonical_mdp.p(z, a, c);
                for (int j = 0; j < dup; ++j) m.dynamics(static_cast<Eigen::Index>(z) * A + a, c * dup + j) = p / dup;
            }
    return m;
}

void make_reward_agnostic(ModelPredictions& preds, const TabularMdp& mdp, const StateDistribution& d_off) {
    check_preds(mdp, d_off, preds);
    const double mean = d_off.probs.dot(mdp.reward().rowwise().mean());
    preds.reward.setConstant(mean);
}

double j_reward(const TabularMdp& mdp, const StateDistribution& d_off, const ModelPredictions& preds) {
    check_preds(mdp, d_off, preds);
    const double A = mdp.n_actions();
    double total = 0.0;
    for (int s = 0; s < mdp.n_states(); ++s) {
        const double w = d_off.probs[s];
        if (w <= 0.0) continue;
        total += w * (mdp.reward().row(s) - preds.reward.row(s)).squaredNorm() / A;
    }
    return std::sqrt(std::max(total, 0.0));
}

double j_trans(const TabularMdp& mdp, const StateDistribution& d_off, const ModelPredictions& preds) {
    check_preds(mdp, d_off, preds);
    const int A = mdp.n_actions();
    double total = 0.0;
    for (int s = 0; s < mdp.n_states(); ++s) {
        const double w = d_off.probs[s];
        if (w <= 0.0) continue;
        for (int a = 0; a < A; ++a) {
            const double k = kl(mdp.next_dist(s, a), row_span(preds.transition, mdp.index(s, a)));
            if (std::isinf(k)) return kInf;
            total += w * k / A;
        }
    }
    return std::sqrt(std::max(0.5 * total, 0.0));
}

double j_reward(const TabularMdp& mdp, const StateDistribution& d_off, const TabularPhi& phi,
                const TabularLatentModels& models) {
    return j_reward(mdp, d_off, predict(models, phi));
}

double j_trans(const TabularMdp& mdp, const StateDistribution& d_off, const TabularPhi& phi,
               const TabularLatentModels& models) {
    return j_trans(mdp, d_off, predict(models, phi));
}

double epsilon_t(double j_t, int n_actions, double gamma, double r_max) {
    if (j_t == 0.0) return 0.0;
    return 2.0 * gamma * n_actions * r_max / ((1.0 - gamma) * (1.0 - gamma)) * j_t;
}

double epsilon_rt(double j_r, double j_t, int n_actions, double gamma, double r_max) {
    if (!(j_r >= 0.0) || !(j_t >= 0.0)) throw std::invalid_argument("epsilon_rt: inputs must be non-negative");
    return n_actions / (1.0 - gamma) * j_r + epsilon_t(j_t, n_actions, gamma, r_max);
}

double offline_term(double chi2_value, double eps) {
    if (eps == 0.0) return 0.0;
    return (1.0 + std::sqrt(chi2_value)) * eps;
}

BoundReport::BoundReport()
    : j_r(kNaN), j_t(kNaN), eps_rt(kNaN), chi2(kNaN), offline_term(kNaN), bc_kl(kNaN), bc_term(kNaN),
      grad_l1(kNaN), constant_c(kNaN), grad_term(kNaN), err_r(kNaN), err_p(kNaN) {}

nlohmann::json to_json(const BoundReport& r) {
    nlohmann::json j = {{"bound", r.bound}};
    auto put = [&](const char* key, double v) {
        if (std::isnan(v)) return;
        if (std::isinf(v))
            j[key] = v > 0 ? "inf" : "-inf";
        else
            j[key] = v;
    };
    put("j_r", r.j_r);
    put("j_t", r.j_t);
    put("eps_rt", r.eps_rt);
    put("chi2", r.chi2);
    put("offline_term", r.offline_term);
    put("bc_kl", r.bc_kl);
    put("bc_term", r.bc_term);
    put("grad_l1", r.grad_l1);
    put("constant_c", r.constant_c);
    put("grad_term", r.grad_term);
    put("err_r", r.err_r);
    put("err_p", r.err_p);
    put("lhs", r.lhs);
    put("rhs", r.rhs);
    put("slack", r.slack);
    j["reward_free"] = r.reward_free;
    j["holds"] = r.holds();
    j["flags"] = r.flags;
    return j;
}

bool action_independent_rewards(const TabularMdp& mdp, double tol) {
    for (int s = 0; s < mdp.n_states(); ++s)
        if (mdp.reward().row(s).maxCoeff() - mdp.reward().row(s).minCoeff() > tol) return false;
    return true;
}

BoundReport thm1_bound(const TabularMdp& mdp, const TabularPhi& phi, const ModelPredictions& preds,
                       const LatentTabularPolicy& pi_z, const TabularPolicy& target, const StateDistribution& d_off,
                       const Thm1Options& options) {
    check_same_shape(mdp, target);
    check_preds(mdp, d_off, preds);
    if (pi_z.latent_count() != phi.latent_count || pi_z.n_actions() != mdp.n_actions())
        throw std::invalid_argument("thm1_bound: latent policy shape mismatch");
    if (options.reward_free && !action_independent_rewards(mdp))
        throw std::invalid_argument("thm1_bound: reward-free variant needs action-independent rewards");
    const double g = mdp.gamma();
    const double horizon2 = (1.0 - g) * (1.0 - g);
    BoundReport r;
    r.bound = "theorem1";
    r.reward_free = options.reward_free;
    r.lhs = perf_diff(mdp, lift(pi_z, phi), target);
    const StateDistribution d_star = visitation(mdp, target);
    r.chi2 = chi2(d_star.span(), d_off.span());
    r.j_t = j_trans(mdp, d_off, preds);
    if (options.reward_free) {
        r.eps_rt = epsilon_t(r.j_t, mdp.n_actions(), g, mdp.r_max());
        r.flags.push_back("reward-free");
    } else {
        r.j_r = j_reward(mdp, d_off, preds);
        r.eps_rt = epsilon_rt(r.j_r, r.j_t, mdp.n_actions(), g, mdp.r_max());
    }
    r.offline_term = offline_term(r.chi2, r.eps_rt);
    r.bc_kl = latent_bc_kl(marginalize(phi, target, d_star), pi_z);
    r.constant_c = (options.reward_free ? 2.0 * g : 2.0) * mdp.r_max() / horizon2;
    r.bc_term = r.bc_kl == 0.0 ? 0.0 : r.constant_c * sqrt_half(r.bc_kl);
    if (std::isinf(r.chi2)) r.flags.push_back("support-violated");
    if (std::isinf(r.bc_kl)) r.flags.push_back("bc-kl-infinite");
    r.rhs = r.offline_term + r.bc_term;
    finish(r);
    return r;
}

Matrix loglinear_bc_gradient(const Matrix& features, const LogLinearPolicy& theta, const TabularPolicy& target,
                             const StateDistribution& d) {
    if (features.rows() != target.n_states() || d.size() != target.n_states())
        throw std::invalid_argument("loglinear_bc_gradient: shape mismatch");
    if (theta.latent_dim() != features.cols() || theta.n_actions() != target.n_actions())
        throw std::invalid_argument("loglinear_bc_gradient: theta shape mismatch");
    Matrix resid(features.rows(), theta.n_actions());
    for (Eigen::Index s = 0; s < features.rows(); ++s)
        resid.row(s) = d.probs[s] *
                       (theta.action_probs(features.row(s).transpose()).transpose() - target.probs.row(s));
    return features.transpose() * resid;
}

BoundReport thm2_bound(const TabularMdp& mdp, const Matrix& features, const LinearLatentModels& models,
                       const ModelPredictions& preds, const LogLinearPolicy& theta, const TabularPolicy& target,
                       const StateDistribution& d_off, GradientMode mode, const Dataset* demos) {
    check_same_shape(mdp, target);
    check_preds(mdp, d_off, preds);
    if (features.rows() != mdp.n_states()) throw std::invalid_argument("thm2_bound: feature rows mismatch");
    const double g = mdp.gamma();
    BoundReport r;
    r.bound = "theorem2";
    r.lhs = perf_diff(mdp, lift(theta, features), target);
    const StateDistribution d_star = visitation(mdp, target);
    r.chi2 = chi2(d_star.span(), d_off.span());
    r.j_r = j_reward(mdp, d_off, preds);
    r.j_t = j_trans(mdp, d_off, preds);
    r.eps_rt = epsilon_rt(r.j_r, r.j_t, mdp.n_actions(), g, mdp.r_max());
    r.offline_term = offline_term(r.chi2, r.eps_rt);
    Matrix grad;
    if (mode == GradientMode::exact) {
        grad = loglinear_bc_gradient(features, theta, target, d_star);
    } else {
        if (!demos || demos->empty()) throw std::invalid_argument("thm2_bound: demos mode needs demonstrations");
        Matrix x(static_cast<Eigen::Index>(demos->size()), features.cols());
        std::vector<int> actions;
        for (std::size_t i = 0; i < demos->size(); ++i) {
            x.row(static_cast<Eigen::Index>(i)) = features.row(demos->records[i].state);
            actions.push_back(demos->records[i].action);
        }
        loglinear_loss(x, actions, theta.theta, &grad);
        r.flags.push_back("empirical-gradient");
    }
    r.grad_l1 = grad.cwiseAbs().sum();
    r.constant_c = models.r_norm() / (1.0 - g) + g * mdp.r_max() * models.psi_norm() / ((1.0 - g) * (1.0 - g));
    r.grad_term = r.grad_l1 == 0.0 ? 0.0 : r.constant_c * r.grad_l1;
    if (std::isinf(r.chi2)) r.flags.push_back("support-violated");
    r.rhs = r.offline_term + r.grad_term;
    finish(r);
    return r;
}

BoundReport lemma1_bound(const TabularMdp& mdp, const TabularPolicy& pi, const TabularPolicy& target) {
    check_same_shape(mdp, pi);
    check_same_shape(mdp, target);
    BoundReport r;
    r.bound = "lemma1";
    r.lhs = perf_diff(mdp, pi, target);
    const StateDistribution d_star = visitation(mdp, target);
    double total = 0.0;
    for (int s = 0; s < mdp.n_states(); ++s) {
        const double w = d_star.probs[s];
        if (w <= 0.0) continue;
        const double k = kl(row_span(target.probs, s), row_span(pi.probs, s));
        if (std::isinf(k)) {
            total = kInf;
            break;
        }
        total += w * k;
    }
    r.bc_kl = std::max(total, 0.0);
    const double g = mdp.gamma();
    r.constant_c = mdp.r_max() / ((1.0 - g) * (1.0 - g));
    r.bc_term = r.bc_kl == 0.0 ? 0.0 : (std::isinf(r.bc_kl) ? kInf : r.constant_c * std::sqrt(2.0 * r.bc_kl));
    if (std::isinf(r.bc_kl)) r.flags.push_back("bc-kl-infinite");
    r.rhs = r.bc_term;
    finish(r);
    return r;
}

Lemma2Errors lemma2_errors(const TabularMdp& mdp, const TabularPolicy& p1, const TabularPolicy& p2) {
    check_same_shape(mdp, p1);
    check_same_shape(mdp, p2);
    const int S = mdp.n_states();
    const int A = mdp.n_actions();
    const StateDistribution d1 = visitation(mdp, p1);
    double reward_gap = 0.0;
    Eigen::RowVectorXd next_gap = Eigen::RowVectorXd::Zero(S);
    for (int s = 0; s < S; ++s) {
        const double w = d1.probs[s];
        if (w == 0.0) continue;
        for (int a = 0; a < A; ++a) {
            const double dp = w * (p1.probs(s, a) - p2.probs(s, a));
            if (dp == 0.0) continue;
            reward_gap += dp * mdp.reward(s, a);
            next_gap += dp * mdp.transition().row(mdp.index(s, a));
        }
    }
    return {std::abs(reward_gap), next_gap.cwiseAbs().sum()};
}

BoundReport lemma2_bound(const TabularMdp& mdp, const TabularPolicy& p1, const TabularPolicy& p2, bool reward_free) {
    if (reward_free && !action_independent_rewards(mdp))
        throw std::invalid_argument("lemma2_bound: reward-free variant needs action-independent rewards");
    const Lemma2Errors e = lemma2_errors(mdp, p1, p2);
    const double g = mdp.gamma();
    BoundReport r;
    r.bound = "lemma2";
    r.reward_free = reward_free;
    r.err_p = e.err_p;
    r.lhs = perf_diff(mdp, p2, p1);
    r.rhs = g * mdp.r_max() * e.err_p / ((1.0 - g) * (1.0 - g));
    if (reward_free) {
        r.flags.push_back("reward-free");
    } else {
        r.err_r = e.err_r;
        r.rhs += e.err_r / (1.0 - g);
    }
    finish(r);
    return r;
}

BisimError bisim_error(const TabularMdp& mdp, const TabularPhi& phi, const StateDistribution& d_off) {
    phi.validate();
    const int S = mdp.n_states();
    const int A = mdp.n_actions();
    const int Z = phi.latent_count;
    if (phi.n_states() != S || d_off.size() != S) throw std::invalid_argument("bisim_error: shape mismatch");
    // Latent pushforward of every next-state distribution.
    Matrix push = Matrix::Zero(static_cast<Eigen::Index>(S) * A, Z);
    for (Eigen::Index row = 0; row < push.rows(); ++row)
        for (int n = 0; n < S; ++n) push(row, phi(n)) += mdp.transition()(row, n);
    Matrix mean_r = Matrix::Zero(Z, A);
    Matrix mean_push = Matrix::Zero(static_cast<Eigen::Index>(Z) * A, Z);
    Vector mass = Vector::Zero(Z);
    for (int s = 0; s < S; ++s) {
        const double w = d_off.probs[s];
        if (w <= 0.0) continue;
        const int z = phi(s);
        mass[z] += w;
        mean_r.row(z) += w * mdp.reward().row(s);
        for (int a = 0; a < A; ++a) mean_push.row(static_cast<Eigen::Index>(z) * A + a) += w * push.row(mdp.index(s, a));
    }
    for (int z = 0; z < Z; ++z) {
        if (mass[z] <= 0.0) continue;
        mean_r.row(z) /= mass[z];
        for (int a = 0; a < A; ++a) mean_push.row(static_cast<Eigen::Index>(z) * A + a) /= mass[z];
    }
    BisimError out;
    for (int s = 0; s < S; ++s) {
        const double w = d_off.probs[s];
        if (w <= 0.0) continue;
        const int z = phi(s);
        for (int a = 0; a < A; ++a) {
            out.reward_aliasing += w / A * std::abs(mdp.reward(s, a) - mean_r(z, a));
            out.latent_transition_aliasing +=
                w / A * tv(row_span(push, mdp.index(s, a)), row_span(mean_push, static_cast<Eigen::Index>(z) * A + a));
        }
    }
    return out;
}

namespace {

McPoint summarize(int n, const std::vector<double>& xs, double bound_without_se) {
    McPoint p;
    p.n = n;
    const double m = static_cast<double>(xs.size());
    for (double x : xs) p.mean += x;
    p.mean /= m;
    double var = 0.0;
    for (double x : xs) var += (x - p.mean) * (x - p.mean);
    var = xs.size() > 1 ? var / (m - 1.0) : 0.0;
    p.std_error = std::sqrt(var / m);
    p.bound = bound_without_se + 3.0 * p.std_error;
    p.holds = p.mean <= p.bound + kSlackTol;
    return p;
}

}  // namespace

std::vector<McPoint> thm3_experiment(const TreeEnv& env, const TabularPhi& phi, const ModelPredictions& preds,
                                     const std::vector<int>& n_values, int trials, std::uint64_t seed) {
    if (trials < 1) throw std::invalid_argument("thm3_experiment: trials must be >= 1");
    const TabularMdp& mdp = env.mdp;
    const TabularPolicy target = optimal_policy(mdp);
    const StateDistribution d_off = visitation(mdp, TabularPolicy::uniform(mdp.n_states(), mdp.n_actions()));
    const StateDistribution d_star = visitation(mdp, target);
    const double eps = epsilon_rt(j_reward(mdp, d_off, preds), j_trans(mdp, d_off, preds), mdp.n_actions(),
                                  mdp.gamma(), mdp.r_max());
    const double off = offline_term(chi2(d_off.span(), d_star.span()), eps);
    const double g = mdp.gamma();
    const double c = 2.0 * mdp.r_max() / ((1.0 - g) * (1.0 - g));
    std::vector<McPoint> curve;
    for (int n : n_values) {
        if (n < 1) throw std::invalid_argument("thm3_experiment: n must be >= 1");
        std::vector<double> diffs;
        diffs.reserve(static_cast<std::size_t>(trials));
        for (int t = 0; t < trials; ++t) {
            const Dataset demos = sample_demos(env, target, static_cast<std::size_t>(n),
                                               derive_seed(seed, "thm3", static_cast<std::uint64_t>(n) * 1000003ULL + t));
            diffs.push_back(perf_diff(mdp, lift(bc_tabular(demos, phi, mdp.n_actions()), phi), target));
        }
        const double rate = std::sqrt(static_cast<double>(phi.latent_count) * mdp.n_actions() / n);
        curve.push_back(summarize(n, diffs, off + c * rate));
    }
    return curve;
}

std::vector<McPoint> empirical_tv_check(int k, const std::vector<int>& n_values, int trials, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("empirical_tv_check: k must be >= 2");
    if (trials < 1) throw std::invalid_argument("empirical_tv_check: trials must be >= 1");
    std::vector<McPoint> curve;
    for (int n : n_values) {
        if (n < 1) throw std::invalid_argument("empirical_tv_check: n must be >= 1");
        Rng rng(derive_seed(seed, "empirical-tv", static_cast<std::uint64_t>(n)));
        std::vector<double> tvs;
        std::vector<double> counts(static_cast<std::size_t>(k));
        for (int t = 0; t < trials; ++t) {
            const std::vector<double> rho = rng.dirichlet(static_cast<std::size_t>(k), 1.0);
            std::fill(counts.begin(), counts.end(), 0.0);
            for (int i = 0; i < n; ++i) counts[rng.categorical(rho)] += 1.0;
            for (double& c : counts) c /= n;
            tvs.push_back(tv(rho, counts));
        }
        curve.push_back(summarize(n, tvs, 0.5 * std::sqrt(static_cast<double>(k) / n)));
    }
    return curve;
}

// ---------------------------------------------------------------------------
// Property suites

void SuiteSummary::add(const BoundReport& report) {
    ++instances;
    min_slack = std::min(min_slack, report.slack);
    if (!report.holds()) ++violations;
    if (report.slack < 0.0) max_negative_slack = std::max(max_negative_slack, -report.slack);
}

void write_suite_csv(std::ostream& os, const std::vector<SuiteSummary>& rows) {
    os << "suite,instances,violations,max_negative_slack\n" << std::setprecision(17);
    for (const auto& r : rows) os << r.suite << ',' << r.instances << ',' << r.violations << ',' << r.max_negative_slack << '\n';
}

namespace {

Matrix dirichlet_rows(Rng& rng, Eigen::Index rows, int cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto p = rng.dirichlet(static_cast<std::size_t>(cols), 1.0);
        for (int j = 0; j < cols; ++j) m(i, j) = p[static_cast<std::size_t>(j)];
    }
    return m;
}

Vector dirichlet_vector(Rng& rng, int n) {
    const auto p = rng.dirichlet(static_cast<std::size_t>(n), 1.0);
    return Eigen::Map<const Vector>(p.data(), n);
}

int uniform_int(Rng& rng, int lo, int hi) { return lo + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(hi - lo + 1))); }

/// Zero with probability 0.3, otherwise uniform on (0, 1).
double noise_level(Rng& rng) { return rng.uniform() < 0.3 ? 0.0 : rng.uniform(); }

StateDistribution random_offline(Rng& rng, const StateDistribution& d_star) {
    const double lam = rng.uniform() < 0.2 ? 1.0 : rng.uniform();
    Vector p = lam * d_star.probs + (1.0 - lam) * dirichlet_vector(rng, d_star.size());
    return StateDistribution(p / p.sum());
}

TabularPhi random_phi(Rng& rng, int n_states) {
    TabularPhi phi;
    phi.latent_count = uniform_int(rng, 1, n_states);
    for (int s = 0; s < n_states; ++s) phi.latent_of.push_back(uniform_int(rng, 0, phi.latent_count - 1));
    return phi;
}

double random_gamma(Rng& rng) { return rng.uniform(0.0, 0.97); }

}  // namespace

TabularMdp random_mdp(Rng& rng, int n_states, int n_actions, double gamma, bool action_independent) {
    Matrix transition = dirichlet_rows(rng, static_cast<Eigen::Index>(n_states) * n_actions, n_states);
    Matrix reward(n_states, n_actions);
    for (int s = 0; s < n_states; ++s) {
        const double base = rng.uniform(-1.0, 1.0);
        for (int a = 0; a < n_actions; ++a) reward(s, a) = action_independent ? base : rng.uniform(-1.0, 1.0);
    }
    return TabularMdp(std::move(transition), std::move(reward), dirichlet_vector(rng, n_states), gamma, 1.0);
}

TabularPolicy random_policy(Rng& rng, int n_states, int n_actions, double deterministic_prob) {
    Matrix probs = dirichlet_rows(rng, n_states, n_actions);
    if (rng.uniform() < deterministic_prob) {
        probs.setZero();
        for (int s = 0; s < n_states; ++s) probs(s, uniform_int(rng, 0, n_actions - 1)) = 1.0;
    }
    return TabularPolicy(std::move(probs));
}

SuiteSummary thm1_suite(int instances, std::uint64_t seed, bool reward_free) {
    SuiteSummary out;
    out.suite = reward_free ? "theorem1_reward_free" : "theorem1";
    for (int i = 0; i < instances; ++i) {
        Rng rng(derive_seed(seed, out.suite, static_cast<std::uint64_t>(i)));
        const int S = uniform_int(rng, 1, 10);
        const int A = uniform_int(rng, 1, 4);
        const TabularMdp mdp = random_mdp(rng, S, A, random_gamma(rng), reward_free);
        const TabularPhi phi = random_phi(rng, S);
        const TabularPolicy target = random_policy(rng, S, A, 0.5);
        const StateDistribution d_star = visitation(mdp, target);
        const StateDistribution d_off = random_offline(rng, d_star);

        TabularLatentModels models = best_response_models(mdp, phi, d_off);
        const double eta = noise_level(rng);
        for (Eigen::Index z = 0; z < models.reward.rows(); ++z)
            for (int a = 0; a < A; ++a) models.reward(z, a) = (1.0 - eta) * models.reward(z, a) + eta * rng.uniform(-1.0, 1.0);
        models.dynamics = (1.0 - eta) * models.dynamics + eta * dirichlet_rows(rng, models.dynamics.rows(), S);

        const Marginalized marg = marginalize(phi, target, d_star);
        const double eta_pi = noise_level(rng);
        Matrix pz = (1.0 - eta_pi) * marg.policy.probs + eta_pi * dirichlet_rows(rng, phi.latent_count, A);
        out.add(thm1_bound(mdp, phi, predict(models, phi), LatentTabularPolicy(std::move(pz)), target, d_off,
                           {reward_free}));
    }
    return out;
}

SuiteSummary thm2_suite(int instances, std::uint64_t seed) {
    SuiteSummary out;
    out.suite = "theorem2";
    for (int i = 0; i < instances; ++i) {
        Rng rng(derive_seed(seed, out.suite, static_cast<std::uint64_t>(i)));
        const int S = uniform_int(rng, 1, 10);
        const int A = uniform_int(rng, 1, 4);
        const int d = uniform_int(rng, 1, 6);
        const double gamma = random_gamma(rng);

        // Features on the simplex, psi columns are distributions over next states.
        const Matrix features = dirichlet_rows(rng, S, d);
        LinearLatentModels models;
        models.r_max = 1.0;
        models.r.resize(d, A);
        for (Eigen::Index j = 0; j < models.r.size(); ++j) models.r.data()[j] = rng.uniform(-1.0, 1.0);
        for (int a = 0; a < A; ++a) models.psi.push_back(dirichlet_rows(rng, d, S).transpose());
        const ModelPredictions exact = predict(models, features, false).predictions;

        const double lam = noise_level(rng);
        Matrix transition = (1.0 - lam) * exact.transition + lam * dirichlet_rows(rng, exact.transition.rows(), S);
        Matrix reward(S, A);
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) reward(s, a) = (1.0 - lam) * exact.reward(s, a) + lam * rng.uniform(-1.0, 1.0);
        const TabularMdp mdp(std::move(transition), std::move(reward), dirichlet_vector(rng, S), gamma, 1.0);

        const TabularPolicy target = random_policy(rng, S, A, 0.5);
        const StateDistribution d_star = visitation(mdp, target);
        const StateDistribution d_off = random_offline(rng, d_star);

        LogLinearPolicy theta{Matrix(d, A)};
        for (Eigen::Index j = 0; j < theta.theta.size(); ++j) theta.theta.data()[j] = rng.normal();
        if (rng.uniform() < 0.5) {
            // Descend toward the exact stationary point to exercise small-gradient cases.
            for (int step = 0; step < 300; ++step)
                theta.theta -= 2.0 * loglinear_bc_gradient(features, theta, target, d_star);
        }
        out.add(thm2_bound(mdp, features, models, exact, theta, target, d_off, GradientMode::exact));
    }
    return out;
}

SuiteSummary lemma1_suite(int instances, std::uint64_t seed) {
    SuiteSummary out;
    out.suite = "lemma1";
    for (int i = 0; i < instances; ++i) {
        Rng rng(derive_seed(seed, out.suite, static_cast<std::uint64_t>(i)));
        const int S = uniform_int(rng, 1, 10);
        const int A = uniform_int(rng, 1, 4);
        const TabularMdp mdp = random_mdp(rng, S, A, random_gamma(rng));
        const TabularPolicy target = random_policy(rng, S, A, 0.5);
        const double eta = rng.uniform() < 0.1 ? 0.0 : rng.uniform();
        const TabularPolicy pi((1.0 - eta) * target.probs + eta * dirichlet_rows(rng, S, A));
        out.add(lemma1_bound(mdp, pi, target));
    }
    return out;
}

SuiteSummary lemma2_suite(int instances, std::uint64_t seed, bool action_independent) {
    SuiteSummary out;
    out.suite = action_independent ? "lemma2_reward_free" : "lemma2";
    for (int i = 0; i < instances; ++i) {
        Rng rng(derive_seed(seed, out.suite, static_cast<std::uint64_t>(i)));
        const int S = uniform_int(rng, 1, 10);
        const int A = uniform_int(rng, 1, 4);
        const TabularMdp mdp = random_mdp(rng, S, A, random_gamma(rng), action_independent);
        const TabularPolicy p1 = random_policy(rng, S, A, 0.5);
        const double eta = noise_level(rng);
        const TabularPolicy p2((1.0 - eta) * p1.probs + eta * random_policy(rng, S, A, 0.5).probs);
        out.add(lemma2_bound(mdp, p1, p2, action_independent));
    }
    return out;
}

}  // namespace repbc
