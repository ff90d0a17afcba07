#include "repbc/bc.hpp"

#include "repbc/optim.hpp"
#include "repbc/rng.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace repbc {

namespace {

Vector softmax(const Vector& logits) {
    Vector p = (logits.array() - logits.maxCoeff()).exp().matrix();
    return p / p.sum();
}

void check_demos(const Dataset& demos, const Matrix& features, int n_actions) {
    if (demos.empty()) throw std::invalid_argument("bc: empty demonstrations");
    if (n_actions < 1) throw std::invalid_argument("bc: n_actions must be >= 1");
    demos.validate(static_cast<int>(features.rows()), n_actions);
    if (!features.allFinite()) throw std::domain_error("bc: non-finite features");
}

struct Batch {
    Matrix x;
    std::vector<int> actions;
};

Batch gather(const Dataset& demos, const Matrix& features, const std::vector<std::size_t>& idx) {
    Batch b;
    b.x.resize(static_cast<Eigen::Index>(idx.size()), features.cols());
    b.actions.reserve(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto& r = demos.records[idx[i]];
        b.x.row(static_cast<Eigen::Index>(i)) = features.row(r.state);
        b.actions.push_back(r.action);
    }
    return b;
}

Batch gather_all(const Dataset& demos, const Matrix& features) {
    std::vector<std::size_t> idx(demos.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return gather(demos, features, idx);
}

std::vector<std::size_t> sample_batch(Rng& rng, std::size_t n, int batch_size) {
    std::vector<std::size_t> idx;
    if (batch_size <= 0 || static_cast<std::size_t>(batch_size) >= n) {
        idx.resize(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        return idx;
    }
    idx.reserve(static_cast<std::size_t>(batch_size));
    for (int i = 0; i < batch_size; ++i) idx.push_back(rng.uniform_index(n));
    return idx;
}

double l1(const Matrix& m) { return m.cwiseAbs().sum(); }

}  // namespace

void BcConfig::validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("bc config: lr must be positive");
    if (steps < 0) throw std::invalid_argument("bc config: steps must be >= 0");
    if (batch_size < 0) throw std::invalid_argument("bc config: batch_size must be >= 0");
    if (hidden_units < 1) throw std::invalid_argument("bc config: hidden_units must be >= 1");
    if (!(grad_tol >= 0.0)) throw std::invalid_argument("bc config: grad_tol must be >= 0");
    if (log_every < 1) throw std::invalid_argument("bc config: log_every must be >= 1");
}

LatentTabularPolicy bc_tabular(const Dataset& demos, const TabularPhi& phi, int n_actions) {
    if (demos.empty()) throw std::invalid_argument("bc_tabular: empty demonstrations");
    phi.validate();
    demos.validate(phi.n_states(), n_actions);
    Matrix counts = Matrix::Zero(phi.latent_count, n_actions);
    for (const auto& r : demos.records) counts(phi(r.state), r.action) += 1.0;
    for (Eigen::Index z = 0; z < counts.rows(); ++z) {
        const double total = counts.row(z).sum();
        if (total > 0.0)
            counts.row(z) /= total;
        else
            counts.row(z).setConstant(1.0 / n_actions);
    }
    return LatentTabularPolicy(std::move(counts));
}

double loglinear_loss(const Matrix& x, const std::vector<int>& actions, const Matrix& theta, Matrix* grad) {
    const auto n = x.rows();
    if (n == 0 || static_cast<std::size_t>(n) != actions.size()) throw std::invalid_argument("loglinear_loss: bad batch");
    if (theta.rows() != x.cols()) throw std::invalid_argument("loglinear_loss: theta shape mismatch");
    Matrix logits = x * theta;
    double loss = 0.0;
    Matrix resid(n, theta.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mx = logits.row(i).maxCoeff();
        const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp().matrix();
        const double z = e.sum();
        const int a = actions[static_cast<std::size_t>(i)];
        loss += std::log(z) + mx - logits(i, a);
        resid.row(i) = e / z;
        resid(i, a) -= 1.0;
    }
    if (grad) *grad = x.transpose() * resid / static_cast<double>(n);
    return loss / static_cast<double>(n);
}

Vector MlpPolicy::action_probs(const Eigen::Ref<const Vector>& z) const {
    const Vector h = (w1 * z + b1).cwiseMax(0.0);
    return softmax(w2 * h + b2);
}

double mlp_loss(const Matrix& x, const std::vector<int>& actions, const MlpPolicy& net, MlpPolicy* grad) {
    const auto n = x.rows();
    if (n == 0 || static_cast<std::size_t>(n) != actions.size()) throw std::invalid_argument("mlp_loss: bad batch");
    if (net.w1.cols() != x.cols()) throw std::invalid_argument("mlp_loss: input width mismatch");
    Matrix pre = x * net.w1.transpose();
    pre.rowwise() += net.b1.transpose();
    const Matrix h = pre.cwiseMax(0.0);
    Matrix logits = h * net.w2.transpose();
    logits.rowwise() += net.b2.transpose();
    double loss = 0.0;
    Matrix dlogits(n, net.n_actions());
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mx = logits.row(i).maxCoeff();
        const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp().matrix();
        const double z = e.sum();
        const int a = actions[static_cast<std::size_t>(i)];
        loss += std::log(z) + mx - logits(i, a);
        dlogits.row(i) = e / z;
        dlogits(i, a) -= 1.0;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    if (grad) {
        dlogits *= inv_n;
        grad->w2 = dlogits.transpose() * h;
        grad->b2 = dlogits.colwise().sum().transpose();
        Matrix dh = dlogits * net.w2;
        dh.array() *= (pre.array() > 0.0).cast<double>();
        grad->w1 = dh.transpose() * x;
        grad->b1 = dh.colwise().sum().transpose();
    }
    return loss * inv_n;
}

LogLinearFit bc_loglinear(const Dataset& demos, const Matrix& features, int n_actions, const BcConfig& cfg) {
    cfg.validate();
    check_demos(demos, features, n_actions);
    Rng rng(derive_seed(cfg.seed, "bc-loglinear"));
    const Batch all = gather_all(demos, features);

    LogLinearFit fit;
    fit.policy.theta = Matrix::Zero(features.cols(), n_actions);
    AdamState adam = AdamState::for_size(fit.policy.theta.size(), cfg.lr);
    Matrix grad;
    const bool full = cfg.batch_size <= 0 || static_cast<std::size_t>(cfg.batch_size) >= demos.size();
    fit.initial_loss = loglinear_loss(all.x, all.actions, fit.policy.theta, &grad);
    double loss = fit.initial_loss;
    for (int step = 0;; ++step) {
        const double g1 = l1(grad);
        if (step % cfg.log_every == 0) fit.log.push_back({step, loss, g1});
        if (step >= cfg.steps || g1 <= cfg.grad_tol) {
            if (fit.log.back().step != step) fit.log.push_back({step, loss, g1});
            fit.steps_run = step;
            fit.final_loss = loss;
            fit.final_grad_l1 = g1;
            break;
        }
        if (full) {
            adam_step(adam, fit.policy.theta, grad);
        } else {
            const Batch b = gather(demos, features, sample_batch(rng, demos.size(), cfg.batch_size));
            Matrix g;
            loglinear_loss(b.x, b.actions, fit.policy.theta, &g);
            adam_step(adam, fit.policy.theta, g);
        }
        loss = loglinear_loss(all.x, all.actions, fit.policy.theta, &grad);
    }
    return fit;
}

namespace {

double mlp_grad_l1(const MlpPolicy& g) { return l1(g.w1) + g.b1.cwiseAbs().sum() + l1(g.w2) + g.b2.cwiseAbs().sum(); }

}  // namespace

MlpFit bc_mlp(const Dataset& demos, const Matrix& features, int n_actions, const BcConfig& cfg) {
    cfg.validate();
    check_demos(demos, features, n_actions);
    const int d = static_cast<int>(features.cols());
    const int hidden = cfg.hidden_units;
    Rng init(derive_seed(cfg.seed, "bc-mlp-init"));
    Rng rng(derive_seed(cfg.seed, "bc-mlp"));

    MlpFit fit;
    MlpPolicy& net = fit.policy;
    net.w1.resize(hidden, d);
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    for (Eigen::Index i = 0; i < net.w1.size(); ++i) net.w1.data()[i] = sd * init.normal();
    net.b1 = Vector::Zero(hidden);
    net.w2 = Matrix::Zero(n_actions, hidden);
    net.b2 = Vector::Zero(n_actions);

    AdamState a_w1 = AdamState::for_size(net.w1.size(), cfg.lr);
    AdamState a_b1 = AdamState::for_size(net.b1.size(), cfg.lr);
    AdamState a_w2 = AdamState::for_size(net.w2.size(), cfg.lr);
    AdamState a_b2 = AdamState::for_size(net.b2.size(), cfg.lr);

    const Batch all = gather_all(demos, features);
    const bool full = cfg.batch_size <= 0 || static_cast<std::size_t>(cfg.batch_size) >= demos.size();
    MlpPolicy grad;
    fit.initial_loss = mlp_loss(all.x, all.actions, net, &grad);
    double loss = fit.initial_loss;
    for (int step = 0;; ++step) {
        const double g1 = mlp_grad_l1(grad);
        if (step % cfg.log_every == 0) fit.log.push_back({step, loss, g1});
        if (step >= cfg.steps || g1 <= cfg.grad_tol) {
            if (fit.log.back().step != step) fit.log.push_back({step, loss, g1});
            fit.steps_run = step;
            fit.final_loss = loss;
            fit.final_grad_l1 = g1;
            break;
        }
        MlpPolicy g;
        if (full) {
            g = grad;
        } else {
            const Batch b = gather(demos, features, sample_batch(rng, demos.size(), cfg.batch_size));
            mlp_loss(b.x, b.actions, net, &g);
        }
        adam_step(a_w1, net.w1, g.w1);
        adam_step(a_b1, net.b1, g.b1);
        adam_step(a_w2, net.w2, g.w2);
        adam_step(a_b2, net.b2, g.b2);
        loss = mlp_loss(all.x, all.actions, net, &grad);
    }
    return fit;
}

TabularPolicy lift(const LatentTabularPolicy& pi_z, const TabularPhi& phi) {
    phi.validate();
    if (pi_z.latent_count() != phi.latent_count) throw std::invalid_argument("lift: latent count mismatch");
    Matrix probs(phi.n_states(), pi_z.n_actions());
    for (int s = 0; s < phi.n_states(); ++s) probs.row(s) = pi_z.probs.row(phi(s));
    return TabularPolicy(std::move(probs));
}

TabularPolicy lift(const LogLinearPolicy& pi, const Matrix& features) {
    if (pi.latent_dim() != features.cols()) throw std::invalid_argument("lift: latent dim mismatch");
    Matrix probs(features.rows(), pi.n_actions());
    for (Eigen::Index s = 0; s < features.rows(); ++s)
        probs.row(s) = pi.action_probs(features.row(s).transpose()).transpose();
    return TabularPolicy(std::move(probs));
}

TabularPolicy lift(const MlpPolicy& pi, const Matrix& features) {
    if (pi.latent_dim() != features.cols()) throw std::invalid_argument("lift: latent dim mismatch");
    Matrix probs(features.rows(), pi.n_actions());
    for (Eigen::Index s = 0; s < features.rows(); ++s)
        probs.row(s) = pi.action_probs(features.row(s).transpose()).transpose();
    return TabularPolicy(std::move(probs));
}

namespace {

nlohmann::json matrix_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        rows.push_back(std::vector<double>(m.data() + i * m.cols(), m.data() + (i + 1) * m.cols()));
    return rows;
}

Matrix matrix_from_json(const nlohmann::json& j) {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    if (rows.empty()) return Matrix();
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows[0].size()) throw std::invalid_argument("policy json: ragged matrix");
        for (std::size_t k = 0; k < rows[i].size(); ++k)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    }
    return m;
}

nlohmann::json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

nlohmann::json to_json(const AnyPolicy& policy) {
    struct Visitor {
        nlohmann::json operator()(const LatentTabularPolicy& p) const {
            return {{"variant", "tabular"}, {"parameters", {{"probs", matrix_json(p.probs)}}}};
        }
        nlohmann::json operator()(const LogLinearPolicy& p) const {
            return {{"variant", "loglinear"}, {"parameters", {{"theta", matrix_json(p.theta)}}}};
        }
        nlohmann::json operator()(const MlpPolicy& p) const {
            return {{"variant", "mlp"},
                    {"parameters",
                     {{"w1", matrix_json(p.w1)},
                      {"b1", vector_json(p.b1)},
                      {"w2", matrix_json(p.w2)},
                      {"b2", vector_json(p.b2)}}}};
        }
    };
    return std::visit(Visitor{}, policy);
}

AnyPolicy policy_from_json(const nlohmann::json& j) {
    const std::string variant = j.at("variant").get<std::string>();
    const auto& p = j.at("parameters");
    if (variant == "tabular") return LatentTabularPolicy(matrix_from_json(p.at("probs")));
    if (variant == "loglinear") return LogLinearPolicy{matrix_from_json(p.at("theta"))};
    if (variant == "mlp") {
        MlpPolicy net{matrix_from_json(p.at("w1")), vector_from_json(p.at("b1")), matrix_from_json(p.at("w2")),
                      vector_from_json(p.at("b2"))};
        if (net.b1.size() != net.w1.rows() || net.w2.cols() != net.w1.rows() || net.b2.size() != net.w2.rows())
            throw std::invalid_argument("policy json: inconsistent mlp shapes");
        return net;
    }
    throw std::invalid_argument("policy json: unknown variant " + variant);
}

void write_bc_log_csv(std::ostream& os, const std::vector<BcLogRow>& log) {
    os << "step,bc_loss,grad_l1\n" << std::setprecision(17);
    for (const auto& r : log) os << r.step << ',' << r.bc_loss << ',' << r.grad_l1 << '\n';
}

}  // namespace repbc
