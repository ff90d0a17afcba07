#include "repbc/repr.hpp"

#include "repbc/optim.hpp"
#include "repbc/rng.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <stdexcept>

namespace repbc {

std::string to_string(ReprVariant v) {
    switch (v) {
        case ReprVariant::table: return "table";
        case ReprVariant::svd: return "svd";
        case ReprVariant::energy: return "energy";
        case ReprVariant::fourier: return "fourier";
    }
    return "table";
}

ReprVariant repr_variant_from_string(const std::string& s) {
    if (s == "table") return ReprVariant::table;
    if (s == "svd") return ReprVariant::svd;
    if (s == "energy") return ReprVariant::energy;
    if (s == "fourier") return ReprVariant::fourier;
    throw std::invalid_argument("unknown representation variant: " + s);
}

Representation Representation::from_table(const TabularPhi& phi) {
    phi.validate();
    Representation r;
    r.variant = ReprVariant::table;
    r.table = phi;
    r.features = Matrix::Zero(phi.n_states(), phi.latent_count);
    for (int s = 0; s < phi.n_states(); ++s) r.features(s, phi(s)) = 1.0;
    return r;
}

TabularPhi tabulate(const Matrix& features) {
    std::map<std::vector<double>, int> ids;
    TabularPhi phi;
    for (Eigen::Index s = 0; s < features.rows(); ++s) {
        std::vector<double> key(features.data() + s * features.cols(), features.data() + (s + 1) * features.cols());
        auto [it, inserted] = ids.emplace(std::move(key), static_cast<int>(ids.size()));
        phi.latent_of.push_back(it->second);
    }
    phi.latent_count = static_cast<int>(ids.size());
    return phi;
}

TrainConfig TrainConfig::defaults(double gamma) {
    TrainConfig cfg;
    cfg.alpha_t = 1.0 / (1.0 - gamma);
    return cfg;
}

void TrainConfig::validate() const {
    if (!(alpha_r >= 0.0) || !(alpha_t >= 0.0)) throw std::invalid_argument("train config: alphas must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("train config: lr must be positive");
    if (steps < 0) throw std::invalid_argument("train config: steps must be >= 0");
    if (!(init_std >= 0.0)) throw std::invalid_argument("train config: init_std must be >= 0");
    if (!(decay >= 0.0 && decay < 1.0)) throw std::invalid_argument("train config: decay must lie in [0, 1)");
    if (!(input_scale > 0.0) || !std::isfinite(input_scale))
        throw std::invalid_argument("train config: input_scale must be positive");
    if (log_every < 1) throw std::invalid_argument("train config: log_every must be >= 1");
}

EnergyModel init_energy_model(int n_states, int n_actions, int k, int head_dim, bool head_bias, Vector rho,
                              double init_std, std::uint64_t seed) {
    if (n_states < 1 || n_actions < 1 || k < 1 || head_dim < 1)
        throw std::invalid_argument("energy model: dimensions must be >= 1");
    if (rho.size() != n_states) throw std::invalid_argument("energy model: rho length mismatch");
    check_simplex(as_span(rho), kComputeTol, "energy model rho");
    Rng rng(derive_seed(seed, "repr-init"));
    EnergyModel m;
    m.n_actions = n_actions;
    m.f.resize(n_states, k);
    for (Eigen::Index i = 0; i < m.f.size(); ++i) m.f.data()[i] = init_std * rng.normal();
    m.g.resize(static_cast<Eigen::Index>(n_states) * n_actions, k);
    for (Eigen::Index i = 0; i < m.g.size(); ++i) m.g.data()[i] = init_std * rng.normal();
    m.h = Matrix::Zero(head_dim, n_actions);
    m.c = Vector::Zero(n_actions);
    m.head_bias = head_bias;
    m.rho = std::move(rho);
    return m;
}

Vector next_state_marginal(const Dataset& data, int n_states) {
    if (data.empty()) throw std::invalid_argument("next_state_marginal: empty dataset");
    Vector rho = Vector::Zero(n_states);
    for (const auto& r : data.records) {
        if (r.next_state < 0 || r.next_state >= n_states) throw std::out_of_range("dataset: next state out of range");
        rho[r.next_state] += 1.0;
    }
    return rho / rho.sum();
}

BatchLoss contrastive_batch_loss(const EnergyModel& model, const FourierFeaturizer* feat, const Dataset& data,
                                 std::span<const std::size_t> batch, double alpha_r, double alpha_t) {
    if (batch.empty()) throw std::invalid_argument("contrastive loss: empty batch");
    const int k = model.k();
    const auto B = static_cast<Eigen::Index>(batch.size());
    if (feat && (feat->k() != k || feat->d() != model.h.rows()))
        throw std::invalid_argument("contrastive loss: featurizer shape mismatch");
    if (!feat && model.h.rows() != k) throw std::invalid_argument("contrastive loss: head shape mismatch");

    BatchLoss out;
    out.gf = Matrix::Zero(model.f.rows(), k);
    out.gg = Matrix::Zero(model.g.rows(), k);
    out.gh = Matrix::Zero(model.h.rows(), model.h.cols());
    out.gc = Vector::Zero(model.n_actions);

    std::vector<int> s(batch.size()), a(batch.size()), s2(batch.size());
    Vector r(B);
    Matrix x(B, k);
    for (Eigen::Index i = 0; i < B; ++i) {
        const auto& rec = data.records.at(batch[static_cast<std::size_t>(i)]);
        s[i] = rec.state;
        a[i] = rec.action;
        s2[i] = rec.next_state;
        r[i] = rec.reward;
        x.row(i) = model.f.row(rec.state);
    }

    // Reward term.
    Matrix gx = Matrix::Zero(B, k);
    if (feat) {
        const Vector inv = feat->scale().cwiseInverse();
        Matrix u = ((x.rowwise() - feat->f_avg().transpose()) * inv.asDiagonal()) * feat->w().transpose();
        u.rowwise() += feat->b().transpose();
        const Matrix z = u.array().cos().matrix();
        Matrix gz(B, u.cols());
        for (Eigen::Index i = 0; i < B; ++i) {
            const double err = z.row(i).dot(model.h.col(a[i])) - r[i];
            out.loss_r += err * err;
            const double coef = 2.0 * alpha_r * err;
            gz.row(i) = coef * model.h.col(a[i]).transpose();
            out.gh.col(a[i]) += coef * z.row(i).transpose();
        }
        const Matrix gu = -(u.array().sin() * gz.array()).matrix();
        gx = (gu * feat->w()) * inv.asDiagonal();
    } else {
        for (Eigen::Index i = 0; i < B; ++i) {
            const double pred = x.row(i).dot(model.h.col(a[i])) + (model.head_bias ? model.c[a[i]] : 0.0);
            const double err = pred - r[i];
            out.loss_r += err * err;
            const double coef = 2.0 * alpha_r * err;
            gx.row(i) += coef * model.h.col(a[i]).transpose();
            out.gh.col(a[i]) += coef * x.row(i).transpose();
            if (model.head_bias) out.gc[a[i]] += coef;
        }
    }

    // Dynamics term: anchor i against g(s'_j, a_i) for every j in the batch.
    Vector e(B);
    Matrix diff(B, k);
    for (Eigen::Index i = 0; i < B; ++i) {
        for (Eigen::Index j = 0; j < B; ++j) {
            diff.row(j) = x.row(i) - model.g.row(model.g_row(s2[j], a[i]));
            e[j] = -0.5 * diff.row(j).squaredNorm();
        }
        const double mx = e.maxCoeff();
        const Vector p = (e.array() - mx).exp().matrix();
        const double zsum = p.sum();
        out.loss_t += -e[i] + mx + std::log(zsum);
        const Vector prob = p / zsum;
        // d/dx_i and d/dy_ij of -e_ii + logsumexp_j e_ij.
        gx.row(i) += alpha_t * (diff.row(i) - prob.transpose() * diff);
        for (Eigen::Index j = 0; j < B; ++j) {
            double w = prob[j];
            if (j == i) w -= 1.0;
            out.gg.row(model.g_row(s2[j], a[i])) += alpha_t * w * diff.row(j);
        }
    }
    for (Eigen::Index i = 0; i < B; ++i) out.gf.row(s[i]) += gx.row(i);

    out.total = alpha_r * out.loss_r + alpha_t * out.loss_t;
    if (!std::isfinite(out.total)) throw std::domain_error("contrastive loss: non-finite value");
    if (alpha_r == 0.0 && alpha_t == 0.0) {
        out.gf.setZero();
        out.gg.setZero();
        out.gh.setZero();
        out.gc.setZero();
    }
    return out;
}

namespace {

void check_dataset(const Dataset& data, int n_states, int n_actions) {
    if (data.empty()) throw std::invalid_argument("representation learning: empty dataset");
    data.validate(n_states, n_actions);
}

TrainResult train_contrastive(const Dataset& data, int n_states, int n_actions, const TrainConfig& cfg, int k,
                              std::optional<FourierFeaturizer> feat) {
    cfg.validate();
    check_dataset(data, n_states, n_actions);
    const bool fourier = feat.has_value();
    const int head_dim = fourier ? feat->d() : k;
    TrainResult res;
    res.model = init_energy_model(n_states, n_actions, k, head_dim, !fourier, next_state_marginal(data, n_states),
                                  cfg.init_std, cfg.seed);
    EnergyModel& m = res.model;
    AdamState af = AdamState::for_size(m.f.size(), cfg.lr);
    AdamState ag = AdamState::for_size(m.g.size(), cfg.lr);
    AdamState ah = AdamState::for_size(m.h.size(), cfg.lr);
    AdamState ac = AdamState::for_size(m.c.size(), cfg.lr);
    Rng rng(derive_seed(cfg.seed, "repr-batch"));
    std::vector<std::size_t> batch(static_cast<std::size_t>(cfg.batch_size));
    Matrix xb(cfg.batch_size, k);

    for (int step = 1; step <= cfg.steps; ++step) {
        for (auto& idx : batch) idx = rng.uniform_index(data.size());
        if (fourier) {
            for (int i = 0; i < cfg.batch_size; ++i) xb.row(i) = m.f.row(data.records[batch[i]].state);
            feat->update_stats(xb);
        }
        BatchLoss bl = contrastive_batch_loss(m, fourier ? &*feat : nullptr, data, batch, cfg.alpha_r, cfg.alpha_t);
        adam_step(af, m.f, bl.gf);
        adam_step(ag, m.g, bl.gg);
        adam_step(ah, m.h, bl.gh);
        if (m.head_bias) adam_step(ac, m.c, bl.gc);
        if (step % cfg.log_every == 0 || step == 1 || step == cfg.steps) {
            const double n = static_cast<double>(cfg.batch_size);
            res.log.push_back({step, bl.loss_r / n, bl.loss_t / n, bl.total / n});
        }
    }

    if (fourier) {
        res.repr.variant = ReprVariant::fourier;
        res.repr.embeddings = m.f;
        res.repr.features = feat->map_rows(m.f);
        res.repr.featurizer = std::move(feat);
    } else {
        res.repr.variant = ReprVariant::energy;
        res.repr.features = m.f;
    }
    return res;
}

}  // namespace

TrainResult train_energy(const Dataset& data, int n_states, int n_actions, const TrainConfig& cfg, int k) {
    return train_contrastive(data, n_states, n_actions, cfg, k, std::nullopt);
}

TrainResult train_fourier(const Dataset& data, int n_states, int n_actions, const TrainConfig& cfg, int k, int d) {
    return train_contrastive(data, n_states, n_actions, cfg, k,
                             FourierFeaturizer(k, d, derive_seed(cfg.seed, "rff"), cfg.decay, cfg.input_scale));
}

Matrix empirical_transition_matrix(const Dataset& data, int n_states, int n_actions) {
    check_dataset(data, n_states, n_actions);
    Matrix t = Matrix::Zero(n_states, static_cast<Eigen::Index>(n_actions) * n_states);
    for (const auto& r : data.records) t(r.state, static_cast<Eigen::Index>(r.action) * n_states + r.next_state) += 1.0;
    for (int s = 0; s < n_states; ++s) {
        const double total = t.row(s).sum();
        if (total > 0.0) t.row(s) /= total;
    }
    return t;
}

Representation svd_features(const Dataset& data, int n_states, int n_actions, int k) {
    if (k < 1) throw std::invalid_argument("svd_features: k must be >= 1");
    const Matrix t = empirical_transition_matrix(data, n_states, n_actions);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(t, Eigen::ComputeThinU);
    const Eigen::Index keep = std::min<Eigen::Index>(k, svd.singularValues().size());
    Representation r;
    r.variant = ReprVariant::svd;
    r.features = Matrix::Zero(n_states, k);
    r.features.leftCols(keep) = svd.matrixU().leftCols(keep) * svd.singularValues().head(keep).asDiagonal();
    return r;
}

ModelPredictions energy_predictions(const EnergyModel& model, double r_max) {
    const int S = model.n_states();
    const int A = model.n_actions;
    if (model.h.rows() != model.k()) throw std::invalid_argument("energy_predictions: not an energy-path model");
    ModelPredictions out;
    out.reward = model.f * model.h;
    if (model.head_bias) out.reward.rowwise() += model.c.transpose();
    out.reward = out.reward.cwiseMax(-r_max).cwiseMin(r_max);
    out.transition.resize(static_cast<Eigen::Index>(S) * A, S);
    Vector logits(S);
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
            for (int n = 0; n < S; ++n)
                logits[n] = model.rho[n] > 0.0 ? std::log(model.rho[n]) -
                                                     0.5 * (model.f.row(s) - model.g.row(model.g_row(n, a))).squaredNorm()
                                               : -kInf;
            const double mx = logits.maxCoeff();
            Vector p = (logits.array() - mx).exp().matrix();
            p /= p.sum();
            p = p.cwiseMax(kProbFloor);
            out.transition.row(static_cast<Eigen::Index>(s) * A + a) = (p / p.sum()).transpose();
        }
    }
    return out;
}

LinearDynamics extract_linear_dynamics(const EnergyModel& model, const FourierFeaturizer& feat, double r_max) {
    const int S = model.n_states();
    const int A = model.n_actions;
    const int d = feat.d();
    if (model.h.rows() != d) throw std::invalid_argument("extract_linear_dynamics: head is not over Fourier features");
    LinearDynamics out;
    out.models.r = model.h;
    out.models.r_max = r_max;
    const Matrix z = feat.map_rows(model.f);
    Matrix g_a(S, model.k());
    for (int a = 0; a < A; ++a) {
        for (int n = 0; n < S; ++n) g_a.row(n) = model.g.row(model.g_row(n, a));
        Matrix psi = feat.map_rows(g_a);
        psi = (2.0 / d) * (model.rho.asDiagonal() * psi);
        out.models.psi.push_back(std::move(psi));
    }

    out.normalizer.resize(S, A);
    out.prediction.predictions.reward = (z * out.models.r).cwiseMax(-r_max).cwiseMin(r_max);
    Matrix& trans = out.prediction.predictions.transition;
    trans.resize(static_cast<Eigen::Index>(S) * A, S);
    double tv_sum = 0.0;
    for (int a = 0; a < A; ++a) {
        const Matrix raw = z * out.models.psi[a].transpose();
        double min_e = kInf;
        for (int s = 0; s < S; ++s) {
            const double e = raw.row(s).sum();
            out.normalizer(s, a) = e;
            Eigen::RowVectorXd pre;
            if (e > kProbFloor) {
                pre = raw.row(s) / e;
                min_e = std::min(min_e, e);
            } else {
                pre = Eigen::RowVectorXd::Constant(S, 1.0 / S);
                ++out.degenerate_rows;
            }
            Eigen::RowVectorXd post = pre.cwiseMax(kProbFloor);
            post /= post.sum();
            const double row_tv = 0.5 * (pre - post).cwiseAbs().sum();
            out.prediction.max_projection_tv = std::max(out.prediction.max_projection_tv, row_tv);
            tv_sum += row_tv;
            trans.row(static_cast<Eigen::Index>(s) * A + a) = post;
        }
        const double scale = std::isfinite(min_e) ? out.models.psi[a].cwiseAbs().maxCoeff() / min_e : kInf;
        out.psi_norm_normalized = std::max(out.psi_norm_normalized, scale);
    }
    out.prediction.mean_projection_tv = tv_sum / (static_cast<double>(S) * A);
    return out;
}

namespace {

nlohmann::json rows_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        rows.push_back(std::vector<double>(m.data() + i * m.cols(), m.data() + (i + 1) * m.cols()));
    return rows;
}

Matrix rows_from_json(const nlohmann::json& j, Eigen::Index cols) {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    Matrix m(static_cast<Eigen::Index>(rows.size()), cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (static_cast<Eigen::Index>(rows[i].size()) != cols)
            throw std::invalid_argument("representation json: row width mismatch");
        for (Eigen::Index c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(i), c) = rows[i][static_cast<std::size_t>(c)];
    }
    return m;
}

}  // namespace

nlohmann::json to_json(const Representation& repr) {
    nlohmann::json j = {{"variant", to_string(repr.variant)},
                        {"latent_dim", repr.latent_dim()},
                        {"n_states", repr.n_states()}};
    switch (repr.variant) {
        case ReprVariant::table:
            j["latent_of"] = repr.table.latent_of;
            j["latent_count"] = repr.table.latent_count;
            break;
        case ReprVariant::fourier:
            j["embeddings"] = rows_json(repr.embeddings);
            j["featurizer"] = to_json(*repr.featurizer);
            break;
        default:
            j["vectors"] = rows_json(repr.features);
    }
    return j;
}

Representation representation_from_json(const nlohmann::json& j) {
    const ReprVariant variant = repr_variant_from_string(j.at("variant").get<std::string>());
    const int n_states = j.at("n_states").get<int>();
    if (variant == ReprVariant::table) {
        TabularPhi phi{j.at("latent_of").get<std::vector<int>>(), j.at("latent_count").get<int>()};
        if (phi.n_states() != n_states) throw std::invalid_argument("representation json: state count mismatch");
        return Representation::from_table(phi);
    }
    Representation r;
    r.variant = variant;
    if (variant == ReprVariant::fourier) {
        FourierFeaturizer feat = featurizer_from_json(j.at("featurizer"));
        r.embeddings = rows_from_json(j.at("embeddings"), feat.k());
        r.features = feat.map_rows(r.embeddings);
        r.featurizer = std::move(feat);
    } else {
        r.features = rows_from_json(j.at("vectors"), j.at("latent_dim").get<int>());
    }
    if (r.n_states() != n_states) throw std::invalid_argument("representation json: state count mismatch");
    return r;
}

void write_train_log_csv(std::ostream& os, const std::vector<TrainLogRow>& log) {
    os << "step,loss_r,loss_t,total\n" << std::setprecision(17);
    for (const auto& r : log) os << r.step << ',' << r.loss_r << ',' << r.loss_t << ',' << r.total << '\n';
}

}  // namespace repbc
