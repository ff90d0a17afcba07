#include "repbc/harness.hpp"

#include "repbc/rff.hpp"
#include "repbc/rng.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

namespace repbc {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(ReprMethod m) {
    switch (m) {
        case ReprMethod::none: return "none";
        case ReprMethod::fourier: return "fourier";
        case ReprMethod::energy: return "energy";
        case ReprMethod::svd: return "svd";
    }
    return "?";
}

std::string to_string(BcMethod m) {
    switch (m) {
        case BcMethod::tabular: return "tabular";
        case BcMethod::loglinear: return "loglinear";
        case BcMethod::mlp: return "mlp";
    }
    return "?";
}

namespace {

std::optional<ReprMethod> parse_repr(const std::string& s) {
    if (s == "none") return ReprMethod::none;
    if (s == "fourier") return ReprMethod::fourier;
    if (s == "energy") return ReprMethod::energy;
    if (s == "svd") return ReprMethod::svd;
    return std::nullopt;
}

std::optional<BcMethod> parse_bc(const std::string& s) {
    if (s == "tabular") return BcMethod::tabular;
    if (s == "loglinear") return BcMethod::loglinear;
    if (s == "mlp") return BcMethod::mlp;
    return std::nullopt;
}

bool valid_combo(ReprMethod r, BcMethod b) {
    switch (r) {
        case ReprMethod::none: return b == BcMethod::tabular || b == BcMethod::loglinear;
        case ReprMethod::fourier: return b == BcMethod::loglinear;
        case ReprMethod::energy: return b == BcMethod::mlp;
        case ReprMethod::svd: return b == BcMethod::loglinear || b == BcMethod::mlp;
    }
    return false;
}

// Typed field access with path-qualified errors.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_, "expected an object");
    }

    std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void allow(std::initializer_list<const char*> keys) const {
        std::set<std::string> ok(keys.begin(), keys.end());
        for (const auto& [key, _] : j_.items())
            if (!ok.count(key)) throw ConfigError(at(key), "unknown field");
    }

    bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }
    const json& raw(const std::string& key) const { return j_.at(key); }

    void get(const std::string& key, int& out) const {
        if (!has(key)) return;
        const json& v = j_.at(key);
        if (v.is_number_integer()) {
            const auto x = v.get<std::int64_t>();
            if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
                throw ConfigError(at(key), "integer out of range");
            out = static_cast<int>(x);
            return;
        }
        if (v.is_number_float()) {
            const double x = v.get<double>();
            if (x == std::floor(x) && std::abs(x) < 1e9) {
                out = static_cast<int>(x);
                return;
            }
        }
        throw ConfigError(at(key), "expected an integer");
    }
    void get(const std::string& key, double& out) const {
        if (!has(key)) return;
        const json& v = j_.at(key);
        if (v.is_string()) {
            const auto s = v.get<std::string>();
            if (s == "inf") { out = kInf; return; }
            throw ConfigError(at(key), "expected a number");
        }
        if (!v.is_number()) throw ConfigError(at(key), "expected a number");
        out = v.get<double>();
    }
    void get(const std::string& key, bool& out) const {
        if (!has(key)) return;
        if (!j_.at(key).is_boolean()) throw ConfigError(at(key), "expected true or false");
        out = j_.at(key).get<bool>();
    }
    void get(const std::string& key, std::string& out) const {
        if (!has(key)) return;
        if (!j_.at(key).is_string()) throw ConfigError(at(key), "expected a string");
        out = j_.at(key).get<std::string>();
    }
    void get(const std::string& key, std::uint64_t& out) const {
        if (!has(key)) return;
        const json& v = j_.at(key);
        if (v.is_number_unsigned()) {
            out = v.get<std::uint64_t>();
        } else if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
            out = static_cast<std::uint64_t>(v.get<std::int64_t>());
        } else {
            throw ConfigError(at(key), "expected a non-negative integer");
        }
    }

private:
    const json& j_;
    std::string path_;
};

MethodSpec method_from_json(const json& v, const std::string& path) {
    if (v.is_string()) {
        try {
            return named_method(v.get<std::string>());
        } catch (const std::invalid_argument& e) {
            throw ConfigError(path, e.what());
        }
    }
    Section sec(v, path);
    sec.allow({"name", "repr", "bc"});
    std::string repr = "none", bc = "tabular", name;
    sec.get("repr", repr);
    sec.get("bc", bc);
    sec.get("name", name);
    MethodSpec m;
    const auto r = parse_repr(repr);
    if (!r) throw ConfigError(sec.at("repr"), "unknown representation '" + repr + "'");
    const auto b = parse_bc(bc);
    if (!b) throw ConfigError(sec.at("bc"), "unknown bc method '" + bc + "'");
    m.repr = *r;
    m.bc = *b;
    m.name = name.empty() ? repr + "+" + bc : name;
    return m;
}

json method_to_json(const MethodSpec& m) {
    return {{"name", m.name}, {"repr", to_string(m.repr)}, {"bc", to_string(m.bc)}};
}

}  // namespace

MethodSpec named_method(const std::string& name) {
    if (name == "vanilla") return {name, ReprMethod::none, BcMethod::tabular};
    if (name == "fourier") return {name, ReprMethod::fourier, BcMethod::loglinear};
    if (name == "energy") return {name, ReprMethod::energy, BcMethod::mlp};
    if (name == "svd") return {name, ReprMethod::svd, BcMethod::loglinear};
    throw std::invalid_argument("unknown method '" + name + "' (expected vanilla, fourier, energy or svd)");
}

ExperimentConfig ExperimentConfig::defaults() {
    ExperimentConfig cfg;
    cfg.tree.duplication = 10;
    cfg.train = TrainConfig::defaults(cfg.tree.gamma);
    cfg.methods = {named_method("vanilla"), named_method("fourier"), named_method("svd")};
    return cfg;
}

TrainConfig ExperimentConfig::train_config() const {
    TrainConfig t = train;
    if (!alpha_t_set) t.alpha_t = 1.0 / (1.0 - tree.gamma);
    return t;
}

int ExperimentConfig::n_states() const { return env_type == EnvType::tree ? kCanonicalNodes * tree.duplication : 6; }

void ExperimentConfig::validate() const {
    try {
        tree.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("env", e.what());
    }
    if (n_demos < kTreeHorizon) throw ConfigError("data.N", "must cover at least one episode (>= 3)");
    if (n_offline < kTreeHorizon) throw ConfigError("data.M", "must cover at least one episode (>= 3)");
    if (k < 1) throw ConfigError("repr.k", "must be >= 1");
    if (d < 1) throw ConfigError("repr.d", "must be >= 1");
    try {
        train_config().validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("repr", e.what());
    }
    try {
        bc.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("bc", e.what());
    }
    if (replications < 0) throw ConfigError("replications", "must be >= 0");
    if (env_type == EnvType::tree && methods.empty()) throw ConfigError("methods", "at least one method is required");
    std::set<std::string> names;
    for (std::size_t i = 0; i < methods.size(); ++i) {
        const auto& m = methods[i];
        const std::string path = "methods[" + std::to_string(i) + "]";
        if (!valid_combo(m.repr, m.bc))
            throw ConfigError(path, "representation " + to_string(m.repr) + " cannot feed " + to_string(m.bc) + " BC");
        if (!names.insert(m.name).second) throw ConfigError(path, "duplicate method name '" + m.name + "'");
    }
    if (sweep) {
        static const std::set<std::string> axes = {"N", "M", "S", "Z", "d", "k"};
        if (!axes.count(sweep->axis)) throw ConfigError("sweep.axis", "expected one of N, M, S, Z, d, k");
        if (env_type != EnvType::tree) throw ConfigError("sweep.axis", "sweeps need the tree environment");
        for (std::size_t i = 0; i < sweep->values.size(); ++i) {
            try {
                apply_axis(*this, sweep->axis, sweep->values[i]).validate();
            } catch (const ConfigError& e) {
                throw ConfigError("sweep.values[" + std::to_string(i) + "]", e.what());
            }
        }
    }
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig cfg = ExperimentConfig::defaults();
    Section root(j, "");
    root.allow({"env", "data", "repr", "bc", "eval", "methods", "replications", "seed", "sweep"});

    if (root.has("env")) {
        Section env(root.raw("env"), "env");
        env.allow({"type", "duplication", "intended_child_prob", "dirichlet_alpha", "reward_power",
                   "reward_normalization", "reward_noise_std", "gamma"});
        std::string type = "tree";
        env.get("type", type);
        if (type == "tree")
            cfg.env_type = EnvType::tree;
        else if (type == "counterexample")
            cfg.env_type = EnvType::counterexample;
        else
            throw ConfigError("env.type", "expected tree or counterexample");
        env.get("duplication", cfg.tree.duplication);
        env.get("intended_child_prob", cfg.tree.intended_child_prob);
        env.get("dirichlet_alpha", cfg.tree.dirichlet_alpha);
        env.get("reward_power", cfg.tree.reward_power);
        env.get("reward_noise_std", cfg.tree.reward_noise_std);
        env.get("gamma", cfg.tree.gamma);
        std::string norm = "node";
        env.get("reward_normalization", norm);
        if (norm == "node")
            cfg.tree.reward_normalization = RewardNormalization::node;
        else if (norm == "level")
            cfg.tree.reward_normalization = RewardNormalization::level;
        else
            throw ConfigError("env.reward_normalization", "expected node or level");
    }
    if (root.has("data")) {
        Section data(root.raw("data"), "data");
        data.allow({"N", "M"});
        data.get("N", cfg.n_demos);
        data.get("M", cfg.n_offline);
    }
    std::optional<ReprMethod> single_repr;
    std::optional<BcMethod> single_bc;
    if (root.has("repr")) {
        Section r(root.raw("repr"), "repr");
        r.allow({"method", "k", "d", "alpha_r", "alpha_t", "batch_size", "lr", "steps", "init_std", "decay",
                 "input_scale", "log_every"});
        r.get("k", cfg.k);
        r.get("d", cfg.d);
        r.get("alpha_r", cfg.train.alpha_r);
        if (r.has("alpha_t")) {
            r.get("alpha_t", cfg.train.alpha_t);
            cfg.alpha_t_set = true;
        }
        r.get("batch_size", cfg.train.batch_size);
        r.get("lr", cfg.train.lr);
        r.get("steps", cfg.train.steps);
        r.get("init_std", cfg.train.init_std);
        r.get("decay", cfg.train.decay);
        r.get("input_scale", cfg.train.input_scale);
        r.get("log_every", cfg.train.log_every);
        if (r.has("method")) {
            std::string m;
            r.get("method", m);
            single_repr = parse_repr(m);
            if (!single_repr) throw ConfigError("repr.method", "expected none, fourier, energy or svd");
        }
    }
    if (root.has("bc")) {
        Section b(root.raw("bc"), "bc");
        b.allow({"method", "lr", "steps", "batch_size", "hidden_units", "grad_tol", "log_every"});
        b.get("lr", cfg.bc.lr);
        b.get("steps", cfg.bc.steps);
        b.get("batch_size", cfg.bc.batch_size);
        b.get("hidden_units", cfg.bc.hidden_units);
        b.get("grad_tol", cfg.bc.grad_tol);
        b.get("log_every", cfg.bc.log_every);
        if (b.has("method")) {
            std::string m;
            b.get("method", m);
            single_bc = parse_bc(m);
            if (!single_bc) throw ConfigError("bc.method", "expected tabular, loglinear or mlp");
        }
    }
    if (root.has("eval")) {
        Section e(root.raw("eval"), "eval");
        e.allow({"bounds", "gradient"});
        e.get("bounds", cfg.bounds);
        std::string g = "exact";
        e.get("gradient", g);
        if (g == "exact")
            cfg.gradient_mode = GradientMode::exact;
        else if (g == "demos")
            cfg.gradient_mode = GradientMode::demos;
        else
            throw ConfigError("eval.gradient", "expected exact or demos");
    }
    if (root.has("methods")) {
        if (single_repr || single_bc) throw ConfigError("methods", "give either methods or repr.method/bc.method");
        const json& ms = root.raw("methods");
        if (!ms.is_array()) throw ConfigError("methods", "expected an array");
        cfg.methods.clear();
        for (std::size_t i = 0; i < ms.size(); ++i)
            cfg.methods.push_back(method_from_json(ms[i], "methods[" + std::to_string(i) + "]"));
    } else if (single_repr || single_bc) {
        MethodSpec m;
        m.repr = single_repr.value_or(ReprMethod::none);
        m.bc = single_bc.value_or(m.repr == ReprMethod::none      ? BcMethod::tabular
                                  : m.repr == ReprMethod::energy ? BcMethod::mlp
                                                                 : BcMethod::loglinear);
        m.name = to_string(m.repr) + "+" + to_string(m.bc);
        cfg.methods = {m};
    }
    root.get("replications", cfg.replications);
    root.get("seed", cfg.seed);
    if (root.has("sweep")) {
        Section s(root.raw("sweep"), "sweep");
        s.allow({"axis", "values"});
        SweepSpec spec;
        s.get("axis", spec.axis);
        if (!s.has("values") || !s.raw("values").is_array()) throw ConfigError("sweep.values", "expected an array");
        for (const auto& v : s.raw("values")) {
            if (!v.is_number()) throw ConfigError("sweep.values", "expected numbers");
            spec.values.push_back(v.get<double>());
        }
        cfg.sweep = spec;
    }
    cfg.validate();
    return cfg;
}

json to_json(const ExperimentConfig& cfg) {
    json env = to_json(cfg.tree);
    env.erase("seed");
    env["type"] = cfg.env_type == EnvType::tree ? "tree" : "counterexample";
    const TrainConfig t = cfg.train_config();
    json methods = json::array();
    for (const auto& m : cfg.methods) methods.push_back(method_to_json(m));
    json j = {
        {"env", env},
        {"data", {{"N", cfg.n_demos}, {"M", cfg.n_offline}}},
        {"repr",
         {{"k", cfg.k},
          {"d", cfg.d},
          {"alpha_r", t.alpha_r},
          {"alpha_t", t.alpha_t},
          {"batch_size", t.batch_size},
          {"lr", t.lr},
          {"steps", t.steps},
          {"init_std", t.init_std},
          {"decay", t.decay},
          {"input_scale", t.input_scale},
          {"log_every", t.log_every}}},
        {"bc",
         {{"lr", cfg.bc.lr},
          {"steps", cfg.bc.steps},
          {"batch_size", cfg.bc.batch_size},
          {"hidden_units", cfg.bc.hidden_units},
          {"grad_tol", cfg.bc.grad_tol},
          {"log_every", cfg.bc.log_every}}},
        {"eval", {{"bounds", cfg.bounds}, {"gradient", cfg.gradient_mode == GradientMode::exact ? "exact" : "demos"}}},
        {"methods", methods},
        {"replications", cfg.replications},
        {"seed", cfg.seed},
    };
    if (cfg.sweep) j["sweep"] = {{"axis", cfg.sweep->axis}, {"values", cfg.sweep->values}};
    return j;
}

ExperimentConfig load_config(const std::string& path_or_keyword) {
    if (path_or_keyword.empty() || path_or_keyword == "defaults") return ExperimentConfig::defaults();
    std::ifstream in(path_or_keyword);
    if (!in) throw ConfigError("", "cannot open config file '" + path_or_keyword + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("", std::string("malformed JSON: ") + e.what());
    }
    return config_from_json(j);
}

std::string config_hash(const ExperimentConfig& cfg) {
    json j = to_json(cfg);
    j.erase("sweep");
    j.erase("seed");
    j.erase("replications");
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
    return buf;
}

ExperimentConfig apply_axis(const ExperimentConfig& cfg, const std::string& axis, double value) {
    ExperimentConfig c = cfg;
    c.sweep.reset();
    if (!(value >= 0.0) || value != std::floor(value) || value > 1e9)
        throw ConfigError("sweep.values", "axis values must be non-negative integers");
    const int v = static_cast<int>(value);
    if (axis == "N") {
        c.n_demos = v;
    } else if (axis == "M") {
        c.n_offline = v;
    } else if (axis == "S") {
        if (v % kCanonicalNodes != 0 || v == 0)
            throw ConfigError("sweep.values", "|S| must be a positive multiple of " + std::to_string(kCanonicalNodes));
        c.tree.duplication = v / kCanonicalNodes;
    } else if (axis == "Z" || axis == "d") {
        c.d = v;
    } else if (axis == "k") {
        c.k = v;
    } else {
        throw ConfigError("sweep.axis", "expected one of N, M, S, Z, d, k");
    }
    return c;
}

std::uint64_t replication_seed(std::uint64_t master, int replication) {
    return derive_seed(master, "replication", static_cast<std::uint64_t>(replication));
}

ReplicationContext make_context(const ExperimentConfig& cfg, std::uint64_t rep_seed) {
    if (cfg.env_type != EnvType::tree) throw ConfigError("env.type", "this stage needs the tree environment");
    TreeEnvSpec spec = cfg.tree;
    spec.seed = derive_seed(rep_seed, "env");
    ReplicationContext ctx{rep_seed, make_tree_env(spec), {}, {}, {}, {}};
    ctx.target = optimal_policy(ctx.env.mdp);
    const int S = ctx.env.mdp.n_states();
    ctx.d_off = visitation(ctx.env.mdp, TabularPolicy::uniform(S, ctx.env.mdp.n_actions()));
    ctx.offline = sample_offline(ctx.env, static_cast<std::size_t>(cfg.n_offline), derive_seed(rep_seed, "offline"));
    ctx.demos = sample_demos(ctx.env, ctx.target, static_cast<std::size_t>(cfg.n_demos), derive_seed(rep_seed, "demos"));
    return ctx;
}

TrainedRepr train_representation(const ExperimentConfig& cfg, const ReplicationContext& ctx, ReprMethod method) {
    const int S = ctx.env.mdp.n_states();
    const int A = ctx.env.mdp.n_actions();
    TrainConfig t = cfg.train_config();
    t.seed = derive_seed(ctx.seed, "repr");
    switch (method) {
        case ReprMethod::none: return {Representation::from_table(TabularPhi::identity(S)), std::nullopt, {}};
        case ReprMethod::svd: return {svd_features(ctx.offline, S, A, cfg.k), std::nullopt, {}};
        case ReprMethod::energy: {
            auto r = train_energy(ctx.offline, S, A, t, cfg.k);
            return {std::move(r.repr), std::move(r.model), std::move(r.log)};
        }
        case ReprMethod::fourier: {
            auto r = train_fourier(ctx.offline, S, A, t, cfg.k, cfg.d);
            return {std::move(r.repr), std::move(r.model), std::move(r.log)};
        }
    }
    throw std::logic_error("unreachable");
}

TrainedPolicy train_policy(const ExperimentConfig& cfg, const ReplicationContext& ctx, const Representation& repr,
                           BcMethod method) {
    const int A = ctx.env.mdp.n_actions();
    BcConfig b = cfg.bc;
    b.seed = derive_seed(ctx.seed, "bc");
    TrainedPolicy out;
    switch (method) {
        case BcMethod::tabular: {
            const TabularPhi phi = repr.variant == ReprVariant::table ? repr.table : tabulate(repr.features);
            auto pi = bc_tabular(ctx.demos, phi, A);
            out.lifted = lift(pi, phi);
            out.policy = std::move(pi);
            break;
        }
        case BcMethod::loglinear: {
            auto fit = bc_loglinear(ctx.demos, repr.features, A, b);
            out.lifted = lift(fit.policy, repr.features);
            out.policy = std::move(fit.policy);
            out.log = std::move(fit.log);
            break;
        }
        case BcMethod::mlp: {
            auto fit = bc_mlp(ctx.demos, repr.features, A, b);
            out.lifted = lift(fit.policy, repr.features);
            out.policy = std::move(fit.policy);
            out.log = std::move(fit.log);
            break;
        }
    }
    return out;
}

namespace {

// Latent policy over the ids of `phi`, read from any state of each latent.
LatentTabularPolicy latent_rows(const TabularPolicy& lifted, const TabularPhi& phi) {
    Matrix p(phi.latent_count, lifted.n_actions());
    std::vector<bool> seen(static_cast<std::size_t>(phi.latent_count), false);
    for (int s = 0; s < phi.n_states(); ++s) {
        const int z = phi(s);
        if (seen[static_cast<std::size_t>(z)]) continue;
        seen[static_cast<std::size_t>(z)] = true;
        p.row(z) = lifted.probs.row(s);
    }
    return LatentTabularPolicy(std::move(p));
}

}  // namespace

std::vector<BoundReport> method_bounds(const ExperimentConfig& cfg, const ReplicationContext& ctx,
                                       const MethodSpec& method, const TrainedRepr& repr,
                                       const TrainedPolicy& policy) {
    const TabularMdp& mdp = ctx.env.mdp;
    std::vector<BoundReport> out;
    if (method.repr == ReprMethod::none && method.bc == BcMethod::tabular) {
        const TabularPhi phi = TabularPhi::identity(mdp.n_states());
        const ModelPredictions preds = predict(best_response_models(mdp, phi, ctx.d_off), phi);
        out.push_back(thm1_bound(mdp, phi, preds, std::get<LatentTabularPolicy>(policy.policy), ctx.target, ctx.d_off));
    } else if (method.repr == ReprMethod::fourier && method.bc == BcMethod::loglinear) {
        const LinearDynamics lin = extract_linear_dynamics(*repr.model, *repr.repr.featurizer, mdp.r_max());
        // Coefficients of the row-normalized model are bounded by psi / min_s E(s,a).
        LinearLatentModels scaled = lin.models;
        for (int a = 0; a < mdp.n_actions(); ++a) {
            double min_e = kInf;
            for (int s = 0; s < mdp.n_states(); ++s) {
                const double e = lin.normalizer(s, a);
                if (e > kProbFloor) min_e = std::min(min_e, e);
            }
            scaled.psi[static_cast<std::size_t>(a)] *= std::isfinite(min_e) ? 1.0 / min_e : kInf;
        }
        BoundReport r = thm2_bound(mdp, repr.repr.features, scaled, lin.prediction.predictions,
                                   std::get<LogLinearPolicy>(policy.policy), ctx.target, ctx.d_off, cfg.gradient_mode,
                                   &ctx.demos);
        if (lin.degenerate_rows > 0) r.flags.push_back("degenerate-dynamics-rows");
        if (lin.prediction.max_projection_tv > 0.0) r.flags.push_back("simplex-projection");
        out.push_back(std::move(r));
    } else if (method.repr == ReprMethod::energy && method.bc == BcMethod::mlp) {
        const TabularPhi phi = tabulate(repr.repr.features);
        const ModelPredictions preds = energy_predictions(*repr.model, mdp.r_max());
        out.push_back(thm1_bound(mdp, phi, preds, latent_rows(policy.lifted, phi), ctx.target, ctx.d_off));
    }
    out.push_back(lemma1_bound(mdp, policy.lifted, ctx.target));
    return out;
}

namespace {

struct Cell {
    ExperimentConfig cfg;
    std::string hash;
    std::string axis;
    double axis_value = 0.0;
};

std::vector<ResultRow> run_replication(const Cell& cell, int replication) {
    const ExperimentConfig& cfg = cell.cfg;
    const std::uint64_t seed = replication_seed(cfg.seed, replication);
    const ReplicationContext ctx = make_context(cfg, seed);
    const TabularMdp& mdp = ctx.env.mdp;
    const int horizon = ctx.env.horizon;
    const double target_reward = mean_step_reward(mdp, ctx.target, horizon);
    const double uniform_reward =
        mean_step_reward(mdp, TabularPolicy::uniform(mdp.n_states(), mdp.n_actions()), horizon);

    std::vector<ResultRow> rows;
    for (const MethodSpec& m : cfg.methods) {
        const auto t0 = std::chrono::steady_clock::now();
        const TrainedRepr repr = train_representation(cfg, ctx, m.repr);
        const TrainedPolicy pol = train_policy(cfg, ctx, repr.repr, m.bc);
        ResultRow row;
        row.config_hash = cell.hash;
        row.axis = cell.axis;
        row.axis_value = cell.axis_value;
        row.replication = replication;
        row.seed = seed;
        row.method = m.name;
        row.repr = to_string(m.repr);
        row.bc = to_string(m.bc);
        row.n_demos = static_cast<int>(ctx.demos.size());
        row.n_offline = static_cast<int>(ctx.offline.size());
        row.n_states = mdp.n_states();
        row.latent_dim = repr.repr.latent_dim();
        row.mean_reward = mean_step_reward(mdp, pol.lifted, horizon);
        row.perf_diff = perf_diff(mdp, pol.lifted, ctx.target);
        row.target_reward = target_reward;
        row.uniform_reward = uniform_reward;
        if (cfg.bounds) {
            row.reports = method_bounds(cfg, ctx, m, repr, pol);
            const BoundReport& head = row.reports.front();
            row.bound = head.bound;
            row.lhs = head.lhs;
            row.rhs = head.rhs;
            row.slack = head.slack;
            row.eps_rt = head.eps_rt;
        } else {
            row.lhs = row.rhs = row.slack = row.eps_rt = std::nan("");
        }
        row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rows.push_back(std::move(row));
    }
    return rows;
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the lowest-index failure.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn fn) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

RunOutput run_cells(const std::vector<Cell>& cells, int replications, int jobs) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::pair<std::size_t, int>> tasks;
    for (std::size_t c = 0; c < cells.size(); ++c)
        for (int r = 0; r < replications; ++r) tasks.emplace_back(c, r);
    std::vector<std::vector<ResultRow>> parts(tasks.size());
    parallel_for(tasks.size(), jobs,
                 [&](std::size_t i) { parts[i] = run_replication(cells[tasks[i].first], tasks[i].second); });
    RunOutput out;
    for (auto& p : parts)
        for (auto& row : p) out.rows.push_back(std::move(row));
    std::stable_sort(out.rows.begin(), out.rows.end(), [](const ResultRow& a, const ResultRow& b) {
        if (a.config_hash != b.config_hash) return a.config_hash < b.config_hash;
        if (a.seed != b.seed) return a.seed < b.seed;
        return a.method < b.method;
    });
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

}  // namespace

RunOutput sweep(const ExperimentConfig& cfg, const SweepSpec& spec, int jobs) {
    ExperimentConfig base = cfg;
    base.sweep = spec;
    base.validate();
    std::vector<Cell> cells;
    for (double v : spec.values) {
        Cell c{apply_axis(base, spec.axis, v), "", spec.axis, v};
        c.hash = config_hash(c.cfg);
        cells.push_back(std::move(c));
    }
    return run_cells(cells, cfg.replications, jobs);
}

RunOutput run_experiment(const ExperimentConfig& cfg, int jobs) {
    cfg.validate();
    if (cfg.env_type == EnvType::counterexample) {
        const auto t0 = std::chrono::steady_clock::now();
        RunOutput out;
        const Counterexample ce = make_counterexample();
        const TabularMdp mdp = ce.mdp.with_gamma(cfg.tree.gamma);
        out.counterexample = verify_counterexample(mdp, ce.phi, ce.target);
        out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return out;
    }
    if (cfg.sweep) return sweep(cfg, *cfg.sweep, jobs);
    ExperimentConfig c = cfg;
    return run_cells({Cell{c, config_hash(c), "none", 0.0}}, cfg.replications, jobs);
}

// ---------------------------------------------------------------------------
// CSV

std::string format_number(double x) {
    if (std::isnan(x)) return "";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    if (x == 0.0) return "0";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

namespace {

const std::vector<std::string> kResultColumns = {
    "config_hash", "axis",        "axis_value", "replication", "seed",          "method",         "repr",
    "bc",          "N",           "M",          "S",           "latent_dim",    "mean_reward",    "perf_diff",
    "target_reward", "uniform_reward", "bound", "lhs",         "rhs",           "slack",          "eps_rt"};

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_number(const std::string& s) {
    if (s.empty()) return std::nan("");
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    std::size_t used = 0;
    const double x = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("bad number '" + s + "'");
    return x;
}

}  // namespace

void write_results_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
    for (std::size_t i = 0; i < kResultColumns.size(); ++i) os << (i ? "," : "") << kResultColumns[i];
    os << '\n';
    for (const auto& r : rows) {
        os << r.config_hash << ',' << r.axis << ',' << format_number(r.axis_value) << ',' << r.replication << ','
           << r.seed << ',' << r.method << ',' << r.repr << ',' << r.bc << ',' << r.n_demos << ',' << r.n_offline
           << ',' << r.n_states << ',' << r.latent_dim << ',' << format_number(r.mean_reward) << ','
           << format_number(r.perf_diff) << ',' << format_number(r.target_reward) << ','
           << format_number(r.uniform_reward) << ',' << r.bound << ',' << format_number(r.lhs) << ','
           << format_number(r.rhs) << ',' << format_number(r.slack) << ',' << format_number(r.eps_rt) << '\n';
    }
}

std::vector<ResultRow> read_results_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) return {};
    const auto header = split_csv_line(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    for (const auto& c : kResultColumns)
        if (!col.count(c)) throw ConfigError("results." + c, "missing column");
    std::vector<ResultRow> rows;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto f = split_csv_line(line);
        if (f.size() != header.size())
            throw ConfigError("results", "line " + std::to_string(lineno) + " has the wrong number of fields");
        auto get = [&](const char* c) -> const std::string& { return f[col.at(c)]; };
        try {
            ResultRow r;
            r.config_hash = get("config_hash");
            r.axis = get("axis");
            r.axis_value = parse_number(get("axis_value"));
            r.replication = std::stoi(get("replication"));
            r.seed = std::stoull(get("seed"));
            r.method = get("method");
            r.repr = get("repr");
            r.bc = get("bc");
            r.n_demos = std::stoi(get("N"));
            r.n_offline = std::stoi(get("M"));
            r.n_states = std::stoi(get("S"));
            r.latent_dim = std::stoi(get("latent_dim"));
            r.mean_reward = parse_number(get("mean_reward"));
            r.perf_diff = parse_number(get("perf_diff"));
            r.target_reward = parse_number(get("target_reward"));
            r.uniform_reward = parse_number(get("uniform_reward"));
            r.bound = get("bound");
            r.lhs = parse_number(get("lhs"));
            r.rhs = parse_number(get("rhs"));
            r.slack = parse_number(get("slack"));
            r.eps_rt = parse_number(get("eps_rt"));
            rows.push_back(std::move(r));
        } catch (const std::logic_error& e) {
            throw ConfigError("results", "line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return rows;
}

json run_metadata(const ExperimentConfig& cfg, const RunOutput& run, int jobs) {
    json walls = json::array();
    for (const auto& r : run.rows)
        walls.push_back({{"config_hash", r.config_hash}, {"seed", r.seed}, {"method", r.method},
                         {"wall_seconds", r.wall_seconds}});
    return {
        {"config", to_json(cfg)},
        {"config_hash", config_hash(cfg)},
        {"master_seed", cfg.seed},
        {"jobs", jobs},
        {"rows", run.rows.size()},
        {"wall_seconds", run.wall_seconds},
        {"row_wall_seconds", walls},
        {"constants",
         {{"prob_floor", kProbFloor},
          {"slack_tol", kSlackTol},
          {"construct_tol", kConstructTol},
          {"compute_tol", kComputeTol},
          {"rff_stats", "exponential moving average"},
          {"rff_decay", cfg.train.decay},
          {"rff_input_scale", cfg.train.input_scale},
          {"rff_eps_norm", FourierFeaturizer::kEpsNorm},
          {"alpha_t", cfg.train_config().alpha_t},
          {"tree_horizon", kTreeHorizon},
          {"tree_terminal", "resets to the root with reward 0"},
          {"tree_reward_normalization",
           cfg.tree.reward_normalization == RewardNormalization::node ? "node" : "level"},
          {"r_max", 1.0},
          {"offline_policy", "uniform"},
          {"d_off", "discounted visitation of the uniform policy"},
          {"target_policy", "value iteration, lowest action id on ties"},
          {"seed_streams", {"replication", "env", "offline", "demos", "repr", "bc"}},
          {"zero_times_inf", 0.0}}},
    };
}

void write_run_outputs(const fs::path& out, const ExperimentConfig& cfg, const RunOutput& run, int jobs) {
    fs::create_directories(out / "bound_reports");
    {
        std::ofstream f(out / "results.csv", std::ios::binary);
        write_results_csv(f, run.rows);
        if (!f) throw std::runtime_error("cannot write " + (out / "results.csv").string());
    }
    for (const auto& r : run.rows) {
        for (const auto& rep : r.reports) {
            const std::string name =
                r.config_hash + "_r" + std::to_string(r.replication) + "_" + r.method + "_" + rep.bound + ".json";
            std::ofstream f(out / "bound_reports" / name, std::ios::binary);
            json j = to_json(rep);
            j["config_hash"] = r.config_hash;
            j["seed"] = r.seed;
            j["method"] = r.method;
            f << j.dump(2) << '\n';
        }
    }
    if (run.counterexample) {
        std::ofstream f(out / "bound_reports" / "counterexample.json", std::ios::binary);
        f << to_json(*run.counterexample).dump(2) << '\n';
    }
    std::ofstream f(out / "run_metadata.json", std::ios::binary);
    f << run_metadata(cfg, run, jobs).dump(2) << '\n';
}

std::vector<std::string> run_assertions(const RunOutput& run) {
    std::vector<std::string> problems;
    for (const auto& r : run.rows)
        for (const auto& rep : r.reports)
            if (!rep.holds())
                problems.push_back(rep.bound + " violated for " + r.method + " seed " + std::to_string(r.seed) +
                                   " (slack " + format_number(rep.slack) + ")");
    if (run.counterexample) {
        const auto& c = *run.counterexample;
        if (!c.bisimulation_exact()) problems.push_back("counterexample: bisimulation error is not zero");
        if (c.perf_diff < 0.5) problems.push_back("counterexample: perf_diff below 0.5");
        if (c.min_j_trans < 0.1) problems.push_back("counterexample: min J_T below 0.1");
    }
    std::map<std::pair<std::string, std::string>, std::pair<double, int>> means;
    for (const auto& r : run.rows) {
        auto& m = means[{r.config_hash, r.method}];
        m.first += r.mean_reward;
        ++m.second;
    }
    for (const auto& [key, v] : means) {
        if (key.second != "fourier") continue;
        const auto it = means.find({key.first, "vanilla"});
        if (it == means.end()) continue;
        const double gain = v.first / v.second - it->second.first / it->second.second;
        if (gain < 0.1)
            problems.push_back("config " + key.first + ": fourier gain over vanilla is " + format_number(gain) +
                               " (< 0.1)");
    }
    return problems;
}

// ---------------------------------------------------------------------------
// Figures

std::vector<FigureRow> aggregate_fig2(const std::vector<ResultRow>& rows) {
    struct Acc {
        std::vector<double> values;
        double target = 0.0;
        double uniform = 0.0;
    };
    std::map<std::tuple<std::string, double, std::string>, Acc> groups;
    for (const auto& r : rows) {
        auto& g = groups[{r.axis, r.axis_value, r.method}];
        g.values.push_back(r.mean_reward);
        g.target += r.target_reward;
        g.uniform += r.uniform_reward;
    }
    std::vector<FigureRow> out;
    for (const auto& [key, g] : groups) {
        FigureRow f;
        f.axis = std::get<0>(key);
        f.axis_value = std::get<1>(key);
        f.method = std::get<2>(key);
        f.n = static_cast<int>(g.values.size());
        double sum = 0.0;
        for (double v : g.values) sum += v;
        f.mean = sum / f.n;
        if (f.n > 1) {
            double ss = 0.0;
            for (double v : g.values) ss += (v - f.mean) * (v - f.mean);
            f.std_error = std::sqrt(ss / (f.n - 1)) / std::sqrt(static_cast<double>(f.n));
        }
        f.target_mean = g.target / f.n;
        f.uniform_mean = g.uniform / f.n;
        out.push_back(f);
    }
    return out;
}

void write_fig2_csv(std::ostream& os, const std::vector<FigureRow>& rows) {
    os << "axis,axis_value,method,n,mean,std_error,target_mean,uniform_mean\n";
    for (const auto& r : rows)
        os << r.axis << ',' << format_number(r.axis_value) << ',' << r.method << ',' << r.n << ','
           << format_number(r.mean) << ',' << format_number(r.std_error) << ',' << format_number(r.target_mean) << ','
           << format_number(r.uniform_mean) << '\n';
}

std::vector<SuiteSummary> bounds_figure(const std::vector<ResultRow>& rows, std::uint64_t seed) {
    std::vector<SuiteSummary> out;
    out.push_back(thm1_suite(100, derive_seed(seed, "suite-thm1")));
    out.push_back(thm1_suite(100, derive_seed(seed, "suite-thm1-reward-free"), true));
    out.push_back(thm2_suite(100, derive_seed(seed, "suite-thm2")));
    out.push_back(lemma1_suite(100, derive_seed(seed, "suite-lemma1")));
    out.push_back(lemma2_suite(100, derive_seed(seed, "suite-lemma2")));
    out.push_back(lemma2_suite(100, derive_seed(seed, "suite-lemma2-ai"), true));
    std::map<std::string, SuiteSummary> by_method;
    for (const auto& r : rows) {
        if (r.bound.empty()) continue;
        const std::string key = "results:" + r.method + ":" + r.bound;
        auto& s = by_method[key];
        s.suite = key;
        ++s.instances;
        if (r.slack < -kSlackTol) ++s.violations;
        s.max_negative_slack = std::max(s.max_negative_slack, -std::min(r.slack, 0.0));
        s.min_slack = std::min(s.min_slack, r.slack);
    }
    for (auto& [_, s] : by_method) out.push_back(s);
    return out;
}

void emit_figure_data(const fs::path& results_csv, const std::string& figure_id, const fs::path& out,
                      std::uint64_t seed) {
    static const std::set<std::string> ids = {"fig2", "fig1", "bounds", "all"};
    if (!ids.count(figure_id)) throw ConfigError("figure", "expected fig2, fig1, bounds or all");
    const bool all = figure_id == "all";
    fs::create_directories(out / "figures");
    std::vector<ResultRow> rows;
    if (all || figure_id != "fig1") {
        std::ifstream in(results_csv);
        if (!in) throw ConfigError("results", "cannot open " + results_csv.string());
        rows = read_results_csv(in);
    }
    if (all || figure_id == "fig2") {
        std::ofstream f(out / "figures" / "fig2.csv", std::ios::binary);
        write_fig2_csv(f, aggregate_fig2(rows));
    }
    if (all || figure_id == "fig1") {
        const Counterexample ce = make_counterexample();
        const json rep = to_json(verify_counterexample(ce.mdp, ce.phi, ce.target));
        std::ofstream f(out / "figures" / "fig1.csv", std::ios::binary);
        f << "quantity,value\n";
        for (const auto& [key, v] : rep.items())
            if (v.is_number()) f << key << ',' << format_number(v.get<double>()) << '\n';
    }
    if (all || figure_id == "bounds") {
        std::ofstream f(out / "figures" / "bounds.csv", std::ios::binary);
        write_suite_csv(f, bounds_figure(rows, seed));
    }
}

}  // namespace repbc
