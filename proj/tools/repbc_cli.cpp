// repbc command-line entry point.

#include "repbc/harness.hpp"
#include "repbc/rng.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace repbc;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitAssert = 2;

struct Common {
    std::string config = "defaults";
    std::optional<std::uint64_t> seed;
    std::string out = "out";
    int jobs = 1;
    bool assert_mode = false;
    int replication = 0;
    std::string method;
};

ExperimentConfig resolve(const Common& c) {
    ExperimentConfig cfg = load_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    if (c.jobs < 1) throw ConfigError("--jobs", "must be >= 1");
    if (c.replication < 0) throw ConfigError("--replication", "must be >= 0");
    return cfg;
}

std::vector<MethodSpec> selected_methods(const ExperimentConfig& cfg, const std::string& name) {
    if (name.empty()) return cfg.methods;
    for (const auto& m : cfg.methods)
        if (m.name == name) return {m};
    throw ConfigError("--method", "no configured method named '" + name + "'");
}

void write_json(const fs::path& p, const nlohmann::json& j) {
    std::ofstream f(p, std::ios::binary);
    f << j.dump(2) << '\n';
    if (!f) throw std::runtime_error("cannot write " + p.string());
}

// Uses datasets already present in `out` when their fingerprint matches, otherwise samples them.
ReplicationContext context_for(const ExperimentConfig& cfg, const Common& c) {
    ReplicationContext ctx = make_context(cfg, replication_seed(cfg.seed, c.replication));
    const fs::path out(c.out);
    const std::string fp = env_fingerprint(ctx.env.mdp);
    for (auto [stem, slot] : {std::pair{"offline", &ctx.offline}, std::pair{"demos", &ctx.demos}}) {
        const fs::path p = out / stem;
        if (!fs::exists(p.string() + ".csv")) continue;
        Dataset d = load_dataset(p.string());
        if (d.env_fingerprint != fp)
            throw ConfigError(std::string("data.") + stem, "dataset in " + out.string() + " was sampled from another environment");
        d.validate(ctx.env.mdp.n_states(), ctx.env.mdp.n_actions());
        *slot = std::move(d);
    }
    return ctx;
}

int cmd_gen_env(const Common& c) {
    const ExperimentConfig cfg = resolve(c);
    fs::create_directories(c.out);
    if (cfg.env_type == EnvType::counterexample) {
        const Counterexample ce = make_counterexample();
        nlohmann::json j = {{"mdp", to_json(ce.mdp)}, {"phi", ce.phi.latent_of}, {"target", to_json(ce.target)}};
        write_json(fs::path(c.out) / "env.json", j);
        return 0;
    }
    const ReplicationContext ctx = make_context(cfg, replication_seed(cfg.seed, c.replication));
    nlohmann::json j = to_json(ctx.env);
    j["target_policy"] = to_json(ctx.target);
    j["fingerprint"] = env_fingerprint(ctx.env.mdp);
    write_json(fs::path(c.out) / "env.json", j);
    return 0;
}

int cmd_gen_data(const Common& c) {
    const ExperimentConfig cfg = resolve(c);
    const ReplicationContext ctx = make_context(cfg, replication_seed(cfg.seed, c.replication));
    fs::create_directories(c.out);
    save_dataset((fs::path(c.out) / "offline").string(), ctx.offline);
    save_dataset((fs::path(c.out) / "demos").string(), ctx.demos);
    return 0;
}

int cmd_train_repr(const Common& c) {
    const ExperimentConfig cfg = resolve(c);
    const ReplicationContext ctx = context_for(cfg, c);
    fs::create_directories(c.out);
    for (const auto& m : selected_methods(cfg, c.method)) {
        if (m.repr == ReprMethod::none) continue;
        const TrainedRepr r = train_representation(cfg, ctx, m.repr);
        write_json(fs::path(c.out) / ("representation_" + m.name + ".json"), to_json(r.repr));
        std::ofstream log(fs::path(c.out) / ("train_log_" + m.name + ".csv"), std::ios::binary);
        write_train_log_csv(log, r.log);
    }
    return 0;
}

int cmd_train_bc(const Common& c) {
    const ExperimentConfig cfg = resolve(c);
    const ReplicationContext ctx = context_for(cfg, c);
    fs::create_directories(c.out);
    for (const auto& m : selected_methods(cfg, c.method)) {
        const fs::path saved = fs::path(c.out) / ("representation_" + m.name + ".json");
        Representation repr;
        if (m.repr != ReprMethod::none && fs::exists(saved)) {
            std::ifstream in(saved);
            repr = representation_from_json(nlohmann::json::parse(in));
            if (repr.n_states() != ctx.env.mdp.n_states())
                throw ConfigError("repr", saved.string() + " does not match the environment");
        } else {
            repr = train_representation(cfg, ctx, m.repr).repr;
        }
        const TrainedPolicy p = train_policy(cfg, ctx, repr, m.bc);
        write_json(fs::path(c.out) / ("policy_" + m.name + ".json"), to_json(p.policy));
        std::ofstream log(fs::path(c.out) / ("bc_log_" + m.name + ".csv"), std::ios::binary);
        write_bc_log_csv(log, p.log);
    }
    return 0;
}

int cmd_eval_bounds(const Common& c, int trials, int suite_size) {
    const ExperimentConfig cfg = resolve(c);
    const fs::path out(c.out);
    fs::create_directories(out / "bound_reports");
    std::vector<std::string> problems;

    std::vector<SuiteSummary> suites = {
        thm1_suite(suite_size, derive_seed(cfg.seed, "suite-thm1")),
        thm1_suite(suite_size, derive_seed(cfg.seed, "suite-thm1-reward-free"), true),
        thm2_suite(suite_size, derive_seed(cfg.seed, "suite-thm2")),
        lemma1_suite(suite_size, derive_seed(cfg.seed, "suite-lemma1")),
        lemma2_suite(suite_size, derive_seed(cfg.seed, "suite-lemma2")),
        lemma2_suite(suite_size, derive_seed(cfg.seed, "suite-lemma2-ai"), true),
    };
    {
        std::ofstream f(out / "suites.csv", std::ios::binary);
        write_suite_csv(f, suites);
    }
    for (const auto& s : suites)
        if (s.violations > 0) problems.push_back(s.suite + ": " + std::to_string(s.violations) + " violations");

    const Counterexample ce = make_counterexample();
    const CounterexampleReport cr = verify_counterexample(ce.mdp, ce.phi, ce.target);
    write_json(out / "bound_reports" / "counterexample.json", to_json(cr));
    if (!cr.bisimulation_exact() || cr.perf_diff < 0.5 || cr.min_j_trans < 0.1)
        problems.push_back("counterexample thresholds not met");

    if (cfg.env_type == EnvType::tree) {
        TreeEnvSpec spec = cfg.tree;
        spec.seed = derive_seed(replication_seed(cfg.seed, c.replication), "env");
        const TreeEnv env = make_tree_env(spec);
        const ModelPredictions preds = predict(canonical_models(env), env.canonical_map);
        const StateDistribution d_off =
            visitation(env.mdp, TabularPolicy::uniform(env.mdp.n_states(), env.mdp.n_actions()));
        const double jr = j_reward(env.mdp, d_off, preds);
        const double jt = j_trans(env.mdp, d_off, preds);
        const double eps = epsilon_rt(jr, jt, env.mdp.n_actions(), env.mdp.gamma(), env.mdp.r_max());
        write_json(out / "bound_reports" / "realizability.json", {{"j_r", jr}, {"j_t", jt}, {"eps_rt", eps}});
        if (!(eps <= 1e-10)) problems.push_back("realizability: eps_rt = " + format_number(eps));

        if (trials > 0) {
            const auto curve = thm3_experiment(env, env.canonical_map, preds, {6, 15, 30, 150}, trials,
                                               derive_seed(cfg.seed, "thm3"));
            std::ofstream f(out / "thm3.csv", std::ios::binary);
            f << "n,mean,std_error,bound,holds\n";
            for (const auto& p : curve) {
                f << p.n << ',' << format_number(p.mean) << ',' << format_number(p.std_error) << ','
                  << format_number(p.bound) << ',' << (p.holds ? 1 : 0) << '\n';
                if (!p.holds) problems.push_back("theorem3 at n=" + std::to_string(p.n));
            }
        }
    }
    if (trials > 0) {
        const auto curve = empirical_tv_check(10, {10, 100, 1000}, 1000, derive_seed(cfg.seed, "tv"));
        std::ofstream f(out / "lemma6.csv", std::ios::binary);
        f << "n,mean,std_error,bound,holds\n";
        for (const auto& p : curve) {
            f << p.n << ',' << format_number(p.mean) << ',' << format_number(p.std_error) << ','
              << format_number(p.bound) << ',' << (p.holds ? 1 : 0) << '\n';
            if (!p.holds) problems.push_back("lemma6 at n=" + std::to_string(p.n));
        }
    }
    for (const auto& p : problems) std::cerr << "assertion failed: " << p << '\n';
    return c.assert_mode && !problems.empty() ? kExitAssert : 0;
}

int finish_run(const Common& c, const ExperimentConfig& cfg, const RunOutput& run) {
    write_run_outputs(c.out, cfg, run, c.jobs);
    std::cout << "wrote " << run.rows.size() << " rows to " << (fs::path(c.out) / "results.csv").string() << '\n';
    if (!c.assert_mode) return 0;
    const auto problems = run_assertions(run);
    for (const auto& p : problems) std::cerr << "assertion failed: " << p << '\n';
    return problems.empty() ? 0 : kExitAssert;
}

int cmd_run(const Common& c) {
    const ExperimentConfig cfg = resolve(c);
    return finish_run(c, cfg, run_experiment(cfg, c.jobs));
}

int cmd_sweep(const Common& c, const std::string& axis, const std::vector<double>& values) {
    ExperimentConfig cfg = resolve(c);
    SweepSpec spec;
    if (!axis.empty()) {
        spec.axis = axis;
        spec.values = values;
    } else if (cfg.sweep) {
        spec = *cfg.sweep;
    } else {
        throw ConfigError("sweep", "give --axis/--values or a sweep section in the config");
    }
    if (spec.values.empty()) throw ConfigError("sweep.values", "at least one value is required");
    cfg.sweep = spec;
    cfg.validate();
    return finish_run(c, cfg, sweep(cfg, spec, c.jobs));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Representation learning for imitation: experiments and exact bound checks"};
    app.require_subcommand(1);
    Common c;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", c.config, "Config JSON path or 'defaults'");
        sub->add_option("--seed", c.seed, "Master seed (overrides the config)");
        sub->add_option("--out", c.out, "Output directory");
        sub->add_option("--jobs", c.jobs, "Worker threads");
        sub->add_flag("--assert", c.assert_mode, "Exit 2 when an acceptance check fails");
    };

    auto* gen_env = app.add_subcommand("gen-env", "Write the environment and its target policy");
    auto* gen_data = app.add_subcommand("gen-data", "Sample offline and demonstration datasets");
    auto* train_repr = app.add_subcommand("train-repr", "Learn representations for the configured methods");
    auto* train_bc = app.add_subcommand("train-bc", "Fit BC policies on the learned representations");
    auto* eval_bounds = app.add_subcommand("eval-bounds", "Property suites, Monte Carlo checks and the counterexample");
    auto* run = app.add_subcommand("run", "Run the configured experiment");
    auto* sweep_cmd = app.add_subcommand("sweep", "Sweep one axis over a list of values");
    auto* figures = app.add_subcommand("figures", "Emit plot data from a results CSV");
    for (auto* sub : {gen_env, gen_data, train_repr, train_bc, eval_bounds, run, sweep_cmd, figures}) add_common(sub);
    for (auto* sub : {gen_env, gen_data, train_repr, train_bc, eval_bounds})
        sub->add_option("--replication", c.replication, "Replication index");
    for (auto* sub : {train_repr, train_bc}) sub->add_option("--method", c.method, "Only this configured method");

    int trials = 200;
    int suite_size = 100;
    eval_bounds->add_option("--trials", trials, "Monte Carlo trials (0 skips)");
    eval_bounds->add_option("--suite-size", suite_size, "Instances per property suite");
    std::string axis;
    std::vector<double> values;
    sweep_cmd->add_option("--axis", axis, "N, M, S, Z, d or k");
    sweep_cmd->add_option("--values", values, "Axis values");
    std::string results;
    std::string figure = "all";
    figures->add_option("--results", results, "results.csv (default <out>/results.csv)");
    figures->add_option("--figure", figure, "fig2, fig1, bounds or all");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*gen_env) return cmd_gen_env(c);
        if (*gen_data) return cmd_gen_data(c);
        if (*train_repr) return cmd_train_repr(c);
        if (*train_bc) return cmd_train_bc(c);
        if (*eval_bounds) {
            if (trials < 0 || suite_size < 1) throw ConfigError("--trials", "trials must be >= 0 and suite size >= 1");
            return cmd_eval_bounds(c, trials, suite_size);
        }
        if (*run) return cmd_run(c);
        if (*sweep_cmd) return cmd_sweep(c, axis, values);
        if (*figures) {
            const ExperimentConfig cfg = resolve(c);
            const fs::path res = results.empty() ? fs::path(c.out) / "results.csv" : fs::path(results);
            emit_figure_data(res, figure, c.out, cfg.seed);
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    return 0;
}
