#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "repbc/harness.hpp"
#include "repbc/rff.hpp"

namespace py = pybind11;
using namespace repbc;

namespace {

TabularMdp make_mdp(const Matrix& transition, const Matrix& reward, const Vector& initial, double gamma,
                    double r_max) {
    return TabularMdp(transition, reward, initial, gamma, r_max);
}

py::dict row_dict(const ResultRow& r) {
    py::dict d;
    d["config_hash"] = r.config_hash;
    d["axis"] = r.axis;
    d["axis_value"] = r.axis_value;
    d["replication"] = r.replication;
    d["seed"] = r.seed;
    d["method"] = r.method;
    d["repr"] = r.repr;
    d["bc"] = r.bc;
    d["N"] = r.n_demos;
    d["M"] = r.n_offline;
    d["S"] = r.n_states;
    d["latent_dim"] = r.latent_dim;
    d["mean_reward"] = r.mean_reward;
    d["perf_diff"] = r.perf_diff;
    d["target_reward"] = r.target_reward;
    d["uniform_reward"] = r.uniform_reward;
    d["bound"] = r.bound;
    d["lhs"] = r.lhs;
    d["rhs"] = r.rhs;
    d["slack"] = r.slack;
    d["eps_rt"] = r.eps_rt;
    return d;
}

py::dict suite_dict(const SuiteSummary& s) {
    py::dict d;
    d["suite"] = s.suite;
    d["instances"] = s.instances;
    d["violations"] = s.violations;
    d["max_negative_slack"] = s.max_negative_slack;
    d["min_slack"] = s.min_slack;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Representation learning for imitation: tabular MDPs, exact bounds and experiments";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    m.def("tree_env_json", [](int duplication, std::uint64_t seed) {
        TreeEnvSpec spec;
        spec.duplication = duplication;
        spec.seed = seed;
        return to_json(make_tree_env(spec)).dump();
    }, py::arg("duplication") = 10, py::arg("seed") = 0);

    m.def("counterexample_json", [] {
        const Counterexample ce = make_counterexample();
        return to_json(verify_counterexample(ce.mdp, ce.phi, ce.target)).dump();
    });

    m.def("performance", [](const Matrix& transition, const Matrix& reward, const Vector& initial, double gamma,
                            const Matrix& policy) {
        return performance(make_mdp(transition, reward, initial, gamma, reward.cwiseAbs().maxCoeff()),
                           TabularPolicy(policy));
    }, py::arg("transition"), py::arg("reward"), py::arg("initial"), py::arg("gamma"), py::arg("policy"));

    m.def("visitation", [](const Matrix& transition, const Matrix& reward, const Vector& initial, double gamma,
                           const Matrix& policy) {
        return visitation(make_mdp(transition, reward, initial, gamma, reward.cwiseAbs().maxCoeff()),
                          TabularPolicy(policy)).probs;
    }, py::arg("transition"), py::arg("reward"), py::arg("initial"), py::arg("gamma"), py::arg("policy"));

    m.def("kernel_estimate", [](const Vector& x, const Vector& y, int d, std::uint64_t seed) {
        if (x.size() != y.size()) throw std::invalid_argument("x and y differ in length");
        return kernel_estimate(FourierFeaturizer(static_cast<int>(x.size()), d, seed), x, y);
    }, py::arg("x"), py::arg("y"), py::arg("d"), py::arg("seed") = 0);

    m.def("suite", [](const std::string& name, int instances, std::uint64_t seed) {
        if (name == "theorem1") return suite_dict(thm1_suite(instances, seed));
        if (name == "theorem1-reward-free") return suite_dict(thm1_suite(instances, seed, true));
        if (name == "theorem2") return suite_dict(thm2_suite(instances, seed));
        if (name == "lemma1") return suite_dict(lemma1_suite(instances, seed));
        if (name == "lemma2") return suite_dict(lemma2_suite(instances, seed));
        if (name == "lemma2-action-independent") return suite_dict(lemma2_suite(instances, seed, true));
        throw std::invalid_argument("unknown suite '" + name + "'");
    }, py::arg("name"), py::arg("instances") = 100, py::arg("seed") = 0);

    m.def("run_experiment_json", [](const std::string& config_json, int jobs) {
        const ExperimentConfig cfg =
            config_json.empty() ? ExperimentConfig::defaults() : config_from_json(nlohmann::json::parse(config_json));
        RunOutput run;
        {
            py::gil_scoped_release release;
            run = run_experiment(cfg, jobs);
        }
        py::list rows;
        for (const auto& r : run.rows) rows.append(row_dict(r));
        return rows;
    }, py::arg("config_json") = "", py::arg("jobs") = 1);

    m.def("config_hash_json", [](const std::string& config_json) {
        return config_hash(config_from_json(nlohmann::json::parse(config_json)));
    });
}
