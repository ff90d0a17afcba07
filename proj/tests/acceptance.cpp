// Acceptance run: one PASS/FAIL line per criterion.
// usage: repbc_acceptance <path to repbc cli> [work dir]

#include "gradcheck.hpp"

#include "repbc/bounds.hpp"
#include "repbc/harness.hpp"
#include "repbc/rff.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <sys/wait.h>

using namespace repbc;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, double limit_s, const std::function<Outcome()>& fn) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = fn();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    const bool in_time = limit_s <= 0 || secs < limit_s;
    const bool pass = o.pass && in_time;
    if (!pass) ++failures;
    std::ostringstream line;
    line.precision(4);
    line << (pass ? "PASS" : "FAIL") << " criterion " << id << " [" << name << "] " << o.detail << " (" << secs << " s";
    if (limit_s > 0) line << ", limit " << limit_s << " s";
    line << ")";
    std::cout << line.str() << std::endl;
}

std::string num(double x) {
    std::ostringstream s;
    s.precision(4);
    s << x;
    return s.str();
}

int run_cli(const std::string& cli, const std::string& args) {
    const int status = std::system((cli + " " + args + " > /dev/null").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::map<std::string, double> method_means(const std::vector<ResultRow>& rows, double* target, double* uniform) {
    std::map<std::string, std::pair<double, int>> acc;
    double t = 0, u = 0;
    int n = 0;
    for (const auto& r : rows) {
        acc[r.method].first += r.mean_reward;
        ++acc[r.method].second;
        if (r.method == rows.front().method) {
            t += r.target_reward;
            u += r.uniform_reward;
            ++n;
        }
    }
    if (target) *target = n ? t / n : NAN;
    if (uniform) *uniform = n ? u / n : NAN;
    std::map<std::string, double> out;
    for (const auto& [m, v] : acc) out[m] = v.first / v.second;
    return out;
}

Outcome suite_outcome(const std::vector<SuiteSummary>& suites) {
    Outcome o{true, ""};
    for (const auto& s : suites) {
        o.pass = o.pass && s.instances == 100 && s.violations == 0 && s.min_slack >= -kSlackTol;
        o.detail += s.suite + ": " + std::to_string(s.violations) + "/" + std::to_string(s.instances) +
                    " violations, min slack " + num(s.min_slack) + "; ";
    }
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: repbc_acceptance <repbc cli> [work dir]\n";
        return 1;
    }
    const std::string cli = argv[1];
    const fs::path work = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "repbc_acceptance";
    fs::remove_all(work);
    fs::create_directories(work);

    report(1, "counterexample", 1.0, [] {
        const Counterexample ce = make_counterexample();
        const auto r = verify_counterexample(ce.mdp.with_gamma(0.95), ce.phi, ce.target);
        const bool ok = r.bisimulation_exact(1e-12) && r.perf_diff >= 0.5 && r.min_j_trans >= 0.1;
        return Outcome{ok, "bisim (" + num(r.reward_aliasing) + ", " + num(r.latent_transition_aliasing) +
                               "), perf_diff " + num(r.perf_diff) + ", min J_T " + num(r.min_j_trans)};
    });

    report(2, "theorem 1 suite", 30.0, [] { return suite_outcome({thm1_suite(100, 1001)}); });
    report(3, "theorem 2 suite", 60.0, [] { return suite_outcome({thm2_suite(100, 1002)}); });
    report(4, "lemma 1 and lemma 2 suites", 30.0, [] {
        return suite_outcome({lemma1_suite(100, 1003), lemma2_suite(100, 1004), lemma2_suite(100, 1005, true)});
    });

    // Criteria 5 and 12 share the two default CLI runs.
    double first_run_s = 0.0;
    int codes[2] = {-1, -1};
    for (int i = 0; i < 2; ++i) {
        const auto t0 = Clock::now();
        codes[i] = run_cli(cli, "run --config defaults --seed 7 --out " + (work / ("run" + std::to_string(i))).string());
        if (i == 0) first_run_s = std::chrono::duration<double>(Clock::now() - t0).count();
    }

    report(5, "tree central point", 0.0, [&] {
        if (codes[0] != 0) return Outcome{false, "cli exit code " + std::to_string(codes[0])};
        std::ifstream in(work / "run0" / "results.csv");
        const auto rows = read_results_csv(in);
        double target = 0, uniform = 0;
        const auto means = method_means(rows, &target, &uniform);
        const double gain = means.at("fourier") - means.at("vanilla");
        const bool ok = gain >= 0.1 && target >= 0.9 && target <= 1.0 && uniform >= 0.4 && uniform <= 0.6 &&
                        first_run_s < 600.0;
        return Outcome{ok, "fourier " + num(means.at("fourier")) + ", vanilla " + num(means.at("vanilla")) + ", svd " +
                               num(means.at("svd")) + ", gain " + num(gain) + " (need >= 0.1), target " + num(target) +
                               " [0.9, 1], uniform " + num(uniform) + " [0.4, 0.6], run time " + num(first_run_s) +
                               " s (limit 600 s)"};
    });

    report(6, "fourier vs svd at |S|/8 = 100", 900.0, [] {
        ExperimentConfig cfg = ExperimentConfig::defaults();
        cfg.tree.duplication = 100;
        cfg.methods = {named_method("fourier"), named_method("svd")};
        cfg.bounds = false;
        cfg.seed = 7;
        const auto run = run_experiment(cfg, 1);
        const auto means = method_means(run.rows, nullptr, nullptr);
        return Outcome{means.at("fourier") >= means.at("svd"),
                       "fourier " + num(means.at("fourier")) + ", svd " + num(means.at("svd"))};
    });

    report(7, "kernel approximation", 10.0, [] {
        double large = 0, small = 0, worst = 0;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            double e[2] = {0, 0};
            const int dims[2] = {8192, 512};
            for (int which = 0; which < 2; ++which) {
                FourierFeaturizer feat(4, dims[which], derive_seed(seed, "kernel-feat"));
                Rng rng(derive_seed(seed, "kernel-pairs"));
                for (int i = 0; i < 100; ++i) {
                    Vector x(4), dir(4);
                    for (int j = 0; j < 4; ++j) x[j] = rng.normal();
                    for (int j = 0; j < 4; ++j) dir[j] = rng.normal();
                    const Vector y = x + rng.uniform(0.0, 4.0) * dir / dir.norm();
                    const double truth = std::exp(-0.5 * (x - y).squaredNorm());
                    e[which] = std::max(e[which], std::abs(kernel_estimate(feat, x, y) - truth));
                }
            }
            worst = std::max(worst, e[0]);
            large += e[0] / 5;
            small += e[1] / 5;
        }
        return Outcome{worst <= 0.08 && large <= small, "max error at 8192 " + num(worst) + ", mean 8192 " +
                                                             num(large) + " vs mean 512 " + num(small)};
    });

    report(8, "gradient checks", 30.0, [] {
        double worst[4] = {0, 0, 0, 0};
        for (std::uint64_t i = 0; i < 20; ++i) {
            worst[0] = std::max(worst[0], testing::contrastive_gradient_error(i, false));
            worst[1] = std::max(worst[1], testing::contrastive_gradient_error(i, true));
            worst[2] = std::max(worst[2], testing::loglinear_gradient_error(i));
            worst[3] = std::max(worst[3], testing::mlp_gradient_error(i));
        }
        bool ok = true;
        for (double w : worst) ok = ok && w <= 1e-4;
        return Outcome{ok, "max relative error energy " + num(worst[0]) + ", fourier " + num(worst[1]) +
                               ", loglinear " + num(worst[2]) + ", mlp " + num(worst[3])};
    });

    report(9, "theorem 3 Monte Carlo", 600.0, [] {
        TreeEnvSpec spec;
        spec.seed = 9;
        const TreeEnv env = make_tree_env(spec);
        const auto preds = predict(canonical_models(env), env.canonical_map);
        const auto curve = thm3_experiment(env, env.canonical_map, preds, {6, 15, 30, 150}, 200, 9);
        Outcome o{true, ""};
        for (const auto& p : curve) {
            o.pass = o.pass && p.holds;
            o.detail += "N=" + std::to_string(p.n) + " mean " + num(p.mean) + " <= " + num(p.bound) + "; ";
        }
        return o;
    });

    report(10, "lemma 6 Monte Carlo", 30.0, [] {
        const auto curve = empirical_tv_check(10, {10, 100, 1000}, 1000, 10);
        Outcome o{true, ""};
        for (const auto& p : curve) {
            o.pass = o.pass && p.holds;
            o.detail += "n=" + std::to_string(p.n) + " mean " + num(p.mean) + " <= " + num(p.bound) + "; ";
        }
        return o;
    });

    report(11, "realizability", 1.0, [] {
        double worst = 0;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            TreeEnvSpec spec;
            spec.seed = seed;
            const TreeEnv env = make_tree_env(spec);
            const auto d_off = visitation(env.mdp, TabularPolicy::uniform(env.mdp.n_states(), 2));
            const auto preds = predict(canonical_models(env), env.canonical_map);
            worst = std::max(worst, epsilon_rt(j_reward(env.mdp, d_off, preds), j_trans(env.mdp, d_off, preds), 2,
                                               env.mdp.gamma(), env.mdp.r_max()));
        }
        return Outcome{worst <= 1e-10, "max eps_RT over 5 seeds " + num(worst)};
    });

    report(12, "determinism", 0.0, [&] {
        if (codes[0] != 0 || codes[1] != 0) return Outcome{false, "cli exit codes " + std::to_string(codes[0]) + ", " +
                                                                      std::to_string(codes[1])};
        const std::string a = slurp(work / "run0" / "results.csv"), b = slurp(work / "run1" / "results.csv");
        return Outcome{!a.empty() && a == b, "results.csv " + std::to_string(a.size()) + " bytes, identical: " +
                                                 (a == b ? "yes" : "no")};
    });

    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
