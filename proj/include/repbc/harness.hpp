#pragma once

// Experiment configuration, orchestration and plot-data emission.

#include "repbc/bc.hpp"
#include "repbc/bounds.hpp"
#include "repbc/env.hpp"
#include "repbc/repr.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace repbc {

/// Invalid configuration; `path()` names the offending field, e.g. "repr.k".
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string path, const std::string& message)
        : std::runtime_error(path.empty() ? message : path + ": " + message), path_(std::move(path)) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

enum class ReprMethod { none, fourier, energy, svd };
enum class BcMethod { tabular, loglinear, mlp };

std::string to_string(ReprMethod m);
std::string to_string(BcMethod m);

struct MethodSpec {
    std::string name;
    ReprMethod repr = ReprMethod::none;
    BcMethod bc = BcMethod::tabular;
};

/// vanilla, fourier, energy, svd.
MethodSpec named_method(const std::string& name);

enum class EnvType { tree, counterexample };

struct SweepSpec {
    /// N, M, S, Z or d.
    std::string axis;
    std::vector<double> values;
};

struct ExperimentConfig {
    EnvType env_type = EnvType::tree;
    TreeEnvSpec tree;

    int n_demos = 15;
    int n_offline = 1500;

    int k = 16;
    int d = 1024;
    /// alpha_t is left at 1 / (1 - gamma) unless set explicitly.
    TrainConfig train;
    bool alpha_t_set = false;

    BcConfig bc;

    bool bounds = true;
    GradientMode gradient_mode = GradientMode::exact;

    int replications = 5;
    std::uint64_t seed = 0;
    std::vector<MethodSpec> methods;
    std::optional<SweepSpec> sweep;

    /// Built-in defaults: duplication 10, N 15, M 1500, k 16, d 1024, lr 0.01, 5 replications,
    /// methods vanilla, fourier and svd.
    static ExperimentConfig defaults();

    /// Throws ConfigError on invalid combinations.
    void validate() const;
    TrainConfig train_config() const;
    int n_states() const;
};

/// Overlays `j` on the defaults. Unknown keys and bad values raise ConfigError with the field path.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& cfg);
/// "defaults" selects the built-in configuration; anything else is read as a JSON file.
ExperimentConfig load_config(const std::string& path_or_keyword);

/// Hex FNV hash of the canonical JSON of a single cell (sweep section removed).
std::string config_hash(const ExperimentConfig& cfg);

/// Copy of `cfg` with the sweep axis set to `value`.
ExperimentConfig apply_axis(const ExperimentConfig& cfg, const std::string& axis, double value);

std::uint64_t replication_seed(std::uint64_t master, int replication);

/// Environment, target policy and datasets of one replication.
struct ReplicationContext {
    std::uint64_t seed = 0;
    TreeEnv env;
    TabularPolicy target;
    StateDistribution d_off;
    Dataset offline;
    Dataset demos;
};

ReplicationContext make_context(const ExperimentConfig& cfg, std::uint64_t rep_seed);

struct TrainedRepr {
    Representation repr;
    std::optional<EnergyModel> model;
    std::vector<TrainLogRow> log;
};

/// Representation for `method` (identity table for none).
TrainedRepr train_representation(const ExperimentConfig& cfg, const ReplicationContext& ctx, ReprMethod method);

struct TrainedPolicy {
    AnyPolicy policy;
    TabularPolicy lifted;
    std::vector<BcLogRow> log;
};

TrainedPolicy train_policy(const ExperimentConfig& cfg, const ReplicationContext& ctx, const Representation& repr,
                           BcMethod method);

/// Bound reports for a trained method; the first entry is the headline bound of the row.
std::vector<BoundReport> method_bounds(const ExperimentConfig& cfg, const ReplicationContext& ctx,
                                       const MethodSpec& method, const TrainedRepr& repr,
                                       const TrainedPolicy& policy);

struct ResultRow {
    std::string config_hash;
    std::string axis;
    double axis_value = 0.0;
    int replication = 0;
    std::uint64_t seed = 0;
    std::string method;
    std::string repr;
    std::string bc;
    int n_demos = 0;
    int n_offline = 0;
    int n_states = 0;
    int latent_dim = 0;
    double mean_reward = 0.0;
    double perf_diff = 0.0;
    double target_reward = 0.0;
    double uniform_reward = 0.0;
    /// Headline bound, empty when bounds are off.
    std::string bound;
    double lhs = 0.0;
    double rhs = 0.0;
    double slack = 0.0;
    double eps_rt = 0.0;
    double wall_seconds = 0.0;
    std::vector<BoundReport> reports;
};

struct RunOutput {
    std::vector<ResultRow> rows;
    std::optional<CounterexampleReport> counterexample;
    double wall_seconds = 0.0;
};

/// All replications of one cell, or every cell of the sweep section when present. Rows are sorted
/// by (config hash, seed, method); `jobs` worker threads share the replication tasks.
RunOutput run_experiment(const ExperimentConfig& cfg, int jobs = 1);

/// Cross product of `values` on `axis` with the configured methods and replications.
RunOutput sweep(const ExperimentConfig& cfg, const SweepSpec& spec, int jobs = 1);

/// Wall time is not written; only the metadata records it.
void write_results_csv(std::ostream& os, const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_results_csv(std::istream& is);

/// results.csv, bound_reports/*.json and run_metadata.json under `out`.
void write_run_outputs(const std::filesystem::path& out, const ExperimentConfig& cfg, const RunOutput& run,
                       int jobs);

/// Design constants and settings echoed into run_metadata.json.
nlohmann::json run_metadata(const ExperimentConfig& cfg, const RunOutput& run, int jobs);

/// Problems that `run --assert` reports: violated bounds and a fourier gain below 0.1 over vanilla.
std::vector<std::string> run_assertions(const RunOutput& run);

struct FigureRow {
    std::string axis;
    double axis_value = 0.0;
    std::string method;
    int n = 0;
    double mean = 0.0;
    double std_error = 0.0;
    double target_mean = 0.0;
    double uniform_mean = 0.0;
};

/// Groups by (axis, axis value, method); std error is the sample std over sqrt(n).
std::vector<FigureRow> aggregate_fig2(const std::vector<ResultRow>& rows);
void write_fig2_csv(std::ostream& os, const std::vector<FigureRow>& rows);

/// Property suites at the acceptance sizes plus one summary per (method, bound) of the results.
std::vector<SuiteSummary> bounds_figure(const std::vector<ResultRow>& rows, std::uint64_t seed);

/// Writes figures/<id>.csv for id in fig2, fig1, bounds ("all" writes every one).
void emit_figure_data(const std::filesystem::path& results_csv, const std::string& figure_id,
                      const std::filesystem::path& out, std::uint64_t seed);

/// Canonical numeric formatting for CSV output: shortest round-trip, "inf"/"-inf", empty for NaN.
std::string format_number(double x);

}  // namespace repbc
