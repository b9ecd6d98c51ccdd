#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "beamforge/scenario.hpp"
#include "beamforge/unrolled.hpp"
#include "beamforge/wmmse.hpp"

namespace beamforge {

enum class MethodKind { wmmse, truncated, gcnwmmse, pgd };

std::string to_string(MethodKind kind);

struct MethodSpec {
    std::string id;
    MethodKind kind = MethodKind::wmmse;

    // wmmse
    std::string init = "mrc";     // mrc | random
    int iterations = 100;
    int repetitions = 1;          // random inits per realization
    std::string reduce = "mean";  // mean | max over repetitions

    // truncated: prefix of another wmmse method's trajectories
    std::string of;
    int layers = 0;

    // learned models
    std::filesystem::path params_path;
    std::optional<ParameterSet> gcn;
    std::optional<PgdParameterSet> pgd;
};

struct ExperimentConfig {
    // Realizations come either from a generator or from a directory of scenario files.
    std::optional<ScenarioConfig> scenario;
    std::filesystem::path scenario_dir;
    int realizations = 0;
    std::uint64_t seed = 0;         // realization sampling
    std::uint64_t init_seed = 1;    // random initializations

    std::vector<MethodSpec> methods;
    std::string reference;          // empty: first best-of (reduce = max) method
    int substeps = default_mu_substeps;          // dual substeps in learned models
    int solver_substeps = solver_mu_substeps;    // dual substeps in classical WMMSE
    bool record_timing = true;      // false writes zero wall times, making outputs byte-stable

    nlohmann::json source;          // echo of the parsed file

    // Throws config_error: no methods, duplicate ids, dangling truncation
    // references, missing learned parameters, unknown reference.
    void validate() const;

    const MethodSpec& method(const std::string& id) const;
    std::string reference_id() const;
};

// Relative parameter paths resolve against base_dir. Learned parameters are loaded here.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j,
                                             const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

std::vector<ScenarioRealization> experiment_realizations(const ExperimentConfig& config);

// Outcome of one method on one realization.
struct MethodResult {
    double wsr = 0.0;
    std::vector<double> curve;   // wsr after each iteration/layer
    int rounds = 0;
    int feasibility_violations = 0;
    int hard_case_flags = 0;
    double wall_time = 0.0;      // seconds
};

// results[realization][method], methods in config order.
struct ExperimentResults {
    std::vector<std::string> method_ids;
    std::vector<std::vector<MethodResult>> results;
    std::string reference;
};

struct MetricsRow {
    std::string method;
    double mean_wsr = 0.0;
    double ci99 = 0.0;              // half width, normal approximation
    double relative_wsr = 0.0;      // mean of per-realization ratios to the reference, percent
    std::vector<double> curve;      // mean wsr per iteration
    int rounds = 0;
    double wall_time = 0.0;         // mean seconds per realization
    int feasibility_violations = 0;
    int hard_case_flags = 0;
};

int round_accounting(const SolverTrajectory& traj);

// Counts (iteration, cell) pairs whose power exceeds P_k (1 + rel_tol).
int feasibility_violations(const ScenarioRealization& s, const SolverTrajectory& traj,
                           double rel_tol = 1e-6);

// Runs every method on one realization; random-init trajectories are shared
// between a wmmse method and the truncations that refer to it.
std::vector<MethodResult> run_realization(const ExperimentConfig& config, const ScenarioRealization& s,
                                          std::size_t index);

ExperimentResults run_experiment(const ExperimentConfig& config,
                                 const std::vector<ScenarioRealization>& realizations, int workers = 1);

std::vector<MetricsRow> aggregate(const ExperimentResults& results);

// Convenience: realizations from the config, then aggregation.
std::vector<MetricsRow> run_baselines(const ExperimentConfig& config, int workers = 1);

// First 1-based iteration at which the curve reaches target, or -1.
int iterations_to_reach(const std::vector<double>& curve, double target);

// Writes aggregate.csv, aggregate.json, per_realization.csv and curves.csv.
void emit(const ExperimentConfig& config, const ExperimentResults& results,
          const std::vector<MetricsRow>& rows, const std::filesystem::path& out_dir);

// Six significant digits, shared by every emitted float.
std::string format_float(double x);

} // namespace beamforge
