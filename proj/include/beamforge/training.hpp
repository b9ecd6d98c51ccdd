#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "beamforge/common.hpp"
#include "beamforge/rng.hpp"
#include "beamforge/scenario.hpp"
#include "beamforge/unrolled.hpp"
#include "beamforge/wmmse.hpp"

namespace beamforge {

enum class GradientMethod { central_fd, spsa };

struct TrainingConfig {
    int steps = 500;
    int batch_size = 10;
    double learning_rate = 0.01;
    double lr_decay = 0.1;          // multiplicative factor ...
    int decay_interval = 2500;      // ... applied every decay_interval steps
    double beta1 = 0.9;
    double beta2 = 0.99;
    double weight_decay = 1e-3;     // decoupled
    double epsilon = 1e-8;
    double clip_norm = 1.0;         // global L2
    bool loss_all_layers = false;   // loss layers {1..L} instead of {L}
    GradientMethod gradient = GradientMethod::central_fd;
    double fd_step = 1e-4;          // relative to |theta_j|
    double fd_min_step = 1e-6;
    double spsa_scale = 1e-3;
    int spsa_probes = 4;
    int validate_every = 25;
    int substeps = default_mu_substeps;
    double bias_scale_decay = 0.99;
    std::uint64_t seed = 1;

    void validate() const;
};

TrainingConfig training_config_from_json(const nlohmann::json& j);
nlohmann::json training_config_to_json(const TrainingConfig& c);

// 1-based layer indices entering the loss.
std::vector<int> loss_layers(const TrainingConfig& c, int model_layers);

struct GradientEstimate {
    rvec grad;
    double loss = 0.0;        // objective at the nominal point
    int failed_partials = 0;  // partials zeroed because a perturbed evaluation failed
};

// Objective over a flat real parameter vector. May throw or return NaN on
// numerical failure.
using FlatObjective = std::function<double(const rvec&)>;

// Central differences with step max(rel_step |theta_j|, min_step) per coordinate.
GradientEstimate fd_gradient(const FlatObjective& f, const rvec& theta, double rel_step,
                             double min_step);

// Simultaneous Rademacher perturbations, averaged over `probes`.
GradientEstimate spsa_gradient(const FlatObjective& f, const rvec& theta, double scale, int probes,
                               std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Sample-normalized loss

// J = (1 / (N |L|)) sum_n sum_l -wsr_nl / r_nl.
double normalized_loss(const std::vector<std::vector<double>>& layer_wsr,
                       const std::vector<std::vector<double>>& scales);

// r_nl = max(|wsr_nl|, 1e-12), the magnitude held fixed during differentiation.
std::vector<std::vector<double>> loss_scales(const std::vector<std::vector<double>>& layer_wsr);

// WSR at each requested (1-based) layer.
std::vector<double> layer_wsr(const ScenarioRealization& s, const ParameterSet& p,
                              const std::vector<int>& layers, int substeps);
std::vector<double> layer_wsr(const ScenarioRealization& s, const PgdParameterSet& p,
                              const std::vector<int>& layers, int substeps);

inline int layer_count(const ParameterSet& p) { return p.layers; }
inline int layer_count(const PgdParameterSet& p) { return p.layers; }

// Maps a flat vector back into the feasible parameter set (a_W >= 0).
void project_constraints(const ParameterSet& shape, rvec& flat);
inline void project_constraints(const PgdParameterSet&, rvec&) {}

inline void set_bias_scale(ParameterSet& p, double b) { p.bias_scale = b; }
inline void set_bias_scale(PgdParameterSet&, double) {}
inline double bias_scale_of(const ParameterSet& p) { return p.bias_scale; }
inline double bias_scale_of(const PgdParameterSet&) { return 1.0; }

template <typename Model>
std::vector<std::vector<double>> batch_layer_wsr(const std::vector<ScenarioRealization>& batch,
                                                 const Model& model, const std::vector<int>& layers,
                                                 int substeps)
{
    std::vector<std::vector<double>> out;
    out.reserve(batch.size());
    for (const auto& s : batch) out.push_back(layer_wsr(s, model, layers, substeps));
    return out;
}

// Loss with r captured at the given parameters; equals -1 unless some WSR is zero.
template <typename Model>
double loss(const std::vector<ScenarioRealization>& batch, const Model& model,
            const std::vector<int>& layers, int substeps = default_mu_substeps)
{
    if (batch.empty()) throw config_error("loss: empty batch");
    const auto values = batch_layer_wsr(batch, model, layers, substeps);
    return normalized_loss(values, loss_scales(values));
}

// Loss as a function of the flat parameters with r frozen at `scales`.
template <typename Model>
FlatObjective frozen_loss_objective(const std::vector<ScenarioRealization>& batch, const Model& shape,
                                    const std::vector<int>& layers,
                                    std::vector<std::vector<double>> scales, int substeps)
{
    return [&batch, shape, layers, scales = std::move(scales), substeps](const rvec& flat) {
        const Model m = unpack(shape, flat);
        return normalized_loss(batch_layer_wsr(batch, m, layers, substeps), scales);
    };
}

template <typename Model>
GradientEstimate fd_gradient(const std::vector<ScenarioRealization>& batch, const Model& model,
                             const std::vector<int>& layers, double rel_step, double min_step,
                             int substeps = default_mu_substeps)
{
    const auto nominal = batch_layer_wsr(batch, model, layers, substeps);
    auto f = frozen_loss_objective(batch, model, layers, loss_scales(nominal), substeps);
    return fd_gradient(f, pack(model), rel_step, min_step);
}

template <typename Model>
GradientEstimate spsa_gradient(const std::vector<ScenarioRealization>& batch, const Model& model,
                               const std::vector<int>& layers, double scale, int probes,
                               std::mt19937_64& rng, int substeps = default_mu_substeps)
{
    const auto nominal = batch_layer_wsr(batch, model, layers, substeps);
    auto f = frozen_loss_objective(batch, model, layers, loss_scales(nominal), substeps);
    return spsa_gradient(f, pack(model), scale, probes, rng);
}

// ---------------------------------------------------------------------------
// Implicit derivative of the dual root

struct MuGradient {
    rvec d_phi;
    rvec d_lambda;
};

// d mu / d phi_m and d mu / d lambda_m at a root mu of the complementary
// slackness condition; all zeros on the inactive branch mu = 0.
MuGradient mu_opt_gradient(const DualSpectrum& ds, double mu);

// ---------------------------------------------------------------------------
// Optimizer

struct AdamWState {
    rvec m;
    rvec v;
    int t = 0;
};

struct OptimizerStepInfo {
    double learning_rate = 0.0;
    double grad_norm = 0.0;   // before clipping
    bool clipped = false;
};

double learning_rate_at(const TrainingConfig& c, int step);

// One AdamW step on a flat vector: global-norm clipping, moment update with
// bias correction, decoupled weight decay theta *= (1 - lr * decay).
OptimizerStepInfo adamw_step(rvec& theta, const rvec& grad, AdamWState& state, const TrainingConfig& c,
                             int step);

template <typename Model>
std::pair<Model, OptimizerStepInfo> optimizer_step(const Model& model, const GradientEstimate& g,
                                                   AdamWState& state, const TrainingConfig& c, int step)
{
    rvec theta = pack(model);
    if (state.m.size() == 0) {
        state.m = rvec::Zero(theta.size());
        state.v = rvec::Zero(theta.size());
    }
    if (state.m.size() != theta.size() || g.grad.size() != theta.size()) {
        throw dimension_error("optimizer_step: state/gradient dimension does not match parameters");
    }
    const auto info = adamw_step(theta, g.grad, state, c, step);
    project_constraints(model, theta);
    return {unpack(model, theta), info};
}

// ---------------------------------------------------------------------------
// Parameter initialization

// Complex taps CN(0, 1/F), biases 0, weight taps 1/(G+1), skip maps 0, b_S 1.
ParameterSet init_params(int layers, int features, int degree, std::uint64_t seed);

// WMMSE-equivalent parameters plus CN(0, scale^2) noise on a_V1 and c.
ParameterSet perturbed_wmmse_params(int layers, int features, int degree, double scale,
                                    std::uint64_t seed);

// Constant step 1 / (median largest eigenvalue of the first-layer R_k).
PgdParameterSet pgd_init_params(int layers, int substeps, const std::vector<ScenarioRealization>& samples);

// ---------------------------------------------------------------------------
// Training loop

// Fixed pool of realizations or an on-demand generator.
struct ScenarioSource {
    std::vector<ScenarioRealization> pool;
    std::optional<ScenarioConfig> generator;
    std::uint64_t seed = 0;

    std::vector<ScenarioRealization> batch(int step, int size) const;
};

struct TrainingLogRow {
    int step = 0;
    double loss = 0.0;          // mean of -wsr over batch and loss layers
    double learning_rate = 0.0;
    double grad_norm = 0.0;
    bool clipped = false;
    double bias_scale = 1.0;
    double validation_wsr = std::numeric_limits<double>::quiet_NaN();
};

template <typename Model>
struct TrainResult {
    Model best;
    Model last;
    std::vector<TrainingLogRow> log;
    double best_validation_wsr = std::numeric_limits<double>::quiet_NaN();
    int failed_partials = 0;
    bool diverged = false;
};

// Mean last-layer WSR over a set of realizations.
template <typename Model>
double mean_final_wsr(const std::vector<ScenarioRealization>& set, const Model& model,
                      int substeps = default_mu_substeps)
{
    if (set.empty()) return std::numeric_limits<double>::quiet_NaN();
    double acc = 0.0;
    const std::vector<int> last{layer_count(model)};
    for (const auto& s : set) acc += layer_wsr(s, model, last, substeps)[0];
    return acc / static_cast<double>(set.size());
}

double batch_bias_scale(const std::vector<ScenarioRealization>& batch);

// Training source plus held-out validation set.
struct TrainingData {
    ScenarioSource source;
    std::vector<ScenarioRealization> validation;
};

// Generator: validation sampled under a separate seed.
TrainingData training_data(const ScenarioConfig& generator, std::uint64_t seed, int validation_count);
// Fixed pool: the last validation_count realizations are held out.
TrainingData training_data(std::vector<ScenarioRealization> pool, std::uint64_t seed, int validation_count);
// Directory of scenario files or a generator config file.
TrainingData training_data(const std::filesystem::path& data, std::uint64_t seed, int validation_count);

// GCN-WMMSE start point from {"L", "F", "G", "init": "random" | "wmmse", "init_scale"}.
ParameterSet initial_params_from_json(const nlohmann::json& model, std::uint64_t seed);

template <typename Model>
TrainResult<Model> train(const TrainingConfig& config, const ScenarioSource& source,
                         const std::vector<ScenarioRealization>& validation, Model init)
{
    config.validate();
    const auto layers = loss_layers(config, layer_count(init));
    TrainResult<Model> result{init, init, {}, std::numeric_limits<double>::quiet_NaN(), 0, false};

    Model model = std::move(init);
    {
        const auto first = source.batch(0, config.batch_size);
        set_bias_scale(model, batch_bias_scale(first));
    }
    result.best = model;
    if (!validation.empty()) result.best_validation_wsr = mean_final_wsr(validation, model, config.substeps);

    AdamWState state;
    std::mt19937_64 spsa_rng = substream(config.seed, 0, 0x5b5au);
    double bias_scale = bias_scale_of(model);
    double initial_wsr = std::numeric_limits<double>::quiet_NaN();
    int collapse_run = 0;

    for (int step = 0; step < config.steps; ++step) {
        const auto batch = source.batch(step, config.batch_size);
        bias_scale = config.bias_scale_decay * bias_scale
                     + (1.0 - config.bias_scale_decay) * batch_bias_scale(batch);
        set_bias_scale(model, bias_scale);

        const auto nominal = batch_layer_wsr(batch, model, layers, config.substeps);
        double mean_wsr = 0.0;
        std::size_t terms = 0;
        for (const auto& row : nominal) {
            for (double x : row) { mean_wsr += x; ++terms; }
        }
        mean_wsr /= static_cast<double>(terms);
        if (step == 0) initial_wsr = mean_wsr;

        auto objective = frozen_loss_objective(batch, model, layers, loss_scales(nominal), config.substeps);
        GradientEstimate g = config.gradient == GradientMethod::central_fd
                                 ? fd_gradient(objective, pack(model), config.fd_step, config.fd_min_step)
                                 : spsa_gradient(objective, pack(model), config.spsa_scale,
                                                 config.spsa_probes, spsa_rng);
        result.failed_partials += g.failed_partials;

        auto [next, info] = optimizer_step(model, g, state, config, step);
        model = std::move(next);

        TrainingLogRow row;
        row.step = step;
        row.loss = -mean_wsr;
        row.learning_rate = info.learning_rate;
        row.grad_norm = info.grad_norm;
        row.clipped = info.clipped;
        row.bias_scale = bias_scale;

        const bool last_step = step + 1 == config.steps;
        if (!validation.empty() && ((step + 1) % config.validate_every == 0 || last_step)) {
            row.validation_wsr = mean_final_wsr(validation, model, config.substeps);
            if (!(row.validation_wsr <= result.best_validation_wsr)) {
                result.best_validation_wsr = row.validation_wsr;
                result.best = model;
            }
        }
        result.log.push_back(row);

        collapse_run = (initial_wsr > 0.0 && mean_wsr < 0.1 * initial_wsr) ? collapse_run + 1 : 0;
        if (collapse_run >= 50) {
            result.diverged = true;
            break;
        }
    }
    result.last = model;
    if (validation.empty()) result.best = model;
    return result;
}

} // namespace beamforge
