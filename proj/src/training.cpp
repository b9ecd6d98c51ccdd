#include "beamforge/training.hpp"

#include <algorithm>

#include <spdlog/spdlog.h>

namespace beamforge {

void TrainingConfig::validate() const
{
    if (steps < 0) throw config_error("training: steps must be >= 0");
    if (batch_size < 1) throw config_error("training: batch size must be >= 1");
    if (!(learning_rate > 0.0) || !(lr_decay > 0.0) || decay_interval < 1) {
        throw config_error("training: learning-rate schedule must be positive");
    }
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
        throw config_error("training: moment coefficients must lie in [0, 1)");
    }
    if (weight_decay < 0.0 || !(epsilon > 0.0) || !(clip_norm > 0.0)) {
        throw config_error("training: weight decay, epsilon and clip threshold must be positive");
    }
    if (!(fd_step > 0.0) || !(fd_min_step > 0.0)) throw config_error("training: FD steps must be > 0");
    if (!(spsa_scale > 0.0) || spsa_probes < 1) throw config_error("training: SPSA scale/probes must be > 0");
    if (validate_every < 1 || substeps < 1) throw config_error("training: validate_every and substeps must be >= 1");
    if (bias_scale_decay < 0.0 || bias_scale_decay >= 1.0) throw config_error("training: bias_scale_decay in [0, 1)");
}

TrainingConfig training_config_from_json(const nlohmann::json& j)
{
    TrainingConfig c;
    try {
        c.steps = j.value("steps", c.steps);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.lr_decay = j.value("lr_decay", c.lr_decay);
        c.decay_interval = j.value("decay_interval", c.decay_interval);
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.epsilon = j.value("epsilon", c.epsilon);
        c.clip_norm = j.value("clip_norm", c.clip_norm);
        const std::string layers = j.value("loss_layers", std::string("last"));
        if (layers != "last" && layers != "all") throw config_error("training: loss_layers must be 'last' or 'all'");
        c.loss_all_layers = layers == "all";
        const std::string grad = j.value("gradient", std::string("fd"));
        if (grad == "fd") c.gradient = GradientMethod::central_fd;
        else if (grad == "spsa") c.gradient = GradientMethod::spsa;
        else throw config_error("training: gradient must be 'fd' or 'spsa'");
        c.fd_step = j.value("fd_step", c.fd_step);
        c.fd_min_step = j.value("fd_min_step", c.fd_min_step);
        c.spsa_scale = j.value("spsa_scale", c.spsa_scale);
        c.spsa_probes = j.value("spsa_probes", c.spsa_probes);
        c.validate_every = j.value("validate_every", c.validate_every);
        c.substeps = j.value("substeps", c.substeps);
        c.bias_scale_decay = j.value("bias_scale_decay", c.bias_scale_decay);
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("training config: ") + e.what());
    }
    c.validate();
    return c;
}

nlohmann::json training_config_to_json(const TrainingConfig& c)
{
    return {{"steps", c.steps},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"lr_decay", c.lr_decay},
            {"decay_interval", c.decay_interval},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"weight_decay", c.weight_decay},
            {"epsilon", c.epsilon},
            {"clip_norm", c.clip_norm},
            {"loss_layers", c.loss_all_layers ? "all" : "last"},
            {"gradient", c.gradient == GradientMethod::central_fd ? "fd" : "spsa"},
            {"fd_step", c.fd_step},
            {"fd_min_step", c.fd_min_step},
            {"spsa_scale", c.spsa_scale},
            {"spsa_probes", c.spsa_probes},
            {"validate_every", c.validate_every},
            {"substeps", c.substeps},
            {"bias_scale_decay", c.bias_scale_decay},
            {"seed", c.seed}};
}

std::vector<int> loss_layers(const TrainingConfig& c, int model_layers)
{
    if (!c.loss_all_layers) return {model_layers};
    std::vector<int> out(model_layers);
    for (int l = 0; l < model_layers; ++l) out[l] = l + 1;
    return out;
}

namespace {

double safe_eval(const FlatObjective& f, const rvec& theta)
{
    try {
        return f(theta);
    } catch (const error&) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

} // namespace

GradientEstimate fd_gradient(const FlatObjective& f, const rvec& theta, double rel_step, double min_step)
{
    if (!(rel_step > 0.0) || !(min_step > 0.0)) throw config_error("fd_gradient: step must be > 0");
    GradientEstimate out;
    out.loss = f(theta);
    out.grad = rvec::Zero(theta.size());
    rvec probe = theta;
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
        const double h = std::max(rel_step * std::abs(theta(j)), min_step);
        probe(j) = theta(j) + h;
        const double up = safe_eval(f, probe);
        probe(j) = theta(j) - h;
        const double down = safe_eval(f, probe);
        probe(j) = theta(j);
        const double d = (up - down) / (2.0 * h);
        if (std::isfinite(d)) {
            out.grad(j) = d;
        } else {
            ++out.failed_partials;
        }
    }
    if (out.failed_partials > 0) {
        spdlog::warn("fd_gradient: {} partial derivatives failed and were set to 0", out.failed_partials);
    }
    return out;
}

GradientEstimate spsa_gradient(const FlatObjective& f, const rvec& theta, double scale, int probes,
                               std::mt19937_64& rng)
{
    if (!(scale > 0.0)) throw config_error("spsa_gradient: perturbation scale must be > 0");
    if (probes < 1) throw config_error("spsa_gradient: need at least one probe");
    GradientEstimate out;
    out.loss = f(theta);
    out.grad = rvec::Zero(theta.size());
    std::bernoulli_distribution coin(0.5);
    int used = 0;
    rvec delta(theta.size());
    for (int p = 0; p < probes; ++p) {
        for (Eigen::Index j = 0; j < theta.size(); ++j) delta(j) = coin(rng) ? 1.0 : -1.0;
        const double up = safe_eval(f, theta + scale * delta);
        const double down = safe_eval(f, theta - scale * delta);
        const double slope = (up - down) / (2.0 * scale);
        if (!std::isfinite(slope)) {
            ++out.failed_partials;
            continue;
        }
        out.grad += slope * delta;   // 1 / delta_j == delta_j
        ++used;
    }
    if (used > 0) out.grad /= static_cast<double>(used);
    return out;
}

double normalized_loss(const std::vector<std::vector<double>>& layer_wsr,
                       const std::vector<std::vector<double>>& scales)
{
    if (layer_wsr.empty()) throw config_error("normalized_loss: empty batch");
    double acc = 0.0;
    std::size_t terms = 0;
    for (std::size_t n = 0; n < layer_wsr.size(); ++n) {
        for (std::size_t l = 0; l < layer_wsr[n].size(); ++l) {
            acc += -layer_wsr[n][l] / scales[n][l];
            ++terms;
        }
    }
    return acc / static_cast<double>(terms);
}

std::vector<std::vector<double>> loss_scales(const std::vector<std::vector<double>>& layer_wsr)
{
    std::vector<std::vector<double>> r = layer_wsr;
    for (auto& row : r) {
        for (double& x : row) {
            x = std::abs(x);
            if (x < 1e-12) {
                spdlog::warn("loss: zero-WSR sample, normalization floored at 1e-12");
                x = 1e-12;
            }
        }
    }
    return r;
}

namespace {

std::vector<double> pick_layers(const SolverTrajectory& traj, const std::vector<int>& layers)
{
    std::vector<double> out;
    out.reserve(layers.size());
    for (int l : layers) {
        if (l < 1 || l > static_cast<int>(traj.wsr.size())) throw config_error("loss layer out of range");
        out.push_back(traj.wsr[l - 1]);
    }
    return out;
}

} // namespace

std::vector<double> layer_wsr(const ScenarioRealization& s, const ParameterSet& p,
                              const std::vector<int>& layers, int substeps)
{
    return pick_layers(gcnwmmse_forward(s, p, substeps), layers);
}

std::vector<double> layer_wsr(const ScenarioRealization& s, const PgdParameterSet& p,
                              const std::vector<int>& layers, int)
{
    return pick_layers(pgd_forward(s, p), layers);
}

void project_constraints(const ParameterSet& shape, rvec& flat)
{
    ParameterSet p = unpack(shape, flat);
    for (auto& lp : p.layer) lp.a_w = lp.a_w.cwiseMax(0.0);
    flat = pack(p);
}

MuGradient mu_opt_gradient(const DualSpectrum& ds, double mu)
{
    const Eigen::Index n = ds.lambdas.size();
    MuGradient g{rvec::Zero(n), rvec::Zero(n)};
    if (!(mu > 0.0)) return g;
    const rvec shifted = ds.lambdas.array() + mu;
    const double denom = (ds.phis.array() / shifted.array().cube()).sum();
    if (!(denom > 0.0)) return g;
    g.d_phi = shifted.array().square().inverse() / (2.0 * denom);
    g.d_lambda = -(ds.phis.array() / shifted.array().cube()) / denom;
    return g;
}

double learning_rate_at(const TrainingConfig& c, int step)
{
    return c.learning_rate * std::pow(c.lr_decay, static_cast<double>(step / c.decay_interval));
}

OptimizerStepInfo adamw_step(rvec& theta, const rvec& grad, AdamWState& state, const TrainingConfig& c,
                             int step)
{
    if (state.m.size() == 0) {
        state.m = rvec::Zero(theta.size());
        state.v = rvec::Zero(theta.size());
    }
    OptimizerStepInfo info;
    info.learning_rate = learning_rate_at(c, step);
    info.grad_norm = grad.norm();
    rvec g = grad;
    if (info.grad_norm > c.clip_norm) {
        g *= c.clip_norm / info.grad_norm;
        info.clipped = true;
    }
    state.t += 1;
    state.m = c.beta1 * state.m + (1.0 - c.beta1) * g;
    state.v = c.beta2 * state.v + (1.0 - c.beta2) * g.cwiseAbs2();
    const double bc1 = 1.0 - std::pow(c.beta1, state.t);
    const double bc2 = 1.0 - std::pow(c.beta2, state.t);
    const rvec m_hat = state.m / bc1;
    const rvec v_hat = state.v / bc2;
    theta *= 1.0 - info.learning_rate * c.weight_decay;
    theta.array() -= info.learning_rate * m_hat.array() / (v_hat.array().sqrt() + c.epsilon);
    return info;
}

ParameterSet init_params(int layers, int features, int degree, std::uint64_t seed)
{
    auto rng = substream(seed, 0, 0x9a7au);
    ParameterSet p;
    p.layers = layers;
    p.features = features;
    p.degree = degree;
    p.bias_scale = 1.0;
    const double var = 1.0 / features;
    for (int l = 0; l < layers; ++l) {
        GcnLayerParams lp;
        lp.a_w = rvec::Constant(degree + 1, 1.0 / (degree + 1));
        lp.a_v1 = complex_gaussian(rng, features, 1, var);
        lp.a_v0 = complex_gaussian(rng, features, 1, var);
        lp.b = rvec::Zero(features);
        lp.c = complex_gaussian(rng, features, 1, var);
        if (l > 0) lp.d = cmat::Zero(features, features);
        p.layer.push_back(std::move(lp));
    }
    p.validate();
    return p;
}

ParameterSet perturbed_wmmse_params(int layers, int features, int degree, double scale, std::uint64_t seed)
{
    auto rng = substream(seed, 0, 0x7e57u);
    ParameterSet p = wmmse_equivalent_params(layers, features, degree);
    const double var = scale * scale;
    for (auto& lp : p.layer) {
        // a_V0 multiplies the raw candidate, which is typically orders of magnitude
        // larger than the filtered one; it stays at zero.
        lp.a_v1 += complex_gaussian(rng, features, 1, var);
        lp.c += complex_gaussian(rng, features, 1, var);
    }
    return p;
}

PgdParameterSet pgd_init_params(int layers, int substeps, const std::vector<ScenarioRealization>& samples)
{
    if (samples.empty()) throw config_error("pgd_init_params: need at least one sample");
    std::vector<double> lmax;
    for (const auto& s : samples) {
        const auto v = init_mrc(s);
        const auto u = u_step(s, v);
        const auto w = w_step(s, v, u);
        const auto up = uplink_quantities(s, u, w);
        for (const auto& r : up.r) lmax.push_back(herm_eig(r).eigenvalues.maxCoeff());
    }
    std::nth_element(lmax.begin(), lmax.begin() + lmax.size() / 2, lmax.end());
    return pgd_constant_params(layers, substeps, 1.0 / lmax[lmax.size() / 2]);
}

std::vector<ScenarioRealization> ScenarioSource::batch(int step, int size) const
{
    std::vector<ScenarioRealization> out;
    out.reserve(size);
    if (generator) {
        for (int j = 0; j < size; ++j) {
            out.push_back(sample(*generator, seed, static_cast<std::uint64_t>(step) * size + j));
        }
        return out;
    }
    if (pool.empty()) throw config_error("scenario source has neither a pool nor a generator");
    auto rng = substream(seed, static_cast<std::uint64_t>(step), 0xba7cu);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (int j = 0; j < size; ++j) out.push_back(pool[pick(rng)]);
    return out;
}

double batch_bias_scale(const std::vector<ScenarioRealization>& batch)
{
    double acc = 0.0;
    int terms = 0;
    for (const auto& s : batch) {
        for (int k = 0; k < s.config.num_bs(); ++k) {
            acc += std::sqrt(s.config.bs_power[k] / static_cast<double>(s.config.cells[k].size()));
            ++terms;
        }
    }
    return terms > 0 ? acc / terms : 1.0;
}

TrainingData training_data(const ScenarioConfig& generator, std::uint64_t seed, int validation_count)
{
    TrainingData d;
    d.source.generator = generator;
    d.source.seed = seed;
    for (int n = 0; n < validation_count; ++n) {
        d.validation.push_back(sample(generator, seed + 0x5eedu, static_cast<std::uint64_t>(n)));
    }
    return d;
}

TrainingData training_data(std::vector<ScenarioRealization> pool, std::uint64_t seed, int validation_count)
{
    const int held = std::max(0, std::min<int>(validation_count, static_cast<int>(pool.size()) - 1));
    TrainingData d;
    d.source.seed = seed;
    d.validation.assign(pool.end() - held, pool.end());
    pool.resize(pool.size() - held);
    d.source.pool = std::move(pool);
    return d;
}

TrainingData training_data(const std::filesystem::path& data, std::uint64_t seed, int validation_count)
{
    if (std::filesystem::is_directory(data)) return training_data(load_realization_dir(data), seed, validation_count);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(data));
    } catch (const nlohmann::json::parse_error& e) {
        throw parse_error(data.string() + ": " + e.what(), e.byte);
    }
    return training_data(config_from_json(j), seed, validation_count);
}

ParameterSet initial_params_from_json(const nlohmann::json& model, std::uint64_t seed)
{
    try {
        const int layers = model.value("L", 3);
        const int features = model.value("F", 2);
        const int degree = model.value("G", 2);
        const std::string init = model.value("init", std::string("random"));
        if (init == "random") return init_params(layers, features, degree, seed);
        if (init == "wmmse") {
            return perturbed_wmmse_params(layers, features, degree, model.value("init_scale", 0.01), seed);
        }
        throw config_error("model init must be 'random' or 'wmmse'");
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("model: ") + e.what());
    }
}

} // namespace beamforge
