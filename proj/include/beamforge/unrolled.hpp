#pragma once

#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "beamforge/common.hpp"
#include "beamforge/wmmse.hpp"

namespace beamforge {

// Trainable parameters of one GCN-WMMSE layer.
struct GcnLayerParams {
    rvec a_w;    // weight-matrix filter taps, G + 1, non-negative
    cvec a_v1;   // taps on (R_k + mu I)^dagger vt, F
    cvec a_v0;   // taps on vt, F
    rvec b;      // modReLU bias, F
    cvec c;      // feature combiner, F
    cmat d;      // skip map F x F; empty for the first layer

    bool operator==(const GcnLayerParams&) const = default;
};

struct ParameterSet {
    int layers = 0;
    int features = 0;
    int degree = 0;
    double bias_scale = 1.0;   // b_S
    std::vector<GcnLayerParams> layer;

    // Throws config_error on shape mismatch, negative taps or b_S <= 0.
    void validate() const;

    // Number of real degrees of freedom (complex entries count twice).
    int real_dof() const;

    bool operator==(const ParameterSet&) const = default;
};

// Complex parameters counted once each: L(4F + G + 1) + (L - 1)F^2.
long param_count(int layers, int features, int degree);

// Per-UE, per-stream feature matrices (M_k x F) carried between layers.
struct LayerState {
    std::vector<std::vector<cmat>> p;   // [ue][stream]

    bool empty() const { return p.empty(); }
};

// a_0 I + sum_g a_g / (tr(W)/N)^(g-1) W^g
cmat weight_gcf(const cmat& w_hat, const rvec& taps);

// (|x| + b) x / |x| when |x| + b > 0, otherwise 0 (also 0 for x = 0).
cplx modrelu(cplx x, double b);

struct GcnLayerOutput {
    BeamformerSet v_hat;   // before power projection
    LayerState state;
};

// Downlink GCN: P_id = (R_k + mu_k I)^dagger vt a_V1^T + vt a_V0^T + P_id^prev D,
// v_id = modReLU(P_id, sqrt(P_k / |I_k|) b / b_S) c.
GcnLayerOutput downlink_gcn_layer(const ScenarioRealization& s,
                                  const std::vector<HermitianEigd>& r_eigs,
                                  const std::vector<double>& mus, const std::vector<cmat>& v_tilde,
                                  const LayerState& prev, const GcnLayerParams& params,
                                  double bias_scale);

// Rescales the beamformers of one cell so that their sum power is at most P.
void power_projection(std::vector<cmat*> cell, double power_budget);
BeamformerSet power_projection(const ScenarioRealization& s, BeamformerSet v);

// L layers from the MRC initialization.
SolverTrajectory gcnwmmse_forward(const ScenarioRealization& s, const ParameterSet& params,
                                  int substeps = default_mu_substeps);

// Parameters reproducing classical WMMSE iterations exactly.
ParameterSet wmmse_equivalent_params(int layers, int features, int degree);

// Flat real view used by the trainer: per layer a_w, a_v1 (re, im), a_v0, b, c, d.
rvec pack(const ParameterSet& params);
ParameterSet unpack(const ParameterSet& shape, const rvec& flat);

constexpr int params_schema_version = 1;
nlohmann::json params_to_json(const ParameterSet& params);
ParameterSet params_from_json(const nlohmann::json& j);
void save_params(const ParameterSet& params, const std::filesystem::path& path);
ParameterSet load_params(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Unfolded projected gradient descent on the V subproblem.

struct PgdParameterSet {
    int layers = 0;
    int substeps = 0;
    std::vector<rvec> step;   // gamma[layer](substep) > 0

    void validate() const;
    bool operator==(const PgdParameterSet&) const = default;
};

// Q substeps V <- Proj(V - gamma_q (R_k V - Vt)) over one cell, starting at v_prev.
std::vector<cmat> pgd_v_step(const cmat& r, const std::vector<cmat>& cell_v_tilde,
                             std::vector<cmat> cell_v_prev, const rvec& gamma, double power_budget);

// L layers of U, W, then Q PGD substeps per cell, from the MRC initialization.
SolverTrajectory pgd_forward(const ScenarioRealization& s, const PgdParameterSet& params);

PgdParameterSet pgd_constant_params(int layers, int substeps, double gamma);

// Flat view: log(gamma), layer-major.
rvec pack(const PgdParameterSet& params);
PgdParameterSet unpack(const PgdParameterSet& shape, const rvec& flat);

nlohmann::json pgd_params_to_json(const PgdParameterSet& params);
PgdParameterSet pgd_params_from_json(const nlohmann::json& j);

} // namespace beamforge
