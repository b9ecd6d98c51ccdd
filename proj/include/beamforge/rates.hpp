#pragma once

#include <vector>

#include "beamforge/common.hpp"
#include "beamforge/scenario.hpp"

namespace beamforge {

// Downlink precoders, one M_k x N_i matrix per UE (k its serving BS).
struct BeamformerSet {
    std::vector<cmat> v;

    BeamformerSet() = default;
    explicit BeamformerSet(std::vector<cmat> per_ue) : v(std::move(per_ue)) {}

    static BeamformerSet zeros(const ScenarioConfig& config);

    std::size_t size() const { return v.size(); }
    cmat& operator[](std::size_t i) { return v[i]; }
    const cmat& operator[](std::size_t i) const { return v[i]; }

    bool all_finite() const;
};

// Receive filters U_i and MSE weights W_i (both N_i x N_i).
struct ReceiverState {
    std::vector<cmat> u;
    std::vector<cmat> w;
};

// Checks that every V_i has the shape the configuration implies.
void check_shapes(const ScenarioRealization& s, const BeamformerSet& v);

// sum_{i in I_k} ||V_i||_F^2
double cell_power(const ScenarioRealization& s, const BeamformerSet& v, int bs);

// Sum power of every cell within P_k (1 + rel_tol).
bool is_feasible(const ScenarioRealization& s, const BeamformerSet& v, double rel_tol = 1e-9);

// Per-BS transmit covariance sum_{j in I_k} V_j V_j^H.
std::vector<cmat> transmit_covariances(const ScenarioRealization& s, const BeamformerSet& v);

// J_i = sum_k H_ik C_k H_ik^H + sigma_i^2 I, the receive covariance at UE i.
cmat receive_covariance(const ScenarioRealization& s, const std::vector<cmat>& tx_cov, int ue);

// Achievable rate of UE i in nats (times bandwidth), treating interference as noise.
double ue_rate(const ScenarioRealization& s, const BeamformerSet& v, int ue);

// All per-UE rates.
std::vector<double> ue_rates(const ScenarioRealization& s, const BeamformerSet& v);

// Weighted sum rate sum_i alpha_i R_i in nats.
double wsr(const ScenarioRealization& s, const BeamformerSet& v);

// Symbol error covariance at UE i for receive filter u:
// I - U^H H V - V^H H^H U + U^H J U.
cmat error_covariance(const ScenarioRealization& s, const std::vector<cmat>& tx_cov,
                      const BeamformerSet& v, const cmat& u, int ue);

// sum_i alpha_i (tr(W_i E_i) - logdet W_i). Throws numeric_error if some W_i
// is not positive definite.
double wmmse_objective(const ScenarioRealization& s, const ReceiverState& uw, const BeamformerSet& v);

} // namespace beamforge
