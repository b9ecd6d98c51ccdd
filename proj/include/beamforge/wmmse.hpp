#pragma once

#include <cstdint>
#include <vector>

#include "beamforge/common.hpp"
#include "beamforge/numerics.hpp"
#include "beamforge/rates.hpp"
#include "beamforge/scenario.hpp"

namespace beamforge {

// Eigenvalues lambda_m of R_k and diagonal phi_m of
// Phi_k = D^H (sum_i Vt_i Vt_i^H) D / P_k, both clamped at zero.
struct DualSpectrum {
    rvec lambdas;
    rvec phis;
    double power_budget = 1.0;
};

struct Upsilon {
    double value;        // sum phi / (lambda + mu)^2
    double derivative;   // -2 sum phi / (lambda + mu)^3
};

struct MuSolution {
    double mu = 0.0;
    double residual = 0.0;         // |upsilon(mu) - 1| when the constraint is active, else 0
    bool near_hard_case = false;   // residual above hard_case_threshold after all substeps
    std::vector<double> iterates;  // mu after each substep (empty when short-circuited)
};

constexpr double default_mu_init = 1e-12;
constexpr int default_mu_substeps = 8;
// Classical solver default: enough substeps from mu0 = 1e-12 to reach the root
// on spectra spanning many orders of magnitude, so each V block is an exact minimizer.
constexpr int solver_mu_substeps = 32;
constexpr double hard_case_threshold = 1e-6;

struct UplinkQuantities {
    std::vector<cmat> r;         // R_k per BS, Hermitian PSD
    std::vector<cmat> v_tilde;   // candidate beamformer per UE
};

// Per-iteration record of a solver or unrolled network.
struct SolverTrajectory {
    BeamformerSet initial;
    double initial_wsr = 0.0;
    std::vector<BeamformerSet> beamformers;
    std::vector<double> wsr;
    std::vector<rvec> mu;
    std::vector<rvec> cs_residual;     // mu_k * (power_k / P_k - 1)
    std::vector<rvec> dual_residual;   // |upsilon_k(mu_k) - 1|
    std::vector<int> hard_case_flags;  // cells flagged per iteration
    int communication_rounds = 0;

    std::size_t size() const { return wsr.size(); }
};

// U_i = J_i^{-1} H_ik V_i, solved by Cholesky.
std::vector<cmat> u_step(const ScenarioRealization& s, const BeamformerSet& v);

// W_i = (I - V_i^H H_ik^H U_i)^{-1}, symmetrized.
std::vector<cmat> w_step(const ScenarioRealization& s, const BeamformerSet& v,
                         const std::vector<cmat>& u);

// R_k = sum_j alpha_j H_jk^H U_j W_j U_j^H H_jk and Vt_i = alpha_i H_ik^H U_i W_i.
UplinkQuantities uplink_quantities(const ScenarioRealization& s, const std::vector<cmat>& u,
                                   const std::vector<cmat>& w);

DualSpectrum dual_spectrum(const HermitianEigd& r_eig, const std::vector<cmat>& cell_v_tilde,
                           double power_budget);
DualSpectrum dual_spectrum(const cmat& r, const std::vector<cmat>& cell_v_tilde, double power_budget);

// upsilon(mu) and its derivative; +infinity when some lambda + mu <= 1e-300
// carries positive phi.
Upsilon mu_residual(const DualSpectrum& ds, double mu);

// Rational-function root update for the complementary slackness condition,
// with negative iterates mapped to zero.
MuSolution mu_step(const DualSpectrum& ds, double mu0 = default_mu_init,
                   int substeps = default_mu_substeps);

// Reference root by bisection on upsilon(mu) = 1, to absolute tolerance tol.
double mu_bisection(const DualSpectrum& ds, double tol = 1e-13);

// V_i = (R_k + mu_k I)^dagger Vt_i for every UE.
BeamformerSet v_step(const ScenarioRealization& s, const std::vector<HermitianEigd>& r_eigs,
                     const std::vector<double>& mus, const std::vector<cmat>& v_tilde);

// V_i = c_k H_ik^H with c_k meeting P_k exactly.
BeamformerSet init_mrc(const ScenarioRealization& s);

// CN(0,1) entries scaled per cell to meet P_k exactly; deterministic per (seed, index).
BeamformerSet init_random(const ScenarioRealization& s, std::uint64_t seed, std::uint64_t index = 0);

// Scales every cell onto its power budget (only the ones above it).
BeamformerSet scale_to_budget(const ScenarioRealization& s, BeamformerSet v, bool exact);

// All intermediate quantities of a single WMMSE iteration.
struct WmmseIteration {
    std::vector<cmat> u;
    std::vector<cmat> w;
    UplinkQuantities uplink;
    std::vector<HermitianEigd> r_eigs;
    std::vector<MuSolution> mu;
    BeamformerSet v;
};

WmmseIteration wmmse_iteration(const ScenarioRealization& s, const BeamformerSet& v_prev,
                               int substeps = solver_mu_substeps);

// Fixed number of WMMSE iterations from `init`.
SolverTrajectory run(const ScenarioRealization& s, const BeamformerSet& init, int iterations,
                     int substeps = solver_mu_substeps);

// Appends one iteration's bookkeeping (wsr, mu, residuals) to a trajectory.
void record_iteration(const ScenarioRealization& s, SolverTrajectory& traj, BeamformerSet v,
                      const std::vector<MuSolution>& mu, int index);

} // namespace beamforge
