#include "beamforge/wmmse.hpp"

#include <cmath>
#include <limits>

#include <spdlog/spdlog.h>

#include "beamforge/rng.hpp"

namespace beamforge {

std::vector<cmat> u_step(const ScenarioRealization& s, const BeamformerSet& v)
{
    check_shapes(s, v);
    const auto tx = transmit_covariances(s, v);
    std::vector<cmat> u(s.config.num_ue());
    for (int i = 0; i < s.config.num_ue(); ++i) {
        const cmat j = receive_covariance(s, tx, i);
        const cmat hv = s.channel(i, s.config.serving_bs(i)) * v[i];
        Eigen::LLT<cmat> llt(j);
        if (llt.info() != Eigen::Success) {
            throw numeric_error("u_step: receive covariance of UE " + std::to_string(i)
                                + " is not positive definite");
        }
        u[i] = llt.solve(hv);
    }
    return u;
}

std::vector<cmat> w_step(const ScenarioRealization& s, const BeamformerSet& v,
                         const std::vector<cmat>& u)
{
    std::vector<cmat> w(s.config.num_ue());
    for (int i = 0; i < s.config.num_ue(); ++i) {
        const int n = s.config.ue_antennas[i];
        const cmat h = s.channel(i, s.config.serving_bs(i));
        const cmat e = hermitian_part(cmat(cmat::Identity(n, n) - v[i].adjoint() * h.adjoint() * u[i]));
        Eigen::SelfAdjointEigenSolver<cmat> es(e, Eigen::EigenvaluesOnly);
        const double lo = es.eigenvalues().minCoeff();
        const double hi = es.eigenvalues().maxCoeff();
        if (!(lo > 0.0) || hi / lo > 1e14) {
            spdlog::warn("w_step: MMSE matrix of UE {} is ill-conditioned (eigenvalues in [{}, {}])",
                         i, lo, hi);
        }
        w[i] = hermitian_part(cmat(e.inverse()));
    }
    return w;
}

UplinkQuantities uplink_quantities(const ScenarioRealization& s, const std::vector<cmat>& u,
                                   const std::vector<cmat>& w)
{
    const auto& c = s.config;
    UplinkQuantities out;
    out.r.reserve(c.num_bs());
    for (int k = 0; k < c.num_bs(); ++k) out.r.push_back(cmat::Zero(c.bs_antennas[k], c.bs_antennas[k]));
    out.v_tilde.resize(c.num_ue());
    for (int j = 0; j < c.num_ue(); ++j) {
        const cmat uwu = c.weights[j] * (u[j] * w[j] * u[j].adjoint());
        for (int k = 0; k < c.num_bs(); ++k) {
            const cmat& h = s.channel(j, k);
            out.r[k].noalias() += h.adjoint() * uwu * h;
        }
        out.v_tilde[j] = c.weights[j] * (s.channel(j, c.serving_bs(j)).adjoint() * u[j] * w[j]);
    }
    for (auto& r : out.r) r = hermitian_part(r);
    return out;
}

DualSpectrum dual_spectrum(const HermitianEigd& r_eig, const std::vector<cmat>& cell_v_tilde,
                           double power_budget)
{
    DualSpectrum ds;
    ds.power_budget = power_budget;
    ds.lambdas = r_eig.eigenvalues.cwiseMax(0.0);
    ds.phis = rvec::Zero(r_eig.dim());
    for (const cmat& vt : cell_v_tilde) {
        const cmat proj = r_eig.eigenvectors.adjoint() * vt;
        ds.phis += proj.rowwise().squaredNorm();
    }
    ds.phis = (ds.phis / power_budget).cwiseMax(0.0);
    return ds;
}

DualSpectrum dual_spectrum(const cmat& r, const std::vector<cmat>& cell_v_tilde, double power_budget)
{
    return dual_spectrum(herm_eig(r), cell_v_tilde, power_budget);
}

Upsilon mu_residual(const DualSpectrum& ds, double mu)
{
    Upsilon out{0.0, 0.0};
    for (Eigen::Index m = 0; m < ds.lambdas.size(); ++m) {
        const double phi = ds.phis(m);
        if (phi <= 0.0) continue;
        const double x = ds.lambdas(m) + mu;
        if (x <= 1e-300) {
            return {std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
        }
        const double inv2 = 1.0 / (x * x);
        out.value += phi * inv2;
        out.derivative -= 2.0 * phi * inv2 / x;
    }
    return out;
}

MuSolution mu_step(const DualSpectrum& ds, double mu0, int substeps)
{
    MuSolution out;
    if (ds.phis.sum() <= 1e-30) return out;
    if (mu_residual(ds, 0.0).value <= 1.0 + 1e-12) return out;

    double mu = std::max(mu0, 0.0);
    out.iterates.reserve(substeps);
    for (int p = 0; p < substeps; ++p) {
        const Upsilon u = mu_residual(ds, mu);
        if (!std::isfinite(u.value)) {
            mu = std::max(2.0 * mu, default_mu_init);
        } else if (u.derivative < 0.0) {
            mu += 2.0 * u.value / u.derivative * (1.0 - std::sqrt(u.value));
        }
        if (mu < 0.0) mu = 0.0;
        out.iterates.push_back(mu);
    }
    out.mu = mu;
    out.residual = std::abs(mu_residual(ds, mu).value - 1.0);
    out.near_hard_case = !(out.residual <= hard_case_threshold);
    return out;
}

double mu_bisection(const DualSpectrum& ds, double tol)
{
    if (ds.phis.sum() <= 1e-30 || mu_residual(ds, 0.0).value <= 1.0) return 0.0;
    double lo = 0.0;
    double hi = std::sqrt(ds.phis.sum()) + 1.0;
    while (mu_residual(ds, hi).value > 1.0) hi *= 2.0;
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (mu_residual(ds, mid).value > 1.0) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
}

BeamformerSet v_step(const ScenarioRealization& s, const std::vector<HermitianEigd>& r_eigs,
                     const std::vector<double>& mus, const std::vector<cmat>& v_tilde)
{
    BeamformerSet out;
    out.v.resize(s.config.num_ue());
    for (int i = 0; i < s.config.num_ue(); ++i) {
        const int k = s.config.serving_bs(i);
        out[i] = shifted_pinv_apply(r_eigs[k], mus[k], v_tilde[i]);
    }
    return out;
}

BeamformerSet scale_to_budget(const ScenarioRealization& s, BeamformerSet v, bool exact)
{
    for (int k = 0; k < s.config.num_bs(); ++k) {
        const double p = cell_power(s, v, k);
        const double budget = s.config.bs_power[k];
        if (!(p > 0.0)) continue;
        if (exact || p > budget) {
            const double scale = std::sqrt(budget / p);
            for (int i : s.config.cells[k]) v[i] *= scale;
        }
    }
    return v;
}

BeamformerSet init_mrc(const ScenarioRealization& s)
{
    BeamformerSet v;
    v.v.resize(s.config.num_ue());
    for (int i = 0; i < s.config.num_ue(); ++i) v[i] = s.channel(i, s.config.serving_bs(i)).adjoint();
    for (int k = 0; k < s.config.num_bs(); ++k) {
        if (cell_power(s, v, k) > 0.0) continue;
        spdlog::warn("init_mrc: all channels of cell {} are zero, using random beamformers", k);
        auto rng = substream(0, static_cast<std::uint64_t>(k), 0x3c7u);
        for (int i : s.config.cells[k]) v[i] = complex_gaussian(rng, v[i].rows(), v[i].cols());
    }
    return scale_to_budget(s, std::move(v), true);
}

BeamformerSet init_random(const ScenarioRealization& s, std::uint64_t seed, std::uint64_t index)
{
    auto rng = substream(seed, index, 0x1a17u);
    BeamformerSet v;
    v.v.resize(s.config.num_ue());
    for (int i = 0; i < s.config.num_ue(); ++i) {
        v[i] = complex_gaussian(rng, s.config.bs_antennas[s.config.serving_bs(i)], s.config.ue_antennas[i]);
    }
    return scale_to_budget(s, std::move(v), true);
}

WmmseIteration wmmse_iteration(const ScenarioRealization& s, const BeamformerSet& v_prev, int substeps)
{
    WmmseIteration it;
    it.u = u_step(s, v_prev);
    it.w = w_step(s, v_prev, it.u);
    it.uplink = uplink_quantities(s, it.u, it.w);
    const int k_count = s.config.num_bs();
    std::vector<double> mus(k_count);
    it.r_eigs.reserve(k_count);
    it.mu.reserve(k_count);
    for (int k = 0; k < k_count; ++k) {
        it.r_eigs.push_back(herm_eig(it.uplink.r[k]));
        std::vector<cmat> cell_vt;
        for (int i : s.config.cells[k]) cell_vt.push_back(it.uplink.v_tilde[i]);
        it.mu.push_back(mu_step(dual_spectrum(it.r_eigs[k], cell_vt, s.config.bs_power[k]),
                                default_mu_init, substeps));
        mus[k] = it.mu.back().mu;
    }
    it.v = v_step(s, it.r_eigs, mus, it.uplink.v_tilde);
    return it;
}

void record_iteration(const ScenarioRealization& s, SolverTrajectory& traj, BeamformerSet v,
                      const std::vector<MuSolution>& mu, int index)
{
    if (!v.all_finite()) {
        throw numeric_error("non-finite beamformer at iteration " + std::to_string(index));
    }
    const int k_count = s.config.num_bs();
    rvec mus = rvec::Zero(k_count);
    rvec cs = rvec::Zero(k_count);
    rvec dual = rvec::Zero(k_count);
    int flags = 0;
    for (int k = 0; k < k_count && k < static_cast<int>(mu.size()); ++k) {
        mus(k) = mu[k].mu;
        cs(k) = mu[k].mu * (cell_power(s, v, k) / s.config.bs_power[k] - 1.0);
        dual(k) = mu[k].residual;
        flags += mu[k].near_hard_case ? 1 : 0;
    }
    const double rate = wsr(s, v);
    if (!std::isfinite(rate)) throw numeric_error("non-finite WSR at iteration " + std::to_string(index));
    traj.wsr.push_back(rate);
    traj.mu.push_back(std::move(mus));
    traj.cs_residual.push_back(std::move(cs));
    traj.dual_residual.push_back(std::move(dual));
    traj.hard_case_flags.push_back(flags);
    traj.beamformers.push_back(std::move(v));
    traj.communication_rounds = static_cast<int>(traj.wsr.size());
}

SolverTrajectory run(const ScenarioRealization& s, const BeamformerSet& init, int iterations, int substeps)
{
    check_shapes(s, init);
    SolverTrajectory traj;
    traj.initial = init;
    traj.initial_wsr = wsr(s, init);
    BeamformerSet v = init;
    for (int l = 0; l < iterations; ++l) {
        WmmseIteration it = wmmse_iteration(s, v, substeps);
        v = it.v;
        record_iteration(s, traj, std::move(it.v), it.mu, l + 1);
    }
    return traj;
}

} // namespace beamforge
