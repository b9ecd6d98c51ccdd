#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "beamforge/rates.hpp"
#include "beamforge/scenario.hpp"
#include "beamforge/wmmse.hpp"

namespace beamforge::test {

inline ScenarioConfig small_config(int k = 2, int m = 4, int ues_per_bs = 2, int n = 2, double power_dbm = 20.0,
                                   double noise_dbm = 0.0)
{
    return ScenarioConfig::uniform(k, m, ues_per_bs, n, dbm_to_watt(power_dbm), dbm_to_watt(noise_dbm));
}

inline ScenarioConfig triangle_config()
{
    return ScenarioConfig::uniform(3, 8, 2, 2, dbm_to_watt(30.0), dbm_to_watt(-90.0),
                                   ChannelModel::triangle_picocell);
}

// One BS, one single-antenna UE, scalar channel h, power 1, noise 1.
inline ScenarioRealization single_link(cplx h = 1.0)
{
    ScenarioConfig c = ScenarioConfig::uniform(1, 1, 1, 1, 1.0, 1.0);
    ScenarioRealization s{c, {cmat::Constant(1, 1, h)}, std::nullopt};
    s.validate();
    return s;
}

inline std::vector<int> random_permutation(int n, std::mt19937_64& rng)
{
    std::vector<int> p(n);
    std::iota(p.begin(), p.end(), 0);
    std::shuffle(p.begin(), p.end(), rng);
    return p;
}

// Permutation matrix P with (P x)(i) = x(perm[i]).
inline cmat permutation_matrix(const std::vector<int>& perm)
{
    const int n = static_cast<int>(perm.size());
    cmat p = cmat::Zero(n, n);
    for (int i = 0; i < n; ++i) p(i, perm[i]) = 1.0;
    return p;
}

// Relative distance between two beamformer sets.
inline double max_rel_diff(const BeamformerSet& a, const BeamformerSet& b)
{
    double worst = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        const double scale = std::max(1.0, b.v[i].norm());
        worst = std::max(worst, (a.v[i] - b.v[i]).norm() / scale);
    }
    return worst;
}

// Direct evaluation of upsilon(mu) for oracle purposes.
inline double upsilon(const rvec& lambdas, const rvec& phis, double mu)
{
    return (phis.array() / (lambdas.array() + mu).square()).sum();
}

// Random spectrum with upsilon(0) > 1 when active is requested.
inline DualSpectrum random_spectrum(std::mt19937_64& rng, int m)
{
    std::normal_distribution<double> g;
    DualSpectrum ds;
    ds.lambdas.resize(m);
    ds.phis.resize(m);
    for (int i = 0; i < m; ++i) {
        ds.lambdas(i) = std::abs(g(rng));
        ds.phis(i) = std::abs(g(rng));
    }
    return ds;
}

// Largest relative increase of the WMMSE surrogate across the U, W and
// (mu, V) block updates of `iterations` classical iterations.
inline double surrogate_violation(const ScenarioRealization& s, const BeamformerSet& init, int iterations,
                                  int substeps = solver_mu_substeps)
{
    BeamformerSet v = init;
    std::vector<cmat> u = u_step(s, v);
    std::vector<cmat> w = w_step(s, v, u);
    double f = wmmse_objective(s, ReceiverState{u, w}, v);
    double worst = 0.0;
    auto check = [&](double next) {
        worst = std::max(worst, (next - f) / std::max(std::abs(f), 1e-300));
        f = next;
    };
    for (int t = 0; t < iterations; ++t) {
        const WmmseIteration it = wmmse_iteration(s, v, substeps);
        check(wmmse_objective(s, ReceiverState{it.u, w}, v));
        check(wmmse_objective(s, ReceiverState{it.u, it.w}, v));
        check(wmmse_objective(s, ReceiverState{it.u, it.w}, it.v));
        u = it.u;
        w = it.w;
        v = it.v;
    }
    return worst;
}

// Column-permuted channels of BS k: H_ik -> H_ik P^T, so that beamformers map to P V.
inline ScenarioRealization permute_bs_antennas(ScenarioRealization s, int k, const cmat& p)
{
    for (int i = 0; i < s.config.num_ue(); ++i) s.channel(i, k) = s.channel(i, k) * p.transpose();
    return s;
}

} // namespace beamforge::test
