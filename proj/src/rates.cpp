#include "beamforge/rates.hpp"

#include <algorithm>

#include "beamforge/numerics.hpp"

namespace beamforge {

BeamformerSet BeamformerSet::zeros(const ScenarioConfig& config)
{
    BeamformerSet out;
    out.v.reserve(config.num_ue());
    for (int i = 0; i < config.num_ue(); ++i) {
        out.v.push_back(cmat::Zero(config.bs_antennas[config.serving_bs(i)], config.ue_antennas[i]));
    }
    return out;
}

bool BeamformerSet::all_finite() const
{
    return std::all_of(v.begin(), v.end(), [](const cmat& m) { return m.allFinite(); });
}

void check_shapes(const ScenarioRealization& s, const BeamformerSet& v)
{
    const auto& c = s.config;
    if (static_cast<int>(v.size()) != c.num_ue()) {
        throw dimension_error("beamformer set has " + std::to_string(v.size()) + " entries, expected "
                              + std::to_string(c.num_ue()));
    }
    for (int i = 0; i < c.num_ue(); ++i) {
        if (v[i].rows() != c.bs_antennas[c.serving_bs(i)] || v[i].cols() != c.ue_antennas[i]) {
            throw dimension_error("beamformer of UE " + std::to_string(i) + " has wrong shape");
        }
    }
}

double cell_power(const ScenarioRealization& s, const BeamformerSet& v, int bs)
{
    double p = 0.0;
    for (int i : s.config.cells[bs]) p += v[i].squaredNorm();
    return p;
}

bool is_feasible(const ScenarioRealization& s, const BeamformerSet& v, double rel_tol)
{
    for (int k = 0; k < s.config.num_bs(); ++k) {
        if (cell_power(s, v, k) > s.config.bs_power[k] * (1.0 + rel_tol)) return false;
    }
    return true;
}

std::vector<cmat> transmit_covariances(const ScenarioRealization& s, const BeamformerSet& v)
{
    std::vector<cmat> out;
    out.reserve(s.config.num_bs());
    for (int k = 0; k < s.config.num_bs(); ++k) {
        const int m = s.config.bs_antennas[k];
        cmat c = cmat::Zero(m, m);
        for (int i : s.config.cells[k]) c.noalias() += v[i] * v[i].adjoint();
        out.push_back(std::move(c));
    }
    return out;
}

cmat receive_covariance(const ScenarioRealization& s, const std::vector<cmat>& tx_cov, int ue)
{
    const int n = s.config.ue_antennas[ue];
    cmat j = cmat::Identity(n, n) * s.config.noise_power[ue];
    for (int k = 0; k < s.config.num_bs(); ++k) {
        const cmat& h = s.channel(ue, k);
        j.noalias() += h * tx_cov[k] * h.adjoint();
    }
    return hermitian_part(j);
}

namespace {

double rate_from_covariances(const ScenarioRealization& s, const std::vector<cmat>& tx_cov,
                             const BeamformerSet& v, int ue)
{
    const int k = s.config.serving_bs(ue);
    const cmat hv = s.channel(ue, k) * v[ue];
    const cmat total = receive_covariance(s, tx_cov, ue);   // Z_i + Q_i
    const cmat interference = hermitian_part(cmat(total - hv * hv.adjoint()));
    double ld_total = 0.0;
    double ld_interference = 0.0;
    if (!logdet_hpd(total, ld_total) || !logdet_hpd(interference, ld_interference)) {
        throw numeric_error("ue_rate: covariance of UE " + std::to_string(ue)
                            + " is not positive definite");
    }
    return s.config.bandwidth * std::max(0.0, ld_total - ld_interference);
}

} // namespace

double ue_rate(const ScenarioRealization& s, const BeamformerSet& v, int ue)
{
    check_shapes(s, v);
    return rate_from_covariances(s, transmit_covariances(s, v), v, ue);
}

std::vector<double> ue_rates(const ScenarioRealization& s, const BeamformerSet& v)
{
    check_shapes(s, v);
    const auto tx = transmit_covariances(s, v);
    std::vector<double> out(s.config.num_ue());
    for (int i = 0; i < s.config.num_ue(); ++i) out[i] = rate_from_covariances(s, tx, v, i);
    return out;
}

double wsr(const ScenarioRealization& s, const BeamformerSet& v)
{
    const auto rates = ue_rates(s, v);
    double total = 0.0;
    for (int i = 0; i < s.config.num_ue(); ++i) total += s.config.weights[i] * rates[i];
    return total;
}

cmat error_covariance(const ScenarioRealization& s, const std::vector<cmat>& tx_cov,
                      const BeamformerSet& v, const cmat& u, int ue)
{
    const int n = s.config.ue_antennas[ue];
    const cmat j = receive_covariance(s, tx_cov, ue);
    const cmat uhv = u.adjoint() * s.channel(ue, s.config.serving_bs(ue)) * v[ue];
    cmat e = cmat::Identity(n, n) - uhv - uhv.adjoint() + u.adjoint() * j * u;
    return hermitian_part(e);
}

double wmmse_objective(const ScenarioRealization& s, const ReceiverState& uw, const BeamformerSet& v)
{
    check_shapes(s, v);
    const auto tx = transmit_covariances(s, v);
    double total = 0.0;
    for (int i = 0; i < s.config.num_ue(); ++i) {
        const cmat e = error_covariance(s, tx, v, uw.u[i], i);
        double ld = 0.0;
        if (!logdet_hpd(uw.w[i], ld)) {
            throw numeric_error("wmmse_objective: W of UE " + std::to_string(i)
                                + " is not positive definite");
        }
        total += s.config.weights[i] * ((uw.w[i] * e).trace().real() - ld);
    }
    return total;
}

} // namespace beamforge
