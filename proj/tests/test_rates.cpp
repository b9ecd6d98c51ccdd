#include <gtest/gtest.h>

#include "beamforge/rates.hpp"
#include "beamforge/rng.hpp"
#include "beamforge/wmmse.hpp"
#include "support.hpp"

using namespace beamforge;

namespace {

// log det(I + Q Z^-1) with Q and Z assembled term by term.
double oracle_rate(const ScenarioRealization& s, const BeamformerSet& v, int i)
{
    const auto& c = s.config;
    const int k = c.serving_bs(i);
    const cmat hv = s.channel(i, k) * v[i];
    const cmat q = hv * hv.adjoint();
    cmat z = c.noise_power[i] * cmat::Identity(c.ue_antennas[i], c.ue_antennas[i]);
    for (int j = 0; j < c.num_ue(); ++j) {
        if (j == i) continue;
        const cmat hj = s.channel(i, c.serving_bs(j)) * v[j];
        z += hj * hj.adjoint();
    }
    const cmat m = cmat::Identity(q.rows(), q.cols()) + q * z.inverse();
    return c.bandwidth * std::log(std::abs(m.determinant()));
}

} // namespace

TEST(Rates, ZeroBeamformersGiveZeroRate)
{
    const auto s = sample(test::small_config(), 1, 0);
    const auto v = BeamformerSet::zeros(s.config);
    for (int i = 0; i < s.config.num_ue(); ++i) EXPECT_EQ(ue_rate(s, v, i), 0.0);
    EXPECT_EQ(wsr(s, v), 0.0);
}

TEST(Rates, SingleLinkIsLogTwo)
{
    const auto s = test::single_link();
    const BeamformerSet v({cmat::Ones(1, 1)});
    EXPECT_NEAR(ue_rate(s, v, 0), std::log(2.0), 1e-15);
    EXPECT_NEAR(wsr(s, v), 0.6931, 1e-4);
}

TEST(Rates, MatchesBruteForceDeterminant)
{
    const auto c = ScenarioConfig::uniform(2, 2, 1, 1, 1.0, 0.1);
    for (int n = 0; n < 20; ++n) {
        const auto s = sample(c, 3, n);
        const auto v = init_random(s, 8, n);
        for (int i = 0; i < 2; ++i) EXPECT_NEAR(ue_rate(s, v, i), oracle_rate(s, v, i), 1e-10);
    }
    const auto s = sample(test::small_config(), 4, 0);
    const auto v = init_random(s, 1, 0);
    for (int i = 0; i < s.config.num_ue(); ++i) EXPECT_NEAR(ue_rate(s, v, i), oracle_rate(s, v, i), 1e-10);
}

TEST(Rates, WsrScalesWithWeights)
{
    auto s = sample(test::small_config(), 2, 0);
    const auto v = init_mrc(s);
    const double base = wsr(s, v);
    for (double& a : s.config.weights) a *= 3.0;
    EXPECT_NEAR(wsr(s, v), 3.0 * base, 1e-10 * base);
}

TEST(Rates, BandwidthMultipliesRates)
{
    auto s = sample(test::small_config(), 2, 1);
    const auto v = init_mrc(s);
    const double base = wsr(s, v);
    s.config.bandwidth = 2.5;
    EXPECT_NEAR(wsr(s, v), 2.5 * base, 1e-10 * base);
}

TEST(Rates, InvariantUnderUnitaryRightRotation)
{
    const auto s = sample(test::small_config(), 5, 0);
    auto v = init_random(s, 5, 0);
    const double base = wsr(s, v);
    auto rng = substream(5, 1);
    for (auto& vi : v.v) {
        const cmat q = complex_gaussian(rng, vi.cols(), vi.cols()).householderQr().householderQ();
        vi = vi * q;
    }
    EXPECT_NEAR(wsr(s, v), base, 1e-10 * base);
}

TEST(Rates, InvariantUnderUeAntennaRelabeling)
{
    auto s = sample(test::small_config(), 6, 0);
    const auto v = init_random(s, 6, 0);
    const auto before = ue_rates(s, v);
    const cmat p = test::permutation_matrix({1, 0});
    for (int k = 0; k < s.config.num_bs(); ++k) s.channel(0, k) = p * s.channel(0, k);
    EXPECT_NEAR(ue_rate(s, v, 0), before[0], 1e-10);
}

TEST(Rates, FeasibilityAndShapes)
{
    const auto s = sample(test::small_config(), 7, 0);
    auto v = init_mrc(s);
    EXPECT_TRUE(is_feasible(s, v));
    EXPECT_NEAR(cell_power(s, v, 0), s.config.bs_power[0], 1e-12);
    v[0] *= 2.0;
    EXPECT_FALSE(is_feasible(s, v));
    v[0] = cmat::Zero(3, 2);
    EXPECT_THROW(check_shapes(s, v), dimension_error);
}

TEST(WmmseObjective, IdentityErrorAndWeights)
{
    // V = 0 gives E_i = I + U^H sigma^2 U; with U = 0 this is I.
    const auto s = sample(test::small_config(), 1, 0);
    const auto v = BeamformerSet::zeros(s.config);
    ReceiverState uw;
    for (int i = 0; i < s.config.num_ue(); ++i) {
        uw.u.push_back(cmat::Zero(2, 2));
        uw.w.push_back(cmat::Identity(2, 2));
    }
    EXPECT_NEAR(wmmse_objective(s, uw, v), 2.0 * s.config.num_ue(), 1e-14);
}

TEST(WmmseObjective, SingleLinkFixedPoint)
{
    const auto s = test::single_link();
    const BeamformerSet v({cmat::Ones(1, 1)});
    ReceiverState uw{{cmat::Constant(1, 1, 0.5)}, {cmat::Constant(1, 1, 2.0)}};
    EXPECT_NEAR(wmmse_objective(s, uw, v), 1.0 - std::log(2.0), 1e-15);
}

TEST(WmmseObjective, SingularWeightThrows)
{
    const auto s = test::single_link();
    const BeamformerSet v({cmat::Ones(1, 1)});
    ReceiverState uw{{cmat::Constant(1, 1, 0.5)}, {cmat::Zero(1, 1)}};
    EXPECT_THROW(wmmse_objective(s, uw, v), numeric_error);
}

TEST(WmmseObjective, RateMmseIdentity)
{
    // With MMSE receivers, -sum alpha logdet E = sum alpha R / B.
    for (int n = 0; n < 20; ++n) {
        const auto s = sample(test::small_config(), 11, n);
        const auto v = init_random(s, 11, n);
        const auto u = u_step(s, v);
        const auto tx = transmit_covariances(s, v);
        double lhs = 0.0;
        for (int i = 0; i < s.config.num_ue(); ++i) {
            const cmat e = error_covariance(s, tx, v, u[i], i);
            lhs -= s.config.weights[i] * std::log(std::abs(e.determinant()));
        }
        EXPECT_NEAR(lhs, wsr(s, v), 1e-8 * std::max(1.0, lhs));
    }
}
