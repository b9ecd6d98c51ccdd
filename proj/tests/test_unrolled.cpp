#include <gtest/gtest.h>

#include <chrono>

#include "beamforge/rng.hpp"
#include "beamforge/training.hpp"
#include "beamforge/unrolled.hpp"
#include "support.hpp"

using namespace beamforge;

TEST(ParamCount, Formula)
{
    EXPECT_EQ(param_count(7, 4, 2), 229);
    EXPECT_EQ(param_count(1, 1, 0), 5);
    EXPECT_EQ(param_count(3, 2, 2), 41);
    EXPECT_THROW(param_count(0, 1, 1), config_error);
}

TEST(ParamCount, ConsistentWithRealDof)
{
    const auto p = wmmse_equivalent_params(7, 4, 2);
    // a_W and b are real: every other entry contributes two real dof.
    const long real_entries = 7L * (2 + 1) + 7L * 4;
    EXPECT_EQ(p.real_dof(), 2 * param_count(7, 4, 2) - real_entries);
    EXPECT_EQ(pack(p).size(), p.real_dof());
}

TEST(WeightGcf, ClassicalIdentityAndNormalizedSquare)
{
    auto rng = substream(1, 0);
    const cmat a = complex_gaussian(rng, 3, 3);
    const cmat w = a * a.adjoint() + cmat::Identity(3, 3);
    EXPECT_LT((weight_gcf(w, rvec::Unit(3, 1)) - w).norm(), 1e-14);
    EXPECT_LT((weight_gcf(w, rvec::Unit(3, 0)) - cmat::Identity(3, 3)).norm(), 1e-15);

    cmat d = cmat::Zero(2, 2);
    d(0, 0) = 2.0;
    d(1, 1) = 4.0;
    const cmat out = weight_gcf(d, rvec::Unit(3, 2));
    EXPECT_NEAR(out(0, 0).real(), 4.0 / 3.0, 1e-14);
    EXPECT_NEAR(out(1, 1).real(), 16.0 / 3.0, 1e-14);
}

TEST(WeightGcf, PsdForNonNegativeTaps)
{
    auto rng = substream(2, 0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const cmat a = complex_gaussian(rng, 3, 2);
        const cmat w = a * a.adjoint();
        rvec taps(4);
        for (int g = 0; g < 4; ++g) taps(g) = u(rng);
        const cmat out = weight_gcf(w, taps);
        EXPECT_LE((out - out.adjoint()).norm(), 1e-12 * out.norm());
        EXPECT_GE(herm_eig(out).eigenvalues.minCoeff(), -1e-9 * out.norm());
    }
}

TEST(ModRelu, Examples)
{
    const cplx x(3.0, 4.0);
    EXPECT_NEAR(std::abs(modrelu(x, -2.0) - cplx(1.8, 2.4)), 0.0, 1e-15);
    EXPECT_EQ(modrelu(x, -5.0), cplx(0.0, 0.0));
    EXPECT_EQ(modrelu(x, 0.0), x);
    EXPECT_EQ(modrelu(cplx(0.0, 0.0), 1.0), cplx(0.0, 0.0));
}

TEST(ModRelu, PreservesPhase)
{
    auto rng = substream(3, 0);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 1000; ++trial) {
        const cplx x(g(rng), g(rng));
        const cplx y = modrelu(x, g(rng));
        const cplx ratio = y / x;
        EXPECT_NEAR(ratio.imag(), 0.0, 1e-12);
        EXPECT_GE(ratio.real(), 0.0);
    }
}

namespace {

struct LayerInputs {
    std::vector<HermitianEigd> eigs;
    std::vector<double> mus;
    std::vector<cmat> v_tilde;
};

LayerInputs layer_inputs(const ScenarioRealization& s)
{
    const auto v = init_mrc(s);
    const auto u = u_step(s, v);
    const auto up = uplink_quantities(s, u, w_step(s, v, u));
    LayerInputs in{{}, {}, up.v_tilde};
    for (int k = 0; k < s.config.num_bs(); ++k) {
        in.eigs.push_back(herm_eig(up.r[k]));
        std::vector<cmat> cell;
        for (int i : s.config.cells[k]) cell.push_back(up.v_tilde[i]);
        in.mus.push_back(mu_step(dual_spectrum(in.eigs[k], cell, s.config.bs_power[k])).mu);
    }
    return in;
}

} // namespace

TEST(DownlinkLayer, WmmseParametersReproduceVStep)
{
    const auto s = sample(test::small_config(), 4, 0);
    const auto in = layer_inputs(s);
    const auto p = wmmse_equivalent_params(2, 2, 2);
    const auto out = downlink_gcn_layer(s, in.eigs, in.mus, in.v_tilde, {}, p.layer[0], 1.0);
    EXPECT_LE(test::max_rel_diff(out.v_hat, v_step(s, in.eigs, in.mus, in.v_tilde)), 1e-14);
}

TEST(DownlinkLayer, SaturatedBiasKillsOutput)
{
    const auto s = sample(test::small_config(), 4, 1);
    const auto in = layer_inputs(s);
    auto lp = wmmse_equivalent_params(1, 2, 2).layer[0];
    lp.b.setConstant(-1e6);
    const auto out = downlink_gcn_layer(s, in.eigs, in.mus, in.v_tilde, {}, lp, 1.0);
    for (const auto& v : out.v_hat.v) EXPECT_EQ(v.norm(), 0.0);
}

TEST(DownlinkLayer, DuplicatedFeaturesAverageToSingleFeature)
{
    const auto s = sample(test::small_config(), 4, 2);
    const auto in = layer_inputs(s);
    auto one = wmmse_equivalent_params(1, 1, 2).layer[0];
    one.a_v1(0) = cplx(0.8, 0.3);
    one.a_v0(0) = cplx(0.01, -0.02);
    one.b(0) = -0.05;
    auto two = wmmse_equivalent_params(1, 2, 2).layer[0];
    two.a_v1.setConstant(one.a_v1(0));
    two.a_v0.setConstant(one.a_v0(0));
    two.b.setConstant(one.b(0));
    two.c.setConstant(0.5);
    const auto a = downlink_gcn_layer(s, in.eigs, in.mus, in.v_tilde, {}, one, 0.7);
    const auto b = downlink_gcn_layer(s, in.eigs, in.mus, in.v_tilde, {}, two, 0.7);
    EXPECT_LE(test::max_rel_diff(a.v_hat, b.v_hat), 1e-14);
}

TEST(DownlinkLayer, StateStoresPostSkipFeatures)
{
    const auto s = sample(test::small_config(), 4, 3);
    const auto in = layer_inputs(s);
    auto p = wmmse_equivalent_params(2, 2, 2);
    const auto first = downlink_gcn_layer(s, in.eigs, in.mus, in.v_tilde, {}, p.layer[0], 1.0);
    p.layer[1].d = cmat::Identity(2, 2) * 0.5;
    const auto second = downlink_gcn_layer(s, in.eigs, in.mus, in.v_tilde, first.state, p.layer[1], 1.0);
    // identical inputs: P2 = P~ + 0.5 P1 = 1.5 P1
    for (int i = 0; i < s.config.num_ue(); ++i) {
        for (std::size_t d = 0; d < first.state.p[i].size(); ++d) {
            EXPECT_LE((second.state.p[i][d] - 1.5 * first.state.p[i][d]).norm(), 1e-12 * first.state.p[i][d].norm());
        }
    }
}

TEST(PowerProjection, Examples)
{
    cmat a = cmat::Constant(2, 1, 1.0);   // power 2
    cmat b = cmat::Constant(2, 1, 1.0);   // power 2
    power_projection({&a, &b}, 1.0);      // total 4 = 4P -> scale 1/2
    EXPECT_NEAR(a(0, 0).real(), 0.5, 1e-15);
    EXPECT_NEAR(b(1, 0).real(), 0.5, 1e-15);

    cmat c = cmat::Constant(1, 1, std::sqrt(0.5));
    power_projection({&c}, 1.0);
    EXPECT_EQ(c(0, 0).real(), std::sqrt(0.5));

    cmat d = cmat::Constant(3, 2, 2.0);
    power_projection({&d}, 1.0);
    const cmat once = d;
    power_projection({&d}, 1.0);
    EXPECT_LE((d - once).norm(), 1e-15);
}

TEST(Forward, ContainmentOfClassicalSolver)
{
    for (int n = 0; n < 20; ++n) {
        const auto s = sample(test::small_config(), 5, n);
        const auto classical = run(s, init_mrc(s), 5);
        const auto unrolled = gcnwmmse_forward(s, wmmse_equivalent_params(5, 1 + n % 3, 2), solver_mu_substeps);
        ASSERT_EQ(unrolled.size(), 5u);
        EXPECT_EQ(unrolled.communication_rounds, 5);
        for (int t = 0; t < 5; ++t) {
            EXPECT_NEAR(unrolled.wsr[t], classical.wsr[t], 1e-8);
            EXPECT_LE(test::max_rel_diff(unrolled.beamformers[t], classical.beamformers[t]), 1e-8);
        }
    }
}

TEST(Forward, OutputsAreFeasible)
{
    for (int n = 0; n < 10; ++n) {
        const auto s = sample(test::triangle_config(), 6, n);
        const auto traj = gcnwmmse_forward(s, init_params(3, 3, 2, n + 1));
        for (const auto& v : traj.beamformers) EXPECT_TRUE(is_feasible(s, v, 1e-9));
    }
}

TEST(Forward, BsAntennaPermutationEquivariance)
{
    auto rng = substream(7, 0);
    const auto params = init_params(3, 2, 2, 7);
    for (int n = 0; n < 10; ++n) {
        const auto s = sample(test::small_config(), 7, n);
        const cmat p = test::permutation_matrix(test::random_permutation(4, rng));
        const auto a = gcnwmmse_forward(s, params);
        const auto b = gcnwmmse_forward(test::permute_bs_antennas(s, 1, p), params);
        EXPECT_NEAR(a.wsr.back(), b.wsr.back(), 1e-9 * a.wsr.back());
        BeamformerSet expected = a.beamformers.back();
        for (int i : s.config.cells[1]) expected[i] = p * expected[i];
        EXPECT_LE(test::max_rel_diff(b.beamformers.back(), expected), 1e-8);
    }
}

TEST(Forward, UeAntennaPermutationEquivariance)
{
    const auto params = init_params(3, 2, 2, 8);
    const cmat p = test::permutation_matrix({1, 0});
    for (int n = 0; n < 10; ++n) {
        const auto s = sample(test::small_config(), 8, n);
        auto t = s;
        for (int k = 0; k < 2; ++k) t.channel(n % 4, k) = p * t.channel(n % 4, k);
        const auto a = gcnwmmse_forward(s, params);
        const auto b = gcnwmmse_forward(t, params);
        EXPECT_NEAR(a.wsr.back(), b.wsr.back(), 1e-9 * a.wsr.back());
        BeamformerSet expected = a.beamformers.back();
        expected[n % 4] = expected[n % 4] * p.transpose();
        EXPECT_LE(test::max_rel_diff(b.beamformers.back(), expected), 1e-8);
    }
}

TEST(Forward, WithinCellUeRelabeling)
{
    const auto params = init_params(3, 2, 2, 9);
    for (int n = 0; n < 10; ++n) {
        const auto s = sample(test::small_config(), 9, n);
        auto t = s;
        for (int k = 0; k < 2; ++k) std::swap(t.channel(0, k), t.channel(1, k));
        const auto a = gcnwmmse_forward(s, params);
        const auto b = gcnwmmse_forward(t, params);
        EXPECT_NEAR(a.wsr.back(), b.wsr.back(), 1e-9 * a.wsr.back());
        BeamformerSet expected = a.beamformers.back();
        std::swap(expected[0], expected[1]);
        EXPECT_LE(test::max_rel_diff(b.beamformers.back(), expected), 1e-8);
    }
}

TEST(Forward, NonFiniteAbortsWithLayerIndex)
{
    auto s = sample(test::small_config(), 10, 0);
    s.channel(0, 0)(0, 0) = cplx(std::numeric_limits<double>::infinity(), 0.0);
    EXPECT_THROW(gcnwmmse_forward(s, wmmse_equivalent_params(2, 1, 1)), error);
}

TEST(Params, WmmseEquivalentIsValid)
{
    const auto p = wmmse_equivalent_params(4, 3, 2);
    EXPECT_NO_THROW(p.validate());
    EXPECT_EQ(p.layer[0].d.size(), 0);
    EXPECT_EQ(p.layer[1].d.rows(), 3);
    EXPECT_THROW(wmmse_equivalent_params(2, 0, 2), config_error);
    auto bad = p;
    bad.layer[2].a_w(0) = -0.1;
    EXPECT_THROW(bad.validate(), config_error);
    bad = p;
    bad.bias_scale = 0.0;
    EXPECT_THROW(bad.validate(), config_error);
}

TEST(Params, PackAndJsonRoundTrip)
{
    const auto p = init_params(3, 2, 2, 11);
    EXPECT_EQ(unpack(p, pack(p)), p);
    EXPECT_EQ(params_from_json(params_to_json(p)), p);
    const auto j = params_to_json(p);
    EXPECT_FALSE(j["layers"][0].contains("D"));
    EXPECT_EQ(j["layers"][1]["D"].size(), 2u);
    auto v = j;
    v["schema_version"] = 2;
    EXPECT_THROW(params_from_json(v), version_error);
    EXPECT_THROW(unpack(p, rvec::Zero(3)), dimension_error);
}

TEST(Pgd, ZeroStepReturnsProjectedPrevious)
{
    auto rng = substream(12, 0);
    const cmat r = cmat::Identity(3, 3);
    const std::vector<cmat> vt{complex_gaussian(rng, 3, 1)};
    const std::vector<cmat> prev{complex_gaussian(rng, 3, 1) * 10.0};
    const auto out = pgd_v_step(r, vt, prev, rvec::Zero(4), 1.0);
    EXPECT_LE((out[0] - prev[0] / prev[0].norm()).norm(), 1e-14);
}

TEST(Pgd, SingleLinkHandArithmetic)
{
    const auto out = pgd_v_step(cmat::Constant(1, 1, 0.5), {cmat::Ones(1, 1)}, {cmat::Zero(1, 1)},
                                rvec::Ones(1), 1.0);
    EXPECT_NEAR(std::abs(out[0](0, 0) - 1.0), 0.0, 1e-15);
}

TEST(Pgd, ManySubstepsApproachExactVStep)
{
    auto rng = substream(13, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const int m = 4;
        const cmat b = complex_gaussian(rng, m, m);
        const cmat r = b * b.adjoint() / m + cmat::Identity(m, m);
        const std::vector<cmat> vt{complex_gaussian(rng, m, 2), complex_gaussian(rng, m, 2)};
        const double power = 0.5;
        const auto eig = herm_eig(r);
        // Exact solution with a bisection root, independent of the rational update.
        const double mu = mu_bisection(dual_spectrum(eig, vt, power));
        const double gamma = 1.0 / eig.eigenvalues.maxCoeff();
        const auto out = pgd_v_step(r, vt, {cmat::Zero(m, 2), cmat::Zero(m, 2)}, rvec::Constant(200, gamma), power);
        for (int i = 0; i < 2; ++i) {
            const cmat exact = shifted_pinv_apply(eig, mu, vt[i]);
            EXPECT_LE((out[i] - exact).norm() / exact.norm(), 1e-3);
        }
    }
}

TEST(Pgd, ForwardFeasibleAndParamsRoundTrip)
{
    const auto s = sample(test::small_config(), 14, 0);
    const auto p = pgd_constant_params(3, 4, 0.01);
    const auto traj = pgd_forward(s, p);
    EXPECT_EQ(traj.communication_rounds, 3);
    for (const auto& v : traj.beamformers) EXPECT_TRUE(is_feasible(s, v, 1e-9));
    EXPECT_EQ(pgd_params_from_json(pgd_params_to_json(p)), p);
    const auto back = unpack(p, pack(p));
    for (int l = 0; l < 3; ++l) EXPECT_LE((back.step[l] - p.step[l]).norm(), 1e-16);
    auto bad = p;
    bad.step[0](1) = 0.0;
    EXPECT_THROW(bad.validate(), config_error);
}

TEST(Benchmark, PerLayerCostComparableToClassicalIteration)
{
    // Base scenario size: K=3, M=12, 4 UEs per cell with 2 antennas.
    const auto c = ScenarioConfig::uniform(3, 12, 4, 2, dbm_to_watt(30.0), dbm_to_watt(-100.0),
                                           ChannelModel::triangle_picocell);
    const auto s = sample(c, 15, 0);
    const auto params = init_params(7, 4, 2, 15);
    using clock = std::chrono::steady_clock;
    auto best = [](auto&& f) {
        double t_min = 1e300;
        for (int rep = 0; rep < 15; ++rep) {
            const auto t0 = clock::now();
            f();
            t_min = std::min(t_min, std::chrono::duration<double>(clock::now() - t0).count());
        }
        return t_min;
    };
    const auto init = init_mrc(s);
    const double classical = best([&] { run(s, init, 7, default_mu_substeps); }) / 7.0;
    const double unrolled = best([&] { gcnwmmse_forward(s, params); }) / 7.0;
    RecordProperty("classical_us", static_cast<int>(classical * 1e6));
    RecordProperty("unrolled_us", static_cast<int>(unrolled * 1e6));
    EXPECT_LE(unrolled, 1.5 * classical);
}
