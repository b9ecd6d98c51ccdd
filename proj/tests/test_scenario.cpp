#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "beamforge/scenario.hpp"
#include "support.hpp"

using namespace beamforge;

TEST(ScenarioConfig, UniformIsValidAndMapsServingBs)
{
    auto c = ScenarioConfig::uniform(3, 4, 2, 2, 1.0, 1e-3);
    EXPECT_EQ(c.num_bs(), 3);
    EXPECT_EQ(c.num_ue(), 6);
    EXPECT_EQ(c.serving_bs(0), 0);
    EXPECT_EQ(c.serving_bs(5), 2);
}

TEST(ScenarioConfig, RejectsOverlappingAndUncoveredCells)
{
    auto c = ScenarioConfig::uniform(2, 2, 1, 1, 1.0, 1.0);
    c.cells = {{0, 1}, {1}};
    EXPECT_THROW(c.validate(), config_error);
    c.cells = {{0}, {}};
    EXPECT_THROW(c.validate(), config_error);
}

TEST(ScenarioConfig, RejectsNonPositiveQuantities)
{
    auto c = ScenarioConfig::uniform(1, 2, 1, 1, 1.0, 1.0);
    auto bad = c;
    bad.bs_power[0] = 0.0;
    EXPECT_THROW(bad.validate(), config_error);
    bad = c;
    bad.noise_power[0] = -1.0;
    EXPECT_THROW(bad.validate(), config_error);
    bad = c;
    bad.weights[0] = 0.0;
    EXPECT_THROW(bad.validate(), config_error);
    bad = c;
    bad.bs_antennas[0] = 0;
    EXPECT_THROW(bad.validate(), config_error);
}

namespace {

double second_moment(const ScenarioConfig& c, int draws)
{
    double acc = 0.0;
    long entries = 0;
    for (int n = 0; n < draws; ++n) {
        const auto s = sample_iid(c, 42, n);
        for (const auto& h : s.channels) {
            acc += h.squaredNorm();
            entries += h.size();
        }
    }
    return acc / static_cast<double>(entries);
}

} // namespace

TEST(SampleIid, SecondMomentMatchesVariance)
{
    auto c = ScenarioConfig::uniform(1, 2, 1, 2, 1.0, 1.0);
    EXPECT_NEAR(second_moment(c, 25000), 1.0, 0.02);
    c.channel_variance = 2.0;
    EXPECT_NEAR(second_moment(c, 25000), 2.0, 0.04);
}

TEST(SampleIid, Deterministic)
{
    const auto c = test::small_config();
    EXPECT_EQ(serialize_realization(sample_iid(c, 9, 3)), serialize_realization(sample_iid(c, 9, 3)));
    EXPECT_NE(serialize_realization(sample_iid(c, 9, 3)), serialize_realization(sample_iid(c, 9, 4)));
}

TEST(PathLoss, ReferenceDistances)
{
    EXPECT_NEAR(path_loss_db(1000.0), -140.7, 1e-12);
    EXPECT_NEAR(path_loss_db(100.0), -104.0, 1e-12);
    EXPECT_NEAR(path_loss_db(10.0), -67.3, 1e-12);
}

TEST(PathLoss, MonotoneAndClamped)
{
    double prev = path_loss_db(1.0);
    for (double d = 2.0; d < 5000.0; d *= 1.3) {
        const double pl = path_loss_db(d);
        EXPECT_LT(pl, prev);
        prev = pl;
    }
    EXPECT_EQ(path_loss_db(0.1), path_loss_db(1.0));
    EXPECT_LE(path_loss_db(1.0), 0.0);
}

TEST(SampleTriangle, RequiresThreeBs)
{
    auto c = ScenarioConfig::uniform(2, 2, 1, 1, 1.0, 1.0, ChannelModel::triangle_picocell);
    EXPECT_THROW(sample_triangle(c, 1, 0), config_error);
}

TEST(SampleTriangle, UesInsideSectorTowardCentroid)
{
    const auto c = test::triangle_config();
    const double radius = c.bs_distance / std::sqrt(3.0);
    const auto bs = triangle_bs_positions(c.bs_distance);
    const Eigen::Vector2d centroid = (bs[0] + bs[1] + bs[2]) / 3.0;
    for (int n = 0; n < 200; ++n) {
        const auto s = sample_triangle(c, 5, n);
        ASSERT_TRUE(s.geometry.has_value());
        for (int i = 0; i < c.num_ue(); ++i) {
            const int k = c.serving_bs(i);
            const Eigen::Vector2d rel = s.geometry->ue_positions[i] - bs[k];
            EXPECT_LE(rel.norm(), radius + 1e-9);
            const Eigen::Vector2d axis = (centroid - bs[k]).normalized();
            const double cosang = rel.normalized().dot(axis);
            EXPECT_GE(cosang, std::cos(std::numbers::pi / 6.0) - 1e-9);
        }
    }
}

TEST(SampleTriangle, MeanDistanceMatchesAreaUniformSector)
{
    // Area-uniform over a sector of radius r: E[d] = 2r/3.
    auto c = ScenarioConfig::uniform(3, 1, 1, 1, 1.0, 1.0, ChannelModel::triangle_picocell);
    const double radius = c.bs_distance / std::sqrt(3.0);
    const auto bs = triangle_bs_positions(c.bs_distance);
    double acc = 0.0;
    long count = 0;
    for (int n = 0; n < 34000; ++n) {
        const auto s = sample_triangle(c, 17, n);
        for (int i = 0; i < 3; ++i) {
            acc += (s.geometry->ue_positions[i] - bs[c.serving_bs(i)]).norm();
            ++count;
        }
    }
    EXPECT_NEAR(acc / count, 2.0 * radius / 3.0, 0.02 * 2.0 * radius / 3.0);
}

TEST(SampleTriangle, ChannelPowerFollowsPathGain)
{
    auto c = ScenarioConfig::uniform(3, 4, 1, 2, 1.0, 1.0, ChannelModel::triangle_picocell);
    const auto bs = triangle_bs_positions(c.bs_distance);
    double acc = 0.0;
    long entries = 0;
    for (int n = 0; n < 3000; ++n) {
        const auto s = sample_triangle(c, 23, n);
        for (int i = 0; i < 3; ++i) {
            for (int k = 0; k < 3; ++k) {
                const double d = (s.geometry->ue_positions[i] - bs[k]).norm();
                const double gain = std::pow(10.0, path_loss_db(d) / 10.0);
                acc += s.channel(i, k).squaredNorm() / gain;
                entries += s.channel(i, k).size();
            }
        }
    }
    EXPECT_NEAR(acc / entries, 1.0, 0.02);
}

TEST(SampleTriangle, PaperBaseConfigurationSamples)
{
    auto c = ScenarioConfig::uniform(3, 12, 4, 2, dbm_to_watt(30.0), dbm_to_watt(-100.0),
                                     ChannelModel::triangle_picocell);
    const auto s = sample(c, 1, 0);
    EXPECT_NO_THROW(s.validate());
    EXPECT_EQ(s.channels.size(), 36u);
}

TEST(Serialization, RoundTripIsBitIdentical)
{
    for (const auto& c : {test::small_config(), test::triangle_config()}) {
        const auto s = sample(c, 77, 1);
        const std::string text = serialize_realization(s);
        const auto back = deserialize_realization(text);
        EXPECT_EQ(back.config, s.config);
        ASSERT_EQ(back.channels.size(), s.channels.size());
        for (std::size_t n = 0; n < s.channels.size(); ++n) EXPECT_EQ(back.channels[n], s.channels[n]);
        EXPECT_EQ(serialize_realization(back), text);
    }
}

TEST(Serialization, TruncatedFileIsParseError)
{
    const std::string text = serialize_realization(sample(test::small_config(), 1, 0));
    try {
        deserialize_realization(text.substr(0, text.size() / 2));
        FAIL() << "expected parse_error";
    } catch (const parse_error& e) {
        EXPECT_GT(e.offset, 0u);
    }
}

TEST(Serialization, VersionMismatch)
{
    auto j = realization_to_json(sample(test::small_config(), 1, 0));
    j["schema_version"] = 99;
    try {
        deserialize_realization(j.dump());
        FAIL() << "expected version_error";
    } catch (const version_error& e) {
        EXPECT_EQ(e.found, 99);
    }
}

TEST(Serialization, ShorthandConfig)
{
    const auto j = nlohmann::json::parse(
        R"({"K":3,"M":12,"ues_per_bs":4,"N":2,"power_dbm":30,"noise_dbm":-100,"model":"triangle-picocell"})");
    const auto c = config_from_json(j);
    EXPECT_EQ(c.num_ue(), 12);
    EXPECT_NEAR(c.bs_power[0], 1.0, 1e-12);
    EXPECT_EQ(c.model, ChannelModel::triangle_picocell);
    EXPECT_EQ(config_from_json(config_to_json(c)), c);
}
