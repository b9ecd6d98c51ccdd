#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "beamforge/common.hpp"

namespace beamforge {

enum class ChannelModel { iid_rayleigh, triangle_picocell };

std::string to_string(ChannelModel model);
ChannelModel channel_model_from_string(const std::string& name);

// Static description of a network: base stations, UEs, and the channel law.
struct ScenarioConfig {
    std::vector<int> bs_antennas;          // M_k
    std::vector<double> bs_power;          // P_k, watts
    std::vector<std::vector<int>> cells;   // I_k, UE indices served by BS k
    std::vector<int> ue_antennas;          // N_i
    std::vector<double> noise_power;       // sigma_i^2, watts
    std::vector<double> weights;           // alpha_i
    double bandwidth = 1.0;

    ChannelModel model = ChannelModel::iid_rayleigh;
    double channel_variance = 1.0;         // per-entry variance for iid-rayleigh
    double bs_distance = 200.0;            // d_BS in meters for triangle-picocell

    int num_bs() const { return static_cast<int>(bs_antennas.size()); }
    int num_ue() const { return static_cast<int>(ue_antennas.size()); }

    // BS serving UE i. Built by validate().
    int serving_bs(int ue) const { return serving_.at(ue); }

    // Throws config_error on any violated invariant and builds the UE->BS map.
    void validate();

    // Equal antennas/powers/noise at every node, `ues_per_bs` UEs per cell,
    // UEs numbered cell by cell.
    static ScenarioConfig uniform(int num_bs, int bs_antennas, int ues_per_bs, int ue_antennas,
                                  double bs_power_watt, double noise_watt,
                                  ChannelModel model = ChannelModel::iid_rayleigh);

    bool operator==(const ScenarioConfig&) const = default;

private:
    std::vector<int> serving_;
};

struct Geometry {
    std::vector<Eigen::Vector2d> bs_positions;
    std::vector<Eigen::Vector2d> ue_positions;
    bool operator==(const Geometry&) const = default;
};

// A configuration with one sampled set of channel matrices H_ik (N_i x M_k).
struct ScenarioRealization {
    ScenarioConfig config;
    std::vector<cmat> channels;   // row-major over (ue, bs): index ue * K + bs
    std::optional<Geometry> geometry;

    const cmat& channel(int ue, int bs) const { return channels[ue * config.num_bs() + bs]; }
    cmat& channel(int ue, int bs) { return channels[ue * config.num_bs() + bs]; }

    // Checks shapes and finiteness of the channels against the config.
    void validate() const;
};

// Path gain in dB (non-positive) of the picocell model:
// -(140.7 + 36.7 log10(d / 1 km)). Distances below 1 m are clamped.
double path_loss_db(double distance_m);

constexpr double min_ue_distance_m = 1.0;

// Every entry of every H_ik drawn i.i.d. from CN(0, channel_variance).
ScenarioRealization sample_iid(const ScenarioConfig& config, std::uint64_t seed,
                               std::uint64_t index = 0);

// Three BSs on an equilateral triangle of side bs_distance; each UE uniform in
// the 60 degree sector of radius bs_distance / sqrt(3) around its BS, the sector
// bisector pointing at the triangle centroid. Rayleigh fading on top of the
// picocell path loss.
ScenarioRealization sample_triangle(const ScenarioConfig& config, std::uint64_t seed,
                                    std::uint64_t index = 0);

// Dispatches on config.model.
ScenarioRealization sample(const ScenarioConfig& config, std::uint64_t seed,
                           std::uint64_t index = 0);

// Triangle layout helpers, exposed for tests.
std::vector<Eigen::Vector2d> triangle_bs_positions(double bs_distance);

constexpr int scenario_schema_version = 1;

nlohmann::json config_to_json(const ScenarioConfig& config);
ScenarioConfig config_from_json(const nlohmann::json& j);

nlohmann::json realization_to_json(const ScenarioRealization& s);
ScenarioRealization realization_from_json(const nlohmann::json& j);

std::string serialize_realization(const ScenarioRealization& s);
ScenarioRealization deserialize_realization(const std::string& text);

void save_realization(const ScenarioRealization& s, const std::filesystem::path& path);
ScenarioRealization load_realization(const std::filesystem::path& path);

// All *.json scenario files of a directory, sorted by file name.
std::vector<ScenarioRealization> load_realization_dir(const std::filesystem::path& dir);

// Reads a whole file; throws io_error.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

} // namespace beamforge
