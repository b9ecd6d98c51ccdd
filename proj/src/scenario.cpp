#include "beamforge/scenario.hpp"

#include "beamforge/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <spdlog/spdlog.h>

namespace beamforge {


std::string to_string(ChannelModel model)
{
    switch (model) {
    case ChannelModel::iid_rayleigh: return "iid-rayleigh";
    case ChannelModel::triangle_picocell: return "triangle-picocell";
    }
    return "unknown";
}

ChannelModel channel_model_from_string(const std::string& name)
{
    if (name == "iid-rayleigh") return ChannelModel::iid_rayleigh;
    if (name == "triangle-picocell") return ChannelModel::triangle_picocell;
    throw config_error("unknown channel model '" + name + "'");
}

void ScenarioConfig::validate()
{
    const int k_count = num_bs();
    const int i_count = num_ue();
    if (k_count < 1) throw config_error("scenario needs at least one BS");
    if (static_cast<int>(bs_power.size()) != k_count || static_cast<int>(cells.size()) != k_count) {
        throw config_error("per-BS arrays (antennas, power, cells) differ in length");
    }
    if (static_cast<int>(noise_power.size()) != i_count
        || static_cast<int>(weights.size()) != i_count) {
        throw config_error("per-UE arrays (antennas, noise, weights) differ in length");
    }
    for (int k = 0; k < k_count; ++k) {
        if (bs_antennas[k] < 1) throw config_error("BS antenna count must be >= 1");
        if (!(bs_power[k] > 0.0)) throw config_error("BS power budgets must be > 0");
    }
    for (int i = 0; i < i_count; ++i) {
        if (ue_antennas[i] < 1) throw config_error("UE antenna count must be >= 1");
        if (!(noise_power[i] > 0.0)) throw config_error("UE noise powers must be > 0");
        if (!(weights[i] > 0.0)) throw config_error("UE rate weights must be > 0");
    }
    if (!(bandwidth > 0.0)) throw config_error("bandwidth must be > 0");
    if (!(channel_variance > 0.0)) throw config_error("channel variance must be > 0");
    if (!(bs_distance > 0.0)) throw config_error("BS distance must be > 0");

    serving_.assign(i_count, -1);
    for (int k = 0; k < k_count; ++k) {
        for (int ue : cells[k]) {
            if (ue < 0 || ue >= i_count) {
                throw config_error("cell " + std::to_string(k) + " lists unknown UE "
                                   + std::to_string(ue));
            }
            if (serving_[ue] != -1) {
                throw config_error("UE " + std::to_string(ue) + " assigned to more than one BS");
            }
            serving_[ue] = k;
        }
    }
    for (int i = 0; i < i_count; ++i) {
        if (serving_[i] == -1) throw config_error("UE " + std::to_string(i) + " has no serving BS");
    }
}

ScenarioConfig ScenarioConfig::uniform(int num_bs, int bs_antennas, int ues_per_bs, int ue_antennas,
                                       double bs_power_watt, double noise_watt, ChannelModel model)
{
    ScenarioConfig c;
    c.model = model;
    c.bs_antennas.assign(num_bs, bs_antennas);
    c.bs_power.assign(num_bs, bs_power_watt);
    const int ues = num_bs * ues_per_bs;
    c.ue_antennas.assign(ues, ue_antennas);
    c.noise_power.assign(ues, noise_watt);
    c.weights.assign(ues, 1.0);
    c.cells.resize(num_bs);
    for (int k = 0; k < num_bs; ++k) {
        for (int u = 0; u < ues_per_bs; ++u) c.cells[k].push_back(k * ues_per_bs + u);
    }
    c.validate();
    return c;
}

void ScenarioRealization::validate() const
{
    const int k_count = config.num_bs();
    const int i_count = config.num_ue();
    if (static_cast<int>(channels.size()) != k_count * i_count) {
        throw dimension_error("realization holds " + std::to_string(channels.size())
                              + " channel matrices, expected " + std::to_string(k_count * i_count));
    }
    for (int i = 0; i < i_count; ++i) {
        for (int k = 0; k < k_count; ++k) {
            const cmat& h = channel(i, k);
            if (h.rows() != config.ue_antennas[i] || h.cols() != config.bs_antennas[k]) {
                throw dimension_error("channel (" + std::to_string(i) + "," + std::to_string(k)
                                      + ") has wrong shape");
            }
            if (!h.allFinite()) {
                throw numeric_error("channel (" + std::to_string(i) + "," + std::to_string(k)
                                    + ") has non-finite entries");
            }
        }
    }
}

double path_loss_db(double distance_m)
{
    if (distance_m < min_ue_distance_m) {
        spdlog::warn("path_loss_db: distance {} m below {} m, clamped", distance_m,
                     min_ue_distance_m);
        distance_m = min_ue_distance_m;
    }
    const double loss = 140.7 + 36.7 * std::log10(distance_m / 1000.0);
    return std::min(-loss, 0.0);
}

ScenarioRealization sample_iid(const ScenarioConfig& config, std::uint64_t seed, std::uint64_t index)
{
    ScenarioRealization s;
    s.config = config;
    s.config.validate();
    auto rng = substream(seed, index);
    const int k_count = config.num_bs();
    s.channels.resize(static_cast<std::size_t>(config.num_ue()) * k_count);
    for (int i = 0; i < config.num_ue(); ++i) {
        for (int k = 0; k < k_count; ++k) {
            s.channel(i, k) = complex_gaussian(rng, config.ue_antennas[i], config.bs_antennas[k],
                                               config.channel_variance);
        }
    }
    return s;
}

std::vector<Eigen::Vector2d> triangle_bs_positions(double d)
{
    return {Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(d, 0.0),
            Eigen::Vector2d(d / 2.0, d * std::sqrt(3.0) / 2.0)};
}

ScenarioRealization sample_triangle(const ScenarioConfig& config, std::uint64_t seed,
                                    std::uint64_t index)
{
    if (config.num_bs() != 3) {
        throw config_error("triangle-picocell model needs exactly 3 BSs, got "
                           + std::to_string(config.num_bs()));
    }
    ScenarioRealization s;
    s.config = config;
    s.config.validate();
    auto rng = substream(seed, index);

    Geometry geo;
    geo.bs_positions = triangle_bs_positions(config.bs_distance);
    const Eigen::Vector2d centroid =
        (geo.bs_positions[0] + geo.bs_positions[1] + geo.bs_positions[2]) / 3.0;
    const double radius = config.bs_distance / std::sqrt(3.0);

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    geo.ue_positions.resize(config.num_ue());
    for (int i = 0; i < config.num_ue(); ++i) {
        const Eigen::Vector2d& bs = geo.bs_positions[s.config.serving_bs(i)];
        const Eigen::Vector2d axis = centroid - bs;
        const double bisector = std::atan2(axis.y(), axis.x());
        const double r = radius * std::sqrt(unit(rng));
        const double theta = bisector + (unit(rng) - 0.5) * (std::numbers::pi / 3.0);
        geo.ue_positions[i] = bs + r * Eigen::Vector2d(std::cos(theta), std::sin(theta));
    }

    s.channels.resize(static_cast<std::size_t>(config.num_ue()) * 3);
    for (int i = 0; i < config.num_ue(); ++i) {
        for (int k = 0; k < 3; ++k) {
            const double d = std::max((geo.ue_positions[i] - geo.bs_positions[k]).norm(),
                                      min_ue_distance_m);
            const double gain = std::pow(10.0, path_loss_db(d) / 10.0);
            s.channel(i, k) =
                complex_gaussian(rng, config.ue_antennas[i], config.bs_antennas[k], gain);
        }
    }
    s.geometry = std::move(geo);
    return s;
}

ScenarioRealization sample(const ScenarioConfig& config, std::uint64_t seed, std::uint64_t index)
{
    switch (config.model) {
    case ChannelModel::iid_rayleigh: return sample_iid(config, seed, index);
    case ChannelModel::triangle_picocell: return sample_triangle(config, seed, index);
    }
    throw config_error("unknown channel model");
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json config_to_json(const ScenarioConfig& c)
{
    nlohmann::json j;
    j["bs_antennas"] = c.bs_antennas;
    j["bs_power"] = c.bs_power;
    j["cells"] = c.cells;
    j["ue_antennas"] = c.ue_antennas;
    j["noise_power"] = c.noise_power;
    j["weights"] = c.weights;
    j["bandwidth"] = c.bandwidth;
    j["model"] = to_string(c.model);
    j["channel_variance"] = c.channel_variance;
    j["bs_distance"] = c.bs_distance;
    if (c.model == ChannelModel::triangle_picocell) {
        j["sector_orientation"] = "apex at BS, bisector toward triangle centroid";
    }
    return j;
}

namespace {

// Shorthand form: {"K":3,"M":12,"ues_per_bs":4,"N":2,"power_dbm":30,"noise_dbm":-100,...}
ScenarioConfig config_from_shorthand(const nlohmann::json& j)
{
    auto model = channel_model_from_string(j.value("model", std::string("iid-rayleigh")));
    auto c = ScenarioConfig::uniform(j.at("K").get<int>(), j.at("M").get<int>(),
                                     j.at("ues_per_bs").get<int>(), j.at("N").get<int>(),
                                     dbm_to_watt(j.at("power_dbm").get<double>()),
                                     dbm_to_watt(j.at("noise_dbm").get<double>()), model);
    c.channel_variance = j.value("channel_variance", 1.0);
    c.bs_distance = j.value("bs_distance", 200.0);
    c.bandwidth = j.value("bandwidth", 1.0);
    c.validate();
    return c;
}

} // namespace

ScenarioConfig config_from_json(const nlohmann::json& j)
{
    try {
        if (j.contains("K")) return config_from_shorthand(j);
        ScenarioConfig c;
        c.bs_antennas = j.at("bs_antennas").get<std::vector<int>>();
        c.bs_power = j.at("bs_power").get<std::vector<double>>();
        c.cells = j.at("cells").get<std::vector<std::vector<int>>>();
        c.ue_antennas = j.at("ue_antennas").get<std::vector<int>>();
        c.noise_power = j.at("noise_power").get<std::vector<double>>();
        c.weights = j.at("weights").get<std::vector<double>>();
        c.bandwidth = j.value("bandwidth", 1.0);
        c.model = channel_model_from_string(j.value("model", std::string("iid-rayleigh")));
        c.channel_variance = j.value("channel_variance", 1.0);
        c.bs_distance = j.value("bs_distance", 200.0);
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("scenario config: ") + e.what());
    }
}

nlohmann::json realization_to_json(const ScenarioRealization& s)
{
    nlohmann::json j;
    j["schema_version"] = scenario_schema_version;
    j["config"] = config_to_json(s.config);
    nlohmann::json channels = nlohmann::json::array();
    for (int i = 0; i < s.config.num_ue(); ++i) {
        for (int k = 0; k < s.config.num_bs(); ++k) {
            const cmat& h = s.channel(i, k);
            nlohmann::json data = nlohmann::json::array();
            for (Eigen::Index r = 0; r < h.rows(); ++r) {
                for (Eigen::Index c = 0; c < h.cols(); ++c) {
                    data.push_back({h(r, c).real(), h(r, c).imag()});
                }
            }
            channels.push_back({{"ue", i}, {"bs", k}, {"rows", h.rows()}, {"cols", h.cols()},
                                {"data", std::move(data)}});
        }
    }
    j["channels"] = std::move(channels);
    if (s.geometry) {
        auto points = [](const std::vector<Eigen::Vector2d>& pts) {
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& p : pts) arr.push_back({p.x(), p.y()});
            return arr;
        };
        j["geometry"] = {{"bs_positions", points(s.geometry->bs_positions)},
                         {"ue_positions", points(s.geometry->ue_positions)}};
    }
    return j;
}

ScenarioRealization realization_from_json(const nlohmann::json& j)
{
    ScenarioRealization s;
    try {
        const int version = j.at("schema_version").get<int>();
        if (version != scenario_schema_version) throw version_error(version, scenario_schema_version);
        s.config = config_from_json(j.at("config"));
        const int k_count = s.config.num_bs();
        s.channels.assign(static_cast<std::size_t>(s.config.num_ue()) * k_count, cmat());
        std::vector<bool> seen(s.channels.size(), false);
        for (const auto& entry : j.at("channels")) {
            const int i = entry.at("ue").get<int>();
            const int k = entry.at("bs").get<int>();
            if (i < 0 || i >= s.config.num_ue() || k < 0 || k >= k_count) {
                throw dimension_error("channel entry refers to unknown (ue, bs) pair");
            }
            const auto rows = entry.at("rows").get<Eigen::Index>();
            const auto cols = entry.at("cols").get<Eigen::Index>();
            const auto& data = entry.at("data");
            if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
                throw dimension_error("channel (" + std::to_string(i) + "," + std::to_string(k)
                                      + ") data length does not match rows*cols");
            }
            cmat h(rows, cols);
            for (Eigen::Index r = 0; r < rows; ++r) {
                for (Eigen::Index c = 0; c < cols; ++c) {
                    const auto& z = data[static_cast<std::size_t>(r * cols + c)];
                    h(r, c) = cplx(z.at(0).get<double>(), z.at(1).get<double>());
                }
            }
            seen[i * k_count + k] = true;
            s.channel(i, k) = std::move(h);
        }
        if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
            throw dimension_error("scenario file is missing channel matrices");
        }
        if (j.contains("geometry")) {
            Geometry geo;
            for (const auto& p : j["geometry"].at("bs_positions"))
                geo.bs_positions.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
            for (const auto& p : j["geometry"].at("ue_positions"))
                geo.ue_positions.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
            s.geometry = std::move(geo);
        }
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("scenario file: ") + e.what());
    }
    s.validate();
    return s;
}

std::string serialize_realization(const ScenarioRealization& s)
{
    return realization_to_json(s).dump();
}

ScenarioRealization deserialize_realization(const std::string& text)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw parse_error(std::string("scenario file: ") + e.what(), e.byte);
    }
    return realization_from_json(j);
}

std::string read_text_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw io_error("failed writing '" + path.string() + "'");
}

void save_realization(const ScenarioRealization& s, const std::filesystem::path& path)
{
    write_text_file(path, serialize_realization(s));
}

ScenarioRealization load_realization(const std::filesystem::path& path)
{
    return deserialize_realization(read_text_file(path));
}

std::vector<ScenarioRealization> load_realization_dir(const std::filesystem::path& dir)
{
    if (!std::filesystem::is_directory(dir)) throw io_error("'" + dir.string() + "' is not a directory");
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<ScenarioRealization> out;
    out.reserve(files.size());
    for (const auto& f : files) out.push_back(load_realization(f));
    return out;
}

} // namespace beamforge
