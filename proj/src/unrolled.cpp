#include "beamforge/unrolled.hpp"

#include <cmath>

#include "beamforge/numerics.hpp"

namespace beamforge {

void ParameterSet::validate() const
{
    if (layers < 1 || features < 1 || degree < 0) throw config_error("ParameterSet: need L >= 1, F >= 1, G >= 0");
    if (static_cast<int>(layer.size()) != layers) throw config_error("ParameterSet: layer count mismatch");
    if (!(bias_scale > 0.0)) throw config_error("ParameterSet: b_S must be > 0");
    for (int l = 0; l < layers; ++l) {
        const auto& p = layer[l];
        if (p.a_w.size() != degree + 1) throw config_error("ParameterSet: a_W must have G + 1 taps");
        if ((p.a_w.array() < 0.0).any()) throw config_error("ParameterSet: a_W taps must be >= 0");
        if (p.a_v1.size() != features || p.a_v0.size() != features || p.b.size() != features
            || p.c.size() != features) {
            throw config_error("ParameterSet: feature vectors must have length F");
        }
        const bool needs_skip = l > 0;
        if (needs_skip && (p.d.rows() != features || p.d.cols() != features)) {
            throw config_error("ParameterSet: skip map D must be F x F from layer 2 on");
        }
        if (!needs_skip && p.d.size() != 0) throw config_error("ParameterSet: layer 1 has no skip map");
    }
}

int ParameterSet::real_dof() const
{
    return layers * (degree + 1 + 7 * features) + (layers - 1) * 2 * features * features;
}

long param_count(int layers, int features, int degree)
{
    if (layers < 1) throw config_error("param_count: need at least one layer");
    const long l = layers, f = features, g = degree;
    return l * (4 * f + g + 1) + (l - 1) * f * f;
}

cmat weight_gcf(const cmat& w_hat, const rvec& taps)
{
    const Eigen::Index n = w_hat.rows();
    const double mean_eig = std::max(w_hat.trace().real() / static_cast<double>(n), 1e-30);
    cmat out = cmat::Identity(n, n) * taps(0);
    cmat power = w_hat;
    double norm = 1.0;
    for (Eigen::Index g = 1; g < taps.size(); ++g) {
        if (g > 1) {
            power = power * w_hat;
            norm *= mean_eig;
        }
        if (taps(g) != 0.0) out += (taps(g) / norm) * power;
    }
    return hermitian_part(out);
}

cplx modrelu(cplx x, double b)
{
    const double mag = std::abs(x);
    if (mag == 0.0 || !(mag + b > 0.0)) return cplx(0.0, 0.0);
    return ((mag + b) / mag) * x;
}

GcnLayerOutput downlink_gcn_layer(const ScenarioRealization& s,
                                  const std::vector<HermitianEigd>& r_eigs,
                                  const std::vector<double>& mus, const std::vector<cmat>& v_tilde,
                                  const LayerState& prev, const GcnLayerParams& params,
                                  double bias_scale)
{
    const auto& c = s.config;
    const Eigen::Index f_count = params.c.size();
    const bool skip = !prev.empty() && params.d.size() != 0;

    GcnLayerOutput out;
    out.v_hat.v.resize(c.num_ue());
    out.state.p.resize(c.num_ue());
    for (int k = 0; k < c.num_bs(); ++k) {
        const double cell_size = static_cast<double>(c.cells[k].size());
        const rvec bias = (std::sqrt(c.bs_power[k] / cell_size) / bias_scale) * params.b;
        for (int i : c.cells[k]) {
            const cmat& vt = v_tilde[i];
            const cmat filtered = shifted_pinv_apply(r_eigs[k], mus[k], vt);
            const Eigen::Index m_count = vt.rows();
            cmat v_hat(m_count, vt.cols());
            auto& streams = out.state.p[i];
            streams.resize(vt.cols());
            for (Eigen::Index d = 0; d < vt.cols(); ++d) {
                cmat p = filtered.col(d) * params.a_v1.transpose() + vt.col(d) * params.a_v0.transpose();
                if (skip) p.noalias() += prev.p[i][d] * params.d;
                for (Eigen::Index m = 0; m < m_count; ++m) {
                    cplx acc(0.0, 0.0);
                    for (Eigen::Index f = 0; f < f_count; ++f) acc += modrelu(p(m, f), bias(f)) * params.c(f);
                    v_hat(m, d) = acc;
                }
                streams[d] = std::move(p);
            }
            out.v_hat[i] = std::move(v_hat);
        }
    }
    return out;
}

void power_projection(std::vector<cmat*> cell, double power_budget)
{
    double total = 0.0;
    for (const cmat* v : cell) total += v->squaredNorm();
    if (!(total > power_budget)) return;
    const double scale = std::sqrt(power_budget) / std::sqrt(total);
    for (cmat* v : cell) *v *= scale;
}

BeamformerSet power_projection(const ScenarioRealization& s, BeamformerSet v)
{
    for (int k = 0; k < s.config.num_bs(); ++k) {
        std::vector<cmat*> cell;
        for (int i : s.config.cells[k]) cell.push_back(&v[i]);
        power_projection(std::move(cell), s.config.bs_power[k]);
    }
    return v;
}

SolverTrajectory gcnwmmse_forward(const ScenarioRealization& s, const ParameterSet& params, int substeps)
{
    const auto& c = s.config;
    SolverTrajectory traj;
    traj.initial = init_mrc(s);
    traj.initial_wsr = wsr(s, traj.initial);
    BeamformerSet v = traj.initial;
    LayerState state;
    for (int l = 0; l < params.layers; ++l) {
        const auto& lp = params.layer[l];
        const auto u = u_step(s, v);
        auto w = w_step(s, v, u);
        for (auto& wi : w) wi = weight_gcf(wi, lp.a_w);
        const auto uplink = uplink_quantities(s, u, w);

        std::vector<HermitianEigd> eigs;
        std::vector<MuSolution> mu;
        std::vector<double> mus(c.num_bs());
        eigs.reserve(c.num_bs());
        for (int k = 0; k < c.num_bs(); ++k) {
            eigs.push_back(herm_eig(uplink.r[k]));
            std::vector<cmat> cell_vt;
            for (int i : c.cells[k]) cell_vt.push_back(uplink.v_tilde[i]);
            mu.push_back(mu_step(dual_spectrum(eigs[k], cell_vt, c.bs_power[k]), default_mu_init, substeps));
            mus[k] = mu.back().mu;
        }
        auto layer_out = downlink_gcn_layer(s, eigs, mus, uplink.v_tilde, state, lp, params.bias_scale);
        state = std::move(layer_out.state);
        v = power_projection(s, std::move(layer_out.v_hat));
        record_iteration(s, traj, v, mu, l + 1);
    }
    return traj;
}

ParameterSet wmmse_equivalent_params(int layers, int features, int degree)
{
    if (features < 1 || degree < 1) throw config_error("wmmse_equivalent_params: need F >= 1 and G >= 1");
    ParameterSet p;
    p.layers = layers;
    p.features = features;
    p.degree = degree;
    p.bias_scale = 1.0;
    for (int l = 0; l < layers; ++l) {
        GcnLayerParams lp;
        lp.a_w = rvec::Zero(degree + 1);
        lp.a_w(1) = 1.0;
        lp.a_v1 = cvec::Zero(features);
        lp.a_v1(0) = 1.0;
        lp.a_v0 = cvec::Zero(features);
        lp.b = rvec::Zero(features);
        lp.c = cvec::Zero(features);
        lp.c(0) = 1.0;
        if (l > 0) lp.d = cmat::Zero(features, features);
        p.layer.push_back(std::move(lp));
    }
    p.validate();
    return p;
}

// ---------------------------------------------------------------------------
// flat views

namespace {

struct Writer {
    rvec& out;
    Eigen::Index pos = 0;
    void real(const rvec& x) { out.segment(pos, x.size()) = x; pos += x.size(); }
    void complex(const cvec& x)
    {
        for (Eigen::Index j = 0; j < x.size(); ++j) { out(pos++) = x(j).real(); out(pos++) = x(j).imag(); }
    }
};

struct Reader {
    const rvec& in;
    Eigen::Index pos = 0;
    void real(rvec& x) { x = in.segment(pos, x.size()); pos += x.size(); }
    void complex(cvec& x)
    {
        for (Eigen::Index j = 0; j < x.size(); ++j) { x(j) = cplx(in(pos), in(pos + 1)); pos += 2; }
    }
};

} // namespace

rvec pack(const ParameterSet& params)
{
    rvec flat(params.real_dof());
    Writer w{flat};
    for (const auto& lp : params.layer) {
        w.real(lp.a_w);
        w.complex(lp.a_v1);
        w.complex(lp.a_v0);
        w.real(lp.b);
        w.complex(lp.c);
        if (lp.d.size() != 0) w.complex(lp.d.reshaped());
    }
    return flat;
}

ParameterSet unpack(const ParameterSet& shape, const rvec& flat)
{
    if (flat.size() != shape.real_dof()) throw dimension_error("unpack: flat parameter vector has wrong length");
    ParameterSet p = shape;
    Reader r{flat};
    for (auto& lp : p.layer) {
        r.real(lp.a_w);
        r.complex(lp.a_v1);
        r.complex(lp.a_v0);
        r.real(lp.b);
        r.complex(lp.c);
        if (lp.d.size() != 0) {
            cvec d(lp.d.size());
            r.complex(d);
            lp.d = d.reshaped(lp.d.rows(), lp.d.cols());
        }
    }
    return p;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

nlohmann::json complex_array(const cvec& x)
{
    nlohmann::json arr = nlohmann::json::array();
    for (Eigen::Index j = 0; j < x.size(); ++j) arr.push_back({x(j).real(), x(j).imag()});
    return arr;
}

cvec complex_from(const nlohmann::json& arr)
{
    cvec x(static_cast<Eigen::Index>(arr.size()));
    for (std::size_t j = 0; j < arr.size(); ++j) {
        x(static_cast<Eigen::Index>(j)) = cplx(arr[j].at(0).get<double>(), arr[j].at(1).get<double>());
    }
    return x;
}

rvec real_from(const nlohmann::json& arr)
{
    const auto v = arr.get<std::vector<double>>();
    return Eigen::Map<const rvec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

} // namespace

nlohmann::json params_to_json(const ParameterSet& params)
{
    nlohmann::json j;
    j["schema_version"] = params_schema_version;
    j["L"] = params.layers;
    j["F"] = params.features;
    j["G"] = params.degree;
    j["b_S"] = params.bias_scale;
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& lp : params.layer) {
        nlohmann::json e;
        e["a_W"] = std::vector<double>(lp.a_w.begin(), lp.a_w.end());
        e["a_V1"] = complex_array(lp.a_v1);
        e["a_V0"] = complex_array(lp.a_v0);
        e["b"] = std::vector<double>(lp.b.begin(), lp.b.end());
        e["c"] = complex_array(lp.c);
        if (lp.d.size() != 0) {
            nlohmann::json rows = nlohmann::json::array();
            for (Eigen::Index r = 0; r < lp.d.rows(); ++r) rows.push_back(complex_array(lp.d.row(r).transpose()));
            e["D"] = std::move(rows);
        }
        layers.push_back(std::move(e));
    }
    j["layers"] = std::move(layers);
    return j;
}

ParameterSet params_from_json(const nlohmann::json& j)
{
    ParameterSet p;
    try {
        const int version = j.at("schema_version").get<int>();
        if (version != params_schema_version) throw version_error(version, params_schema_version);
        p.layers = j.at("L").get<int>();
        p.features = j.at("F").get<int>();
        p.degree = j.at("G").get<int>();
        p.bias_scale = j.at("b_S").get<double>();
        for (const auto& e : j.at("layers")) {
            GcnLayerParams lp;
            lp.a_w = real_from(e.at("a_W"));
            lp.a_v1 = complex_from(e.at("a_V1"));
            lp.a_v0 = complex_from(e.at("a_V0"));
            lp.b = real_from(e.at("b"));
            lp.c = complex_from(e.at("c"));
            if (e.contains("D")) {
                const auto& rows = e.at("D");
                lp.d = cmat(static_cast<Eigen::Index>(rows.size()), p.features);
                for (std::size_t r = 0; r < rows.size(); ++r) {
                    const cvec row = complex_from(rows[r]);
                    if (row.size() != p.features) throw config_error("params: D rows must have F entries");
                    lp.d.row(static_cast<Eigen::Index>(r)) = row.transpose();
                }
            }
            p.layer.push_back(std::move(lp));
        }
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("params file: ") + e.what());
    }
    p.validate();
    return p;
}

void save_params(const ParameterSet& params, const std::filesystem::path& path)
{
    write_text_file(path, params_to_json(params).dump(2));
}

ParameterSet load_params(const std::filesystem::path& path)
{
    const std::string text = read_text_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw parse_error(std::string("params file: ") + e.what(), e.byte);
    }
    return params_from_json(j);
}

// ---------------------------------------------------------------------------
// unfolded PGD

void PgdParameterSet::validate() const
{
    if (layers < 1 || substeps < 1) throw config_error("PgdParameterSet: need L >= 1 and Q >= 1");
    if (static_cast<int>(step.size()) != layers) throw config_error("PgdParameterSet: layer count mismatch");
    for (const auto& g : step) {
        if (g.size() != substeps) throw config_error("PgdParameterSet: need Q step sizes per layer");
        if ((g.array() <= 0.0).any()) throw config_error("PgdParameterSet: step sizes must be > 0");
    }
}

std::vector<cmat> pgd_v_step(const cmat& r, const std::vector<cmat>& cell_v_tilde,
                             std::vector<cmat> cell_v, const rvec& gamma, double power_budget)
{
    std::vector<cmat*> ptrs;
    for (auto& v : cell_v) ptrs.push_back(&v);
    power_projection(ptrs, power_budget);
    for (Eigen::Index q = 0; q < gamma.size(); ++q) {
        for (std::size_t i = 0; i < cell_v.size(); ++i) {
            cell_v[i] -= gamma(q) * (r * cell_v[i] - cell_v_tilde[i]);
        }
        power_projection(ptrs, power_budget);
    }
    return cell_v;
}

SolverTrajectory pgd_forward(const ScenarioRealization& s, const PgdParameterSet& params)
{
    const auto& c = s.config;
    SolverTrajectory traj;
    traj.initial = init_mrc(s);
    traj.initial_wsr = wsr(s, traj.initial);
    BeamformerSet v = traj.initial;
    for (int l = 0; l < params.layers; ++l) {
        const auto u = u_step(s, v);
        const auto w = w_step(s, v, u);
        const auto uplink = uplink_quantities(s, u, w);
        BeamformerSet next = v;
        for (int k = 0; k < c.num_bs(); ++k) {
            std::vector<cmat> vt, prev;
            for (int i : c.cells[k]) {
                vt.push_back(uplink.v_tilde[i]);
                prev.push_back(v[i]);
            }
            auto out = pgd_v_step(uplink.r[k], vt, std::move(prev), params.step[l], c.bs_power[k]);
            for (std::size_t j = 0; j < out.size(); ++j) next[c.cells[k][j]] = std::move(out[j]);
        }
        v = std::move(next);
        record_iteration(s, traj, v, {}, l + 1);
    }
    return traj;
}

PgdParameterSet pgd_constant_params(int layers, int substeps, double gamma)
{
    PgdParameterSet p;
    p.layers = layers;
    p.substeps = substeps;
    p.step.assign(layers, rvec::Constant(substeps, gamma));
    p.validate();
    return p;
}

rvec pack(const PgdParameterSet& params)
{
    rvec flat(params.layers * params.substeps);
    for (int l = 0; l < params.layers; ++l) {
        flat.segment(l * params.substeps, params.substeps) = params.step[l].array().log();
    }
    return flat;
}

PgdParameterSet unpack(const PgdParameterSet& shape, const rvec& flat)
{
    if (flat.size() != shape.layers * shape.substeps) throw dimension_error("unpack: wrong PGD vector length");
    PgdParameterSet p = shape;
    for (int l = 0; l < p.layers; ++l) p.step[l] = flat.segment(l * p.substeps, p.substeps).array().exp();
    return p;
}

nlohmann::json pgd_params_to_json(const PgdParameterSet& params)
{
    nlohmann::json j;
    j["schema_version"] = params_schema_version;
    j["kind"] = "pgd";
    j["L"] = params.layers;
    j["Q"] = params.substeps;
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& g : params.step) steps.push_back(std::vector<double>(g.begin(), g.end()));
    j["gamma"] = std::move(steps);
    return j;
}

PgdParameterSet pgd_params_from_json(const nlohmann::json& j)
{
    PgdParameterSet p;
    try {
        const int version = j.at("schema_version").get<int>();
        if (version != params_schema_version) throw version_error(version, params_schema_version);
        p.layers = j.at("L").get<int>();
        p.substeps = j.at("Q").get<int>();
        for (const auto& g : j.at("gamma")) p.step.push_back(real_from(g));
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("PGD params: ") + e.what());
    }
    p.validate();
    return p;
}

} // namespace beamforge
