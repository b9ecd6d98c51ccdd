#include "beamforge/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "beamforge/rng.hpp"

namespace beamforge {

std::string to_string(MethodKind kind)
{
    switch (kind) {
    case MethodKind::wmmse: return "wmmse";
    case MethodKind::truncated: return "truncated";
    case MethodKind::gcnwmmse: return "gcnwmmse";
    case MethodKind::pgd: return "pgd";
    }
    return "unknown";
}

namespace {

MethodKind kind_from_string(const std::string& name)
{
    if (name == "wmmse") return MethodKind::wmmse;
    if (name == "truncated") return MethodKind::truncated;
    if (name == "gcnwmmse") return MethodKind::gcnwmmse;
    if (name == "pgd") return MethodKind::pgd;
    throw config_error("unknown method kind '" + name + "'");
}

} // namespace

const MethodSpec& ExperimentConfig::method(const std::string& id) const
{
    for (const auto& m : methods) {
        if (m.id == id) return m;
    }
    throw config_error("unknown method '" + id + "'");
}

std::string ExperimentConfig::reference_id() const
{
    if (!reference.empty()) return reference;
    for (const auto& m : methods) {
        if (m.kind == MethodKind::wmmse && m.reduce == "max") return m.id;
    }
    return methods.empty() ? std::string() : methods.front().id;
}

void ExperimentConfig::validate() const
{
    if (methods.empty()) throw config_error("experiment: at least one method is required");
    if (!scenario && scenario_dir.empty()) throw config_error("experiment: need a scenario config or directory");
    if (scenario && realizations < 1) throw config_error("experiment: realizations must be >= 1");
    if (substeps < 1 || solver_substeps < 1) throw config_error("experiment: substeps must be >= 1");
    std::set<std::string> ids;
    for (const auto& m : methods) {
        if (m.id.empty()) throw config_error("experiment: method without id");
        if (!ids.insert(m.id).second) throw config_error("experiment: duplicate method id '" + m.id + "'");
        switch (m.kind) {
        case MethodKind::wmmse:
            if (m.init != "mrc" && m.init != "random") throw config_error(m.id + ": init must be mrc or random");
            if (m.iterations < 1 || m.repetitions < 1) throw config_error(m.id + ": iterations/repetitions >= 1");
            if (m.reduce != "mean" && m.reduce != "max") throw config_error(m.id + ": reduce must be mean or max");
            break;
        case MethodKind::truncated: {
            const auto& base = method(m.of);
            if (base.kind != MethodKind::wmmse) throw config_error(m.id + ": can only truncate a wmmse method");
            if (m.layers < 1 || m.layers > base.iterations) {
                throw config_error(m.id + ": truncation length outside [1, " + std::to_string(base.iterations) + "]");
            }
            break;
        }
        case MethodKind::gcnwmmse:
            if (!m.gcn) throw config_error(m.id + ": missing GCN-WMMSE parameters");
            m.gcn->validate();
            break;
        case MethodKind::pgd:
            if (!m.pgd) throw config_error(m.id + ": missing PGD parameters");
            m.pgd->validate();
            break;
        }
    }
    method(reference_id());
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir)
{
    ExperimentConfig c;
    c.source = j;
    try {
        if (j.contains("scenario")) {
            c.scenario = config_from_json(j.at("scenario"));
            c.realizations = j.value("realizations", 0);
        }
        if (j.contains("scenario_dir")) {
            std::filesystem::path dir = j.at("scenario_dir").get<std::string>();
            c.scenario_dir = dir.is_relative() ? base_dir / dir : dir;
        }
        if (!j.contains("seed")) throw config_error("experiment: seed must be given explicitly");
        c.seed = j.at("seed").get<std::uint64_t>();
        c.init_seed = j.value("init_seed", c.seed + 1);
        c.reference = j.value("reference", std::string());
        c.substeps = j.value("substeps", c.substeps);
        c.solver_substeps = j.value("solver_substeps", c.solver_substeps);
        c.record_timing = j.value("record_timing", c.record_timing);
        for (const auto& mj : j.at("methods")) {
            MethodSpec m;
            m.id = mj.at("id").get<std::string>();
            m.kind = kind_from_string(mj.at("kind").get<std::string>());
            m.init = mj.value("init", m.init);
            m.iterations = mj.value("iterations", m.iterations);
            m.repetitions = mj.value("repetitions", m.repetitions);
            m.reduce = mj.value("reduce", m.reduce);
            m.of = mj.value("of", m.of);
            m.layers = mj.value("layers", m.layers);
            if (m.kind == MethodKind::gcnwmmse || m.kind == MethodKind::pgd) {
                if (!mj.contains("params")) throw config_error(m.id + ": learned method needs a params file");
                std::filesystem::path p = mj.at("params").get<std::string>();
                m.params_path = p.is_relative() ? base_dir / p : p;
                if (!std::filesystem::exists(m.params_path)) {
                    throw config_error(m.id + ": params file '" + m.params_path.string() + "' not found");
                }
                const auto pj = nlohmann::json::parse(read_text_file(m.params_path));
                if (m.kind == MethodKind::gcnwmmse) m.gcn = params_from_json(pj);
                else m.pgd = pgd_params_from_json(pj);
            }
            c.methods.push_back(std::move(m));
        }
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("experiment config: ") + e.what());
    }
    c.validate();
    return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path)
{
    const std::string text = read_text_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw parse_error(std::string("experiment config: ") + e.what(), e.byte);
    }
    return experiment_config_from_json(j, path.parent_path());
}

std::vector<ScenarioRealization> experiment_realizations(const ExperimentConfig& config)
{
    if (config.scenario) {
        std::vector<ScenarioRealization> out;
        out.reserve(config.realizations);
        for (int n = 0; n < config.realizations; ++n) out.push_back(sample(*config.scenario, config.seed, n));
        return out;
    }
    return load_realization_dir(config.scenario_dir);
}

int round_accounting(const SolverTrajectory& traj)
{
    return static_cast<int>(traj.size());
}

int feasibility_violations(const ScenarioRealization& s, const SolverTrajectory& traj, double rel_tol)
{
    int count = 0;
    for (const auto& v : traj.beamformers) {
        for (int k = 0; k < s.config.num_bs(); ++k) {
            if (cell_power(s, v, k) > s.config.bs_power[k] * (1.0 + rel_tol)) ++count;
        }
    }
    return count;
}

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point start)
{
    return std::chrono::duration<double>(clock_type::now() - start).count();
}

MethodResult summarize(const ScenarioRealization& s, const SolverTrajectory& traj)
{
    MethodResult r;
    r.curve = traj.wsr;
    r.wsr = traj.wsr.empty() ? traj.initial_wsr : traj.wsr.back();
    r.rounds = round_accounting(traj);
    r.feasibility_violations = feasibility_violations(s, traj);
    for (int f : traj.hard_case_flags) r.hard_case_flags += f;
    return r;
}

// Combines repeated runs pointwise; for "max" the curve is the per-iteration best.
MethodResult reduce_runs(const std::vector<MethodResult>& runs, const std::string& reduce)
{
    MethodResult out = runs.front();
    for (std::size_t r = 1; r < runs.size(); ++r) {
        for (std::size_t t = 0; t < out.curve.size(); ++t) {
            if (reduce == "max") out.curve[t] = std::max(out.curve[t], runs[r].curve[t]);
            else out.curve[t] += runs[r].curve[t];
        }
        out.feasibility_violations += runs[r].feasibility_violations;
        out.hard_case_flags += runs[r].hard_case_flags;
        out.wall_time += runs[r].wall_time;
    }
    if (reduce == "mean") {
        for (double& x : out.curve) x /= static_cast<double>(runs.size());
    }
    out.wsr = out.curve.back();
    return out;
}

} // namespace

std::vector<MethodResult> run_realization(const ExperimentConfig& config, const ScenarioRealization& s,
                                          std::size_t index)
{
    std::vector<MethodResult> out(config.methods.size());
    std::map<std::string, MethodResult> wmmse_cache;

    auto init_stream = substream(config.init_seed, index, 0x1a17u);
    const std::uint64_t init_seed = init_stream();

    for (std::size_t m = 0; m < config.methods.size(); ++m) {
        const auto& spec = config.methods[m];
        if (spec.kind != MethodKind::wmmse) continue;
        std::vector<MethodResult> runs;
        const int reps = spec.init == "mrc" ? 1 : spec.repetitions;
        for (int r = 0; r < reps; ++r) {
            const auto start = clock_type::now();
            const BeamformerSet init =
                spec.init == "mrc" ? init_mrc(s) : init_random(s, init_seed, static_cast<std::uint64_t>(r));
            const auto traj = run(s, init, spec.iterations, config.solver_substeps);
            MethodResult res = summarize(s, traj);
            res.wall_time = seconds_since(start);
            runs.push_back(std::move(res));
        }
        out[m] = reduce_runs(runs, spec.reduce);
        wmmse_cache[spec.id] = out[m];
    }

    for (std::size_t m = 0; m < config.methods.size(); ++m) {
        const auto& spec = config.methods[m];
        const auto start = clock_type::now();
        switch (spec.kind) {
        case MethodKind::wmmse:
            continue;
        case MethodKind::truncated: {
            const MethodResult& base = wmmse_cache.at(spec.of);
            MethodResult res;
            res.curve.assign(base.curve.begin(), base.curve.begin() + spec.layers);
            res.wsr = res.curve.back();
            res.rounds = spec.layers;
            res.wall_time = base.wall_time * spec.layers / static_cast<double>(base.curve.size());
            out[m] = std::move(res);
            continue;
        }
        case MethodKind::gcnwmmse:
            out[m] = summarize(s, gcnwmmse_forward(s, *spec.gcn, config.substeps));
            break;
        case MethodKind::pgd:
            out[m] = summarize(s, pgd_forward(s, *spec.pgd));
            break;
        }
        out[m].wall_time = seconds_since(start);
    }

    if (!config.record_timing) {
        for (auto& r : out) r.wall_time = 0.0;
    }
    return out;
}

ExperimentResults run_experiment(const ExperimentConfig& config,
                                 const std::vector<ScenarioRealization>& realizations, int workers)
{
    config.validate();
    ExperimentResults res;
    for (const auto& m : config.methods) res.method_ids.push_back(m.id);
    res.reference = config.reference_id();
    res.results.resize(realizations.size());

    // Each realization is owned by exactly one worker; slots are written by index,
    // so aggregation order never depends on scheduling.
    std::atomic<std::size_t> next{0};
    std::vector<std::string> failures(realizations.size());
    auto worker = [&] {
        for (std::size_t n = next++; n < realizations.size(); n = next++) {
            try {
                res.results[n] = run_realization(config, realizations[n], n);
            } catch (const std::exception& e) {
                failures[n] = e.what();
            }
        }
    };
    const int count = std::max(1, std::min<int>(workers, static_cast<int>(realizations.size())));
    std::vector<std::thread> pool;
    for (int w = 1; w < count; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    for (std::size_t n = 0; n < failures.size(); ++n) {
        if (!failures[n].empty()) {
            throw numeric_error("realization " + std::to_string(n) + ": " + failures[n]);
        }
    }
    return res;
}

std::vector<MetricsRow> aggregate(const ExperimentResults& results)
{
    constexpr double z99 = 2.5758293035489004;
    const std::size_t methods = results.method_ids.size();
    const std::size_t n = results.results.size();
    std::size_t ref = 0;
    for (std::size_t m = 0; m < methods; ++m) {
        if (results.method_ids[m] == results.reference) ref = m;
    }

    std::vector<MetricsRow> rows(methods);
    for (std::size_t m = 0; m < methods; ++m) {
        MetricsRow& row = rows[m];
        row.method = results.method_ids[m];
        if (n == 0) continue;
        double sum = 0.0, sum_sq = 0.0, ratio = 0.0, time = 0.0;
        row.curve.assign(results.results[0][m].curve.size(), 0.0);
        for (std::size_t r = 0; r < n; ++r) {
            const MethodResult& x = results.results[r][m];
            sum += x.wsr;
            sum_sq += x.wsr * x.wsr;
            const double ref_wsr = results.results[r][ref].wsr;
            ratio += ref_wsr > 0.0 ? 100.0 * x.wsr / ref_wsr : 0.0;
            time += x.wall_time;
            row.feasibility_violations += x.feasibility_violations;
            row.hard_case_flags += x.hard_case_flags;
            for (std::size_t t = 0; t < row.curve.size() && t < x.curve.size(); ++t) row.curve[t] += x.curve[t];
        }
        const double dn = static_cast<double>(n);
        row.mean_wsr = sum / dn;
        const double var = n > 1 ? std::max(0.0, (sum_sq - dn * row.mean_wsr * row.mean_wsr) / (dn - 1.0)) : 0.0;
        row.ci99 = z99 * std::sqrt(var / dn);
        row.relative_wsr = ratio / dn;
        row.wall_time = time / dn;
        row.rounds = results.results[0][m].rounds;
        for (double& c : row.curve) c /= dn;
    }
    return rows;
}

std::vector<MetricsRow> run_baselines(const ExperimentConfig& config, int workers)
{
    return aggregate(run_experiment(config, experiment_realizations(config), workers));
}

int iterations_to_reach(const std::vector<double>& curve, double target)
{
    for (std::size_t t = 0; t < curve.size(); ++t) {
        if (curve[t] >= target) return static_cast<int>(t + 1);
    }
    return -1;
}

std::string format_float(double x)
{
    return fmt::format("{:.6g}", x);
}

namespace {

double rounded(double x)
{
    return std::stod(format_float(x));
}

} // namespace

void emit(const ExperimentConfig& config, const ExperimentResults& results,
          const std::vector<MetricsRow>& rows, const std::filesystem::path& out_dir)
{
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw io_error("cannot create '" + out_dir.string() + "': " + ec.message());

    std::ostringstream agg;
    agg << "method,mean_wsr_nats,ci99_half_width,relative_wsr_pct,communication_rounds,wall_time_s,"
           "feasibility_violations,hard_case_flags\n";
    for (const auto& r : rows) {
        agg << r.method << ',' << format_float(r.mean_wsr) << ',' << format_float(r.ci99) << ','
            << format_float(r.relative_wsr) << ',' << r.rounds << ',' << format_float(r.wall_time) << ','
            << r.feasibility_violations << ',' << r.hard_case_flags << '\n';
    }
    write_text_file(out_dir / "aggregate.csv", agg.str());

    // For every learned or truncated method: classical iterations needed to match it.
    nlohmann::json matching = nlohmann::json::object();
    for (const auto& r : rows) {
        const auto& spec = config.method(r.method);
        if (spec.kind == MethodKind::wmmse) continue;
        for (const auto& base : rows) {
            const auto& bspec = config.method(base.method);
            if (bspec.kind != MethodKind::wmmse) continue;
            matching[r.method][base.method] = iterations_to_reach(base.curve, r.mean_wsr);
        }
    }

    nlohmann::json jrows = nlohmann::json::array();
    for (const auto& r : rows) {
        jrows.push_back({{"method", r.method},
                         {"kind", to_string(config.method(r.method).kind)},
                         {"mean_wsr_nats", rounded(r.mean_wsr)},
                         {"ci99_half_width", rounded(r.ci99)},
                         {"relative_wsr_pct", rounded(r.relative_wsr)},
                         {"communication_rounds", r.rounds},
                         {"wall_time_s", rounded(r.wall_time)},
                         {"feasibility_violations", r.feasibility_violations},
                         {"hard_case_flags", r.hard_case_flags}});
    }
    nlohmann::json doc = {
        {"metadata",
         {{"reference", results.reference},
          {"relative_wsr", "mean over realizations of 100 * wsr / reference wsr"},
          {"confidence_interval", "99% normal approximation, z = 2.5758"},
          {"realizations", results.results.size()},
          {"seed", config.seed},
          {"init_seed", config.init_seed},
          {"substeps", config.substeps},
          {"solver_substeps", config.solver_substeps},
          {"iterations_to_match", matching}}},
        {"config", config.source},
        {"rows", jrows}};
    write_text_file(out_dir / "aggregate.json", doc.dump(2) + "\n");

    std::ostringstream per;
    per << "realization,method,wsr_nats,relative_wsr_pct,communication_rounds,wall_time_s,"
           "feasibility_violations,hard_case_flags\n";
    std::size_t ref = 0;
    for (std::size_t m = 0; m < results.method_ids.size(); ++m) {
        if (results.method_ids[m] == results.reference) ref = m;
    }
    for (std::size_t n = 0; n < results.results.size(); ++n) {
        for (std::size_t m = 0; m < results.method_ids.size(); ++m) {
            const MethodResult& x = results.results[n][m];
            const double ref_wsr = results.results[n][ref].wsr;
            per << n << ',' << results.method_ids[m] << ',' << format_float(x.wsr) << ','
                << format_float(ref_wsr > 0.0 ? 100.0 * x.wsr / ref_wsr : 0.0) << ',' << x.rounds << ','
                << format_float(x.wall_time) << ',' << x.feasibility_violations << ',' << x.hard_case_flags
                << '\n';
        }
    }
    write_text_file(out_dir / "per_realization.csv", per.str());

    std::ostringstream curves;
    curves << "method,iter,wsr_nats\n";
    for (const auto& r : rows) {
        for (std::size_t t = 0; t < r.curve.size(); ++t) {
            curves << r.method << ',' << t + 1 << ',' << format_float(r.curve[t]) << '\n';
        }
    }
    write_text_file(out_dir / "curves.csv", curves.str());
}

} // namespace beamforge
