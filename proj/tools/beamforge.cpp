#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "beamforge/harness.hpp"
#include "beamforge/scenario.hpp"
#include "beamforge/training.hpp"
#include "beamforge/unrolled.hpp"
#include "beamforge/wmmse.hpp"

namespace fs = std::filesystem;
using namespace beamforge;

namespace {

nlohmann::json read_json(const fs::path& path)
{
    const std::string text = read_text_file(path);
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw parse_error(path.string() + ": " + e.what(), e.byte);
    }
}

void write_trace(const ScenarioRealization& s, const SolverTrajectory& traj, const fs::path& path)
{
    const int k_count = s.config.num_bs();
    std::ostringstream out;
    out << "iter,wsr_nats";
    for (int k = 0; k < k_count; ++k) out << ",mu_" << k;
    for (int k = 0; k < k_count; ++k) out << ",cs_residual_" << k;
    out << ",feasible\n";
    for (std::size_t t = 0; t < traj.size(); ++t) {
        out << t + 1 << ',' << format_float(traj.wsr[t]);
        for (int k = 0; k < k_count; ++k) out << ',' << format_float(traj.mu[t](k));
        for (int k = 0; k < k_count; ++k) out << ',' << format_float(traj.cs_residual[t](k));
        out << ',' << (is_feasible(s, traj.beamformers[t], 1e-6) ? 1 : 0) << '\n';
    }
    write_text_file(path, out.str());
}

void report(const SolverTrajectory& traj)
{
    std::cout << fmt::format("iterations {}  wsr {} nats  hard-case flags {}\n", traj.size(),
                             format_float(traj.wsr.empty() ? traj.initial_wsr : traj.wsr.back()),
                             std::accumulate(traj.hard_case_flags.begin(), traj.hard_case_flags.end(), 0));
}

int cmd_generate(const fs::path& config_path, int count, std::uint64_t seed, const fs::path& out)
{
    const ScenarioConfig config = config_from_json(read_json(config_path));
    fs::create_directories(out);
    for (int n = 0; n < count; ++n) {
        save_realization(sample(config, seed, static_cast<std::uint64_t>(n)),
                         out / fmt::format("scenario_{:05d}.json", n));
    }
    std::cout << fmt::format("wrote {} realizations to {}\n", count, out.string());
    return 0;
}

int cmd_solve(const fs::path& scenario, const std::string& init, int iters, int substeps, std::uint64_t seed,
              const fs::path& trace)
{
    const ScenarioRealization s = load_realization(scenario);
    const BeamformerSet v0 = init == "mrc" ? init_mrc(s) : init_random(s, seed);
    const SolverTrajectory traj = run(s, v0, iters, substeps);
    if (!trace.empty()) write_trace(s, traj, trace);
    report(traj);
    return 0;
}

int cmd_infer(const fs::path& scenario, const fs::path& params, const fs::path& trace)
{
    const ScenarioRealization s = load_realization(scenario);
    const nlohmann::json pj = read_json(params);
    const SolverTrajectory traj = pj.value("kind", std::string("gcnwmmse")) == "pgd"
                                      ? pgd_forward(s, pgd_params_from_json(pj))
                                      : gcnwmmse_forward(s, params_from_json(pj));
    if (!trace.empty()) write_trace(s, traj, trace);
    report(traj);
    return 0;
}

template <typename Model>
void write_training_log(const TrainResult<Model>& result, const fs::path& path)
{
    std::ostringstream out;
    out << "step,loss,lr,grad_norm,clipped,b_S\n";
    for (const auto& r : result.log) {
        out << r.step << ',' << format_float(r.loss) << ',' << format_float(r.learning_rate) << ','
            << format_float(r.grad_norm) << ',' << (r.clipped ? 1 : 0) << ',' << format_float(r.bias_scale)
            << '\n';
    }
    write_text_file(path, out.str());
}

int cmd_train(const fs::path& config_path, const fs::path& data, const fs::path& out, const fs::path& log)
{
    const nlohmann::json cj = read_json(config_path);
    const TrainingConfig config = training_config_from_json(cj);
    const nlohmann::json model = cj.value("model", nlohmann::json::object());
    const int validation_count = cj.value("validation_count", 0);
    const auto [source, validation] = training_data(data, config.seed, validation_count);

    const std::string kind = model.value("kind", std::string("gcnwmmse"));
    if (kind == "pgd") {
        const auto init = pgd_init_params(model.value("L", 3), model.value("Q", 8), source.batch(0, config.batch_size));
        const auto result = train(config, source, validation, init);
        write_text_file(out, pgd_params_to_json(result.best).dump(2) + "\n");
        if (!log.empty()) write_training_log(result, log);
        std::cout << fmt::format("trained PGD ({} steps), validation wsr {}\n", result.log.size(),
                                 format_float(result.best_validation_wsr));
        return result.diverged ? 1 : 0;
    }
    if (kind != "gcnwmmse") throw config_error("model kind must be gcnwmmse or pgd");
    const ParameterSet init = initial_params_from_json(model, config.seed);
    const auto result = train(config, source, validation, init);
    save_params(result.best, out);
    if (!log.empty()) write_training_log(result, log);
    std::cout << fmt::format("trained GCN-WMMSE ({} steps), validation wsr {}\n", result.log.size(),
                             format_float(result.best_validation_wsr));
    if (result.diverged) spdlog::error("training diverged");
    return result.diverged ? 1 : 0;
}

int cmd_bench(const fs::path& config_path, const fs::path& out, int workers)
{
    const ExperimentConfig config = load_experiment_config(config_path);
    const auto realizations = experiment_realizations(config);
    const auto results = run_experiment(config, realizations, workers);
    const auto rows = aggregate(results);
    emit(config, results, rows, out);
    for (const auto& r : rows) {
        std::cout << fmt::format("{:<16} wsr {:>10}  rel {:>8}%  rounds {}\n", r.method, format_float(r.mean_wsr),
                                 format_float(r.relative_wsr), r.rounds);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"beamforge: coordinated multicell beamforming by WMMSE and unrolled GCN-WMMSE"};
    app.require_subcommand(1);
    std::string level = "warn";
    app.add_option("--log-level", level, "spdlog level")->check(
        CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

    fs::path config, out, scenario, trace, params, data, log;
    int count = 1, iters = 100, workers = 1, substeps = solver_mu_substeps;
    std::uint64_t seed = 0;
    std::string init = "mrc";

    auto* gen = app.add_subcommand("generate", "sample scenario realizations");
    gen->add_option("--config", config)->required()->check(CLI::ExistingFile);
    gen->add_option("--count", count)->check(CLI::PositiveNumber);
    gen->add_option("--seed", seed)->required();
    gen->add_option("--out", out)->required();

    auto* solve = app.add_subcommand("solve", "classical WMMSE");
    solve->add_option("--scenario", scenario)->required()->check(CLI::ExistingFile);
    solve->add_option("--init", init)->check(CLI::IsMember({"mrc", "random"}));
    solve->add_option("--iters", iters)->check(CLI::PositiveNumber);
    solve->add_option("--substeps", substeps, "dual root-finder substeps")->check(CLI::PositiveNumber);
    solve->add_option("--seed", seed);
    solve->add_option("--trace", trace);

    auto* infer = app.add_subcommand("infer", "GCN-WMMSE or PGD forward pass");
    infer->add_option("--scenario", scenario)->required()->check(CLI::ExistingFile);
    infer->add_option("--params", params)->required()->check(CLI::ExistingFile);
    infer->add_option("--trace", trace);

    auto* tr = app.add_subcommand("train", "derivative-free training");
    tr->add_option("--config", config)->required()->check(CLI::ExistingFile);
    tr->add_option("--data", data, "scenario directory or generator config")->required()->check(CLI::ExistingPath);
    tr->add_option("--out", out)->required();
    tr->add_option("--log", log);

    auto* bench = app.add_subcommand("bench", "baseline comparison");
    bench->add_option("--config", config)->required()->check(CLI::ExistingFile);
    bench->add_option("--out", out)->required();
    bench->add_option("--workers", workers)->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(spdlog::level::from_str(level));

    try {
        if (gen->parsed()) return cmd_generate(config, count, seed, out);
        if (solve->parsed()) return cmd_solve(scenario, init, iters, substeps, seed, trace);
        if (infer->parsed()) return cmd_infer(scenario, params, trace);
        if (tr->parsed()) return cmd_train(config, data, out, log);
        if (bench->parsed()) return cmd_bench(config, out, workers);
    } catch (const parse_error& e) {
        std::cerr << "error: " << e.what() << " (byte " << e.offset << ")\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
