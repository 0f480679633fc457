#include "paml/harness.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

using namespace paml;
using namespace paml::harness;

ExperimentConfig make_config(const std::string& env, const std::string& mode,
                             const std::string& config_path, bool desk) {
    ExperimentConfig cfg = ExperimentConfig::defaults(env, mode);
    if (!config_path.empty()) cfg = load_config_file(config_path, cfg);
    if (desk) cfg.apply_desk_scale();
    return cfg;
}

int cmd_run(const std::string& env, const std::string& mode, const std::string& strategy,
            int budget, int trials, std::uint64_t seed, const std::string& config_path,
            const std::string& out_dir, bool desk, bool with_oracle) {
    ExperimentConfig cfg = make_config(env, mode, config_path, desk);
    if (budget >= 0) cfg.budget = budget;
    if (trials > 0) cfg.trials = trials;
    cfg.seed = seed;

    std::vector<std::string> strategies;
    if (strategy == "all") {
        strategies = {"paml", "uni", "lhs"};
        if (cfg.mode == "pixel") strategies = {"paml", "uni"};
    } else {
        strategies = {strategy};
    }

    std::vector<RoundRecord> records;
    std::vector<TrialResult> paml_trials;
    for (const std::string& s : strategies) {
        for (int t = 0; t < cfg.trials; ++t) {
            const std::uint64_t trial_seed = cfg.seed + static_cast<std::uint64_t>(t);
            std::cerr << "[run] strategy=" << s << " trial=" << t << " seed=" << trial_seed
                      << "\n";
            TrialResult res = run_active_loop(cfg, s, trial_seed, t);
            records.insert(records.end(), res.records.begin(), res.records.end());
            if (s == "paml" && paml_trials.empty()) paml_trials.push_back(std::move(res));
        }
    }

    std::vector<OracleResult> oracle;
    if (with_oracle) {
        for (int t = 0; t < cfg.trials; ++t) {
            std::cerr << "[run] oracle trial=" << t << "\n";
            oracle.push_back(run_oracle(cfg, cfg.seed + static_cast<std::uint64_t>(t)));
        }
    }

    export_results(records, paml_trials, oracle, out_dir);
    write_config_file(cfg, (std::filesystem::path(out_dir) / "config.txt").string());
    std::cout << "wrote results to " << out_dir << "\n";
    return 0;
}

int cmd_oracle(const std::string& env, const std::string& mode, int trials, std::uint64_t seed,
               const std::string& config_path, const std::string& out_dir, bool desk) {
    ExperimentConfig cfg = make_config(env, mode, config_path, desk);
    if (trials > 0) cfg.trials = trials;
    cfg.seed = seed;
    std::filesystem::create_directories(out_dir);
    std::ofstream out(std::filesystem::path(out_dir) / "oracle.csv");
    out << "seed,nll,rmse\n" << std::setprecision(17);
    for (int t = 0; t < cfg.trials; ++t) {
        const auto r = run_oracle(cfg, cfg.seed + static_cast<std::uint64_t>(t));
        std::cerr << "[oracle] trial=" << t << " nll=" << r.nll << " rmse=" << r.rmse << "\n";
        out << r.seed << ',' << r.nll << ',' << r.rmse << '\n';
    }
    std::cout << "wrote oracle metrics to " << out_dir << "\n";
    return 0;
}

int cmd_plot(const std::string& in_dir, const std::string& out_dir) {
    namespace fs = std::filesystem;
    const auto records = read_records_csv((fs::path(in_dir) / "curves.csv").string());
    const auto curves = aggregate(records);

    double oracle_nll = 0.0, oracle_rmse = 0.0;
    bool have_oracle = false;
    const fs::path oracle_path = fs::path(in_dir) / "oracle.csv";
    if (fs::exists(oracle_path)) {
        std::ifstream in(oracle_path);
        std::string line;
        std::getline(in, line);
        int n = 0;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto comma1 = line.find(',');
            const auto comma2 = line.find(',', comma1 + 1);
            oracle_nll += std::stod(line.substr(comma1 + 1, comma2 - comma1 - 1));
            oracle_rmse += std::stod(line.substr(comma2 + 1));
            ++n;
        }
        if (n > 0) {
            oracle_nll /= n;
            oracle_rmse /= n;
            have_oracle = true;
        }
    }

    fs::create_directories(out_dir);
    write_curves_svg(curves, "nll", oracle_nll, have_oracle,
                     (fs::path(out_dir) / "curves_nll.svg").string());
    write_curves_svg(curves, "rmse", oracle_rmse, have_oracle,
                     (fs::path(out_dir) / "curves_rmse.svg").string());
    std::cout << "wrote plots to " << out_dir << "\n";
    return 0;
}

int cmd_simulate(const std::string& env, const std::string& mode,
                 std::vector<double> descriptor_values, int steps, std::uint64_t seed,
                 const std::string& out_dir, bool desk, bool render) {
    ExperimentConfig cfg = make_config(env, mode, "", desk);
    if (steps > 0) cfg.traj_steps = steps;
    Vector d(static_cast<Index>(descriptor_values.size()));
    for (std::size_t i = 0; i < descriptor_values.size(); ++i)
        d[static_cast<Index>(i)] = descriptor_values[i];
    Rng rng(seed);
    const TaskDataset ds = simulate_task(cfg, d, rng);

    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / "trajectory.csv");
    out << std::setprecision(17);
    for (Index j = 0; j < ds.inputs.cols(); ++j) out << (j ? "," : "") << "x" << j;
    for (Index j = 0; j < ds.targets.cols(); ++j) out << ",y" << j;
    out << "\n";
    for (Index i = 0; i < ds.inputs.rows(); ++i) {
        for (Index j = 0; j < ds.inputs.cols(); ++j) out << (j ? "," : "") << ds.inputs(i, j);
        for (Index j = 0; j < ds.targets.cols(); ++j) out << "," << ds.targets(i, j);
        out << "\n";
    }
    if (render && env == "cartpole") {
        envs::CartPoleParams p;
        p.pendulum_mass = cfg.mode == "full" || cfg.mode == "noisy" ? d[0] : 0.5;
        p.pendulum_length = cfg.mode == "full" || cfg.mode == "noisy" ? d[1] : d[0];
        Vector upright(4);
        upright << 0.0, M_PI, 0.0, 0.0;
        envs::write_pgm(envs::render_cartpole(p, upright, cfg.image_size),
                        (fs::path(out_dir) / "task.pgm").string());
    }
    std::cout << "wrote trajectory to " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Probabilistic active meta-learning for simulated robot dynamics"};
    app.require_subcommand(1);

    std::string env = "cartpole", mode = "full", strategy = "all";
    std::string config_path, out_dir = "out", in_dir = "out";
    int budget = -1, trials = 0, steps = 0;
    std::uint64_t seed = 0;
    bool desk = false, with_oracle = false, render = false;
    std::vector<double> descriptor_values;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--env", env, "cartpole | pendubot | cartdoublepole");
        cmd->add_option("--mode", mode, "full | partial | noisy | pixel");
        cmd->add_option("--seed", seed, "base seed; trial t uses seed + t");
        cmd->add_option("--config", config_path, "key-value config file");
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_flag("--desk-scale", desk, "shrink to laptop scale");
    };

    CLI::App* run = app.add_subcommand("run", "run the active learning loop");
    add_common(run);
    run->add_option("--strategy", strategy, "paml | uni | lhs | all");
    run->add_option("--budget", budget, "tasks to acquire after the initial set");
    run->add_option("--trials", trials, "independent trials");
    run->add_flag("--with-oracle", with_oracle, "also run the oracle per trial");

    CLI::App* oracle = app.add_subcommand("oracle", "train on the test grid");
    add_common(oracle);
    oracle->add_option("--trials", trials, "independent trials");

    CLI::App* plot = app.add_subcommand("plot", "render learning curves from curves.csv");
    plot->add_option("--in", in_dir, "directory holding curves.csv (and oracle.csv)");
    plot->add_option("--out", out_dir, "output directory");

    CLI::App* sim = app.add_subcommand("simulate", "roll out one task and export it");
    add_common(sim);
    sim->add_option("--descriptor", descriptor_values, "task descriptor values")->expected(-1);
    sim->add_option("--steps", steps, "trajectory length");
    sim->add_flag("--render", render, "also write a PGM render (cart-pole)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed())
            return cmd_run(env, mode, strategy, budget, trials, seed, config_path, out_dir, desk,
                           with_oracle);
        if (oracle->parsed())
            return cmd_oracle(env, mode, trials, seed, config_path, out_dir, desk);
        if (plot->parsed()) return cmd_plot(in_dir, out_dir);
        if (sim->parsed())
            return cmd_simulate(env, mode, descriptor_values, steps, seed, out_dir, desk, render);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
