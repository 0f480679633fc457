#pragma once

#include "paml/envs.hpp"
#include "paml/selection.hpp"

#include <map>
#include <string>

namespace paml::harness {

/// One experiment regime: environment, descriptor mode, budgets and all
/// optimizer settings. `defaults(env, mode)` fills in the published
/// hyper-parameters for that regime; `apply_desk_scale()` shrinks the run to
/// laptop scale while preserving the orderings the tests assert.
struct ExperimentConfig {
    std::string env = "cartpole";  // cartpole | pendubot | cartdoublepole
    std::string mode = "full";     // full | partial | noisy | pixel

    int n_init = 3;
    int budget = 15;
    int trials = 10;
    int test_tasks = 100;

    int traj_steps = 100;
    int control_alternations = 10;
    double dt = 0.125;

    int training_steps = 5000;
    int oracle_training_steps = 0;  // 0: same as training_steps
    int inducing = 300;
    int latent_dim = 2;
    int batch_tasks = 4;
    int batch_points = 100;
    double adam_alpha = 1e-2;
    int inference_steps = 100;
    double inference_alpha = 0.05;
    int eval_latent_samples = 8;
    double descriptor_weight = 1.0;
    int decoder_hidden = 64;

    int grid_points_per_dim = 100;
    std::string candidate_source = "grid";  // grid | prior (prior is a stub)

    int image_size = 32;
    int pixel_corpus = 100;
    int vae_hidden = 200;
    int vae_candidate_batch = 0;
    double vae_alpha = 0.002;

    std::uint64_t seed = 0;
    bool desk_scale = false;
    bool cold_start = false;  // retrain from scratch each round instead of warm-starting

    static ExperimentConfig defaults(const std::string& env, const std::string& mode);
    void apply_desk_scale();

    obj::TrainConfig train_config() const;
    sel::DescriptorBounds descriptor_bounds() const;
    Index descriptor_dim() const;
};

/// Key-value config file (one `key value` pair per line, `#` comments).
ExperimentConfig load_config_file(const std::string& path, ExperimentConfig base);
void write_config_file(const ExperimentConfig& cfg, const std::string& path);

struct RoundRecord {
    int round = 0;
    Vector selected_descriptor;  // empty on the initial round
    Vector selected_latent;      // PAML only
    double utility = std::numeric_limits<double>::quiet_NaN();
    double nll = 0.0;
    double rmse = 0.0;
    double wall_time_s = 0.0;
    std::uint64_t seed = 0;
    std::string strategy;
    int trial = 0;
};

struct TrialResult {
    std::vector<RoundRecord> records;
    std::vector<obj::TraceRow> elbo_trace;  // concatenated across rounds
    std::vector<task::TaskEmbedding> final_embeddings;
    std::vector<int> selection_rounds;  // per embedding: round acquired (-1 for initial)
};

/// Executes the active loop for one trial: train, evaluate on the fixed test
/// grid, select (PAML) or sample (baselines), simulate, append, repeat.
TrialResult run_active_loop(const ExperimentConfig& cfg, const std::string& strategy,
                            std::uint64_t trial_seed, int trial_index = 0);

struct OracleResult {
    double nll = 0.0;
    double rmse = 0.0;
    std::uint64_t seed = 0;
};

/// Trains the same meta-model directly on the test grid.
OracleResult run_oracle(const ExperimentConfig& cfg, std::uint64_t trial_seed);

/// Deterministic test-grid construction (shared by all strategies and the
/// oracle within a trial seed).
std::vector<TaskDataset> build_test_grid(const ExperimentConfig& cfg, std::uint64_t trial_seed);

/// Initial task descriptors drawn by LHS over the descriptor bounds, shared
/// across strategies within a trial seed.
std::vector<Vector> initial_descriptors(const ExperimentConfig& cfg, std::uint64_t trial_seed);

/// Simulates the task a descriptor resolves to (partial mode draws the
/// hidden mass from `rng`).
TaskDataset simulate_task(const ExperimentConfig& cfg, const Vector& descriptor, Rng& rng);

struct CurvePoint {
    std::string strategy;
    int round = 0;
    double mean_nll = 0.0, se_nll = 0.0;
    double mean_rmse = 0.0, se_rmse = 0.0;
    int trials = 0;
};

std::vector<CurvePoint> aggregate(const std::vector<RoundRecord>& records);

/// Writes curves.csv / selections.csv / elbo_trace.csv / summary.csv plus the
/// SVG learning-curve and latent-scatter plots into `out_dir`.
void export_results(const std::vector<RoundRecord>& records,
                    const std::vector<TrialResult>& paml_trials,
                    const std::vector<OracleResult>& oracle, const std::string& out_dir);

// CSV helpers shared with the CLI.
void write_records_csv(const std::vector<RoundRecord>& records, const std::string& path);
std::vector<RoundRecord> read_records_csv(const std::string& path);
void write_curves_svg(const std::vector<CurvePoint>& curves, const std::string& metric,
                      double oracle_level, bool have_oracle, const std::string& path);
void write_latents_svg(const TrialResult& trial, const std::string& path);

}  // namespace paml::harness
