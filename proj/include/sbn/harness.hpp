#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sbn/datasynth.hpp"
#include "sbn/losses.hpp"
#include "sbn/supernet.hpp"

namespace sbn {

/// Parsed experiment configuration. The JSON schema is strict: every field
/// is validated before any compute and unknown keys are rejected.
struct ExperimentConfig {
    std::string experiment;  // gan | nas | adv | style
    std::string variant;
    std::vector<std::uint64_t> seeds;
    std::size_t batch_size = 0;
    std::string out_dir;

    // gan / adv / style
    std::size_t steps = 0;
    double lr = 0.0;

    // gan
    std::size_t classes = 4;
    std::size_t latent_dim = 4;
    std::size_t diag_every = 50;

    // nas
    std::size_t epochs = 0;
    double lr_w = 0.0;
    double lr_alpha = 0.0;

    // adv
    PgdConfig pgd;
    std::size_t eval_pgd_iters = 20;
    std::size_t eval_size = 256;

    // style
    bool identity_sandwich = false;
};

ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config_json(const std::string& json_text);

/// One metric record per event; every record carries
/// {experiment, variant, seed, step} plus numeric metric fields.
struct MetricsWriter {
    explicit MetricsWriter(const std::string& path);
    ~MetricsWriter();
    MetricsWriter(const MetricsWriter&) = delete;
    MetricsWriter& operator=(const MetricsWriter&) = delete;

    void write(const std::string& experiment, const std::string& variant,
               std::uint64_t seed, std::size_t step,
               const std::vector<std::pair<std::string, double>>& fields,
               std::optional<std::size_t> stage = std::nullopt,
               const std::vector<std::size_t>* derived_arch = nullptr,
               const std::vector<std::vector<double>>* alpha = nullptr);

    struct Impl;
    Impl* impl;
};

// Per-seed results surfaced for tests; every runner also writes
// metrics_seed<seed>.jsonl into the run directory.

struct GanSeedResult {
    std::vector<double> mode_dist;  // per class: |generated mean - target mean|
    std::vector<double> l_g;        // per step
    std::vector<double> l_d;
};

struct NasSeedResult {
    std::vector<std::vector<std::size_t>> derived_per_epoch;  // index 0 = init
    std::vector<double> train_loss;                           // per epoch
    std::vector<double> val_loss;
    std::size_t norm_param_count = 0;
};

struct AdvSeedResult {
    double sa_adv_branch = 0.0;  // clean accuracy through the adversarial branch
    double ra_adv_branch = 0.0;  // accuracy under attack
    double sa_clean_branch = 0.0;
    double ra_clean_branch = 0.0;
    double ra_untrained = 0.0;  // same-architecture fresh model under attack
};

struct StyleSeedResult {
    std::vector<double> content_train;  // index 0 = init
    std::vector<double> style_train;
    std::vector<double> content_val;
    std::vector<double> style_val;
};

GanSeedResult run_gan_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                           const std::string& out_dir);
NasSeedResult run_nas_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                           const std::string& out_dir);
AdvSeedResult run_adv_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                           const std::string& out_dir);
StyleSeedResult run_style_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                               const std::string& out_dir);

/// Runs every seed (parallel workers, one metrics file per seed) and writes
/// the run manifest. Timestamps live only in the manifest.
void run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

/// Converts a run directory's JSON-lines metrics into one CSV per metric
/// with columns (step, seed, raw, ema); ema decay 0.9.
void export_plotdata(const std::string& run_dir);

/// Classification task with a planted optimum: four gaussian blobs at
/// (+-a, +-a) in the first two feature dims, class = XOR of the signs.
/// Only a feature-mixing op followed by a nonlinearity separates it, so the
/// full linear candidate is the strictly best supernet op.
struct PlantedTask {
    LabeledDataset train;
    LabeledDataset val;
    static constexpr std::size_t kPlantedOpIndex = 3;  // AffineLarge
};
PlantedTask planted_xor_task(std::uint64_t seed, std::size_t n_train, std::size_t n_val,
                             std::size_t dim);

/// Entry point used by the CLI binary. Returns the process exit code:
/// 0 success, 2 config error, 3 numerical failure (NaN).
int cli_main(int argc, char** argv);

}  // namespace sbn
