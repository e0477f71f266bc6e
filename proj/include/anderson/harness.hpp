#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "anderson/process.hpp"

// Experiment orchestration: key-value config files, validation that reports
// every violation, per-L kernels with deterministic seed derivation,
// checkpointed batch sweeps that can resume after interruption, and ndjson /
// CSV persistence. Identical configs produce byte-identical records.ndjson
// regardless of worker count or interruptions.

namespace anderson {

struct ModelConfig {
    int d = 1;
    std::vector<int> L;
    std::optional<double> alpha; // ell = floor(L^alpha)
    std::optional<int> ell;      // fixed cube half-side
    SchemeKind scheme = SchemeKind::rank_one;
    int b = 2;      // polymer block side
    int m = 2;      // fiber rank
    double K = 1.0; // disorder support bound
    DisorderLaw law = DisorderLaw::uniform;
    double beta_a = 2.0;
};

struct StatisticConfig {
    std::string estimator;
    double E = 0.0;
    std::optional<double> Eprime;
    std::pair<double, double> I{-1.0, 1.0};
    std::pair<double, double> J{-1.0, 1.0};
    std::optional<double> gap_tolerance; // default 1e-8 (2d + K)
    bool separation_override = false;
};

struct RunConfig {
    std::uint64_t n_realizations = 0;
    std::uint64_t base_seed = 0;
    int workers = 1;
    std::string out = "out";
    long dimension_cap = kDefaultDimensionCap;
};

struct ExperimentConfig {
    ModelConfig model;
    StatisticConfig statistic;
    RunConfig run;
};

inline const std::vector<std::string> kEstimators = {"wegner",       "minami", "decorrelate",
                                                     "independence", "counts", "multiplicity"};

ExperimentConfig parse_config_text(const std::string& text);
// Parses and validates; throws validation_error listing every violation.
ExperimentConfig load_config(const std::string& path);
std::vector<std::string> validate_config(const ExperimentConfig& config);

PerturbationScheme config_scheme(const ModelConfig& model);
int config_ell(const ModelConfig& model, int L);
double default_gap_tolerance(const ExperimentConfig& config);
// Level seed: stable 64-bit mix of (base_seed, L); realization seeds chain
// from it inside the sampler, so worker count never affects any draw.
std::uint64_t level_seed(std::uint64_t base_seed, int L);
std::string config_hash(const ExperimentConfig& config);
ordered_json config_to_json(const ExperimentConfig& config);

Kernel make_level_kernel(const ExperimentConfig& config, int L);

struct LevelState {
    int L = 0;
    std::uint64_t n_batches = 0;
    std::uint64_t batches_done = 0;
    bool emitted = false;
    long records = 0;
    Tally state;
};

struct RunManifest {
    std::string version;
    std::string config_hash;
    std::string statistic;
    std::uint64_t batch_size = kBatchSize;
    bool complete = false;
    std::string started_at;
    std::string finished_at;
    long records_total = 0;
    std::uint64_t records_bytes = 0;
    std::vector<LevelState> levels;
};

struct RunOptions {
    // Merge at most this many batches before checkpointing and returning
    // (exercises interruption + resume); unset means run to completion.
    std::optional<std::uint64_t> max_batches;
};

// Executes the configured estimator across all L values. Output layout under
// config.run.out: manifest.json, records.ndjson, tables/<statistic>_<L>.csv.
RunManifest run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

ordered_json record_to_json(const EstimateRecord& record);
std::string format_double(double x); // shortest round-trip decimal

} // namespace anderson
