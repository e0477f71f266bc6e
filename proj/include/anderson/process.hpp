#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "anderson/spectral.hpp"
#include "anderson/stats.hpp"

// Disorder-averaged estimators for the local eigenvalue point processes:
// Wegner and extended-Minami tails on a single ell-cube, joint decorrelation
// of counts at two distant energies, the covering-array independence defect,
// the count distribution with per-cube jump sizes, and the multiplicity
// census sweep. Realizations are independent work units; aggregation is
// performed in realization order so results are independent of scheduling.

namespace anderson {

using ordered_json = nlohmann::ordered_json;

inline constexpr std::uint64_t kBatchSize = 256;

struct EstimateRecord {
    std::string name;
    double value = 0.0;
    double ci_halfwidth = 0.0;
    long n_realizations = 0;
    std::uint64_t seed = 0;
    ordered_json params = ordered_json::object();
};

// Per-batch aggregate state. All estimator observables are integers, so
// merging in batch order is exact; the compensated slot carries any
// real-valued observables in deterministic order.
struct Tally {
    std::vector<std::int64_t> sums;
    std::map<int, std::int64_t> hist;
    std::map<int, std::int64_t> jump_hist;
    std::int64_t max_value = 0;
    CompensatedSum fsum;
    std::uint64_t count = 0;

    void merge(const Tally& later);
};

struct Kernel {
    std::string statistic;
    std::size_t n_sums = 0;
    std::function<void(std::uint64_t realization, Tally&)> eval;
    std::function<std::vector<EstimateRecord>(const Tally&, std::uint64_t n)> finalize;
};

struct SweepOptions {
    int workers = 1;
    std::uint64_t start_batch = 0;
    std::optional<std::uint64_t> max_batches;
    std::function<void(std::uint64_t batches_done, const Tally&)> on_checkpoint;
};

struct SweepResult {
    Tally tally;
    std::uint64_t batches_done = 0;
    bool complete = false;
};

// Runs realizations [start_batch*kBatchSize, n) in batches over a worker
// pool; batch tallies merge in batch index order regardless of completion
// order. A failing batch is retried once, then the sweep aborts.
SweepResult sweep_realizations(const Kernel& kernel, std::uint64_t n_realizations, Tally initial,
                               const SweepOptions& opts);

std::vector<EstimateRecord> run_kernel(const Kernel& kernel, std::uint64_t n_realizations, int workers = 1);

// One ell-cube observed through scaled windows.
struct CubeProtocol {
    BoxGeometry cube;
    PerturbationScheme scheme;
    DisorderSpec disorder;
};

// Partition of Lambda_L into N_L = floor(box_side/cube_side)^d disjoint
// ell-cubes anchored at the low corner; leftover boundary sites are ignored.
struct CoveringConfig {
    BoxGeometry box;
    BoxGeometry cube;
    PerturbationScheme scheme;
    int L = 0;
    int ell = 0;
    long cubes_per_dim = 0;
    long n_cubes = 0;
};

CoveringConfig make_covering(int d, int L, int ell, const PerturbationScheme& scheme);

// Global scheme index (into the disorder sequence of Lambda_L) for a local
// matrix index of cube p. Distinct cubes touch disjoint index sets.
long covering_global_index(const CoveringConfig& cov, long cube, long local_matrix_index);

Matrix cube_hamiltonian(const CoveringConfig& cov, long cube, const DisorderSpec& disorder,
                        std::uint64_t realization);

struct CountSample {
    std::uint64_t realization = 0;
    std::vector<int> eta_i;
    std::vector<int> eta_j;
    long zeta_i = 0;
    long zeta_j = 0;
};

CountSample covering_counts(const CoveringConfig& cov, const DisorderSpec& disorder, std::uint64_t realization,
                            const ScaledInterval& iv_i, const ScaledInterval* iv_j = nullptr);

// Kernel factories. `base_params` is copied into every emitted record so a
// record is re-runnable from its parameters alone.
Kernel make_wegner_kernel(const CubeProtocol& p, const ScaledInterval& window, std::uint64_t record_seed,
                          ordered_json base_params);
Kernel make_minami_kernel(const CubeProtocol& p, const ScaledInterval& window, int m, std::uint64_t record_seed,
                          ordered_json base_params);
Kernel make_decorrelation_kernel(const CubeProtocol& p, const ScaledInterval& window_i,
                                 const ScaledInterval& window_j, std::uint64_t record_seed,
                                 ordered_json base_params);
Kernel make_independence_kernel(const CoveringConfig& cov, const DisorderSpec& disorder,
                                const ScaledInterval& window_i, const ScaledInterval& window_j,
                                std::uint64_t record_seed, ordered_json base_params);
Kernel make_counts_kernel(const CoveringConfig& cov, const DisorderSpec& disorder, const ScaledInterval& window,
                          std::uint64_t record_seed, ordered_json base_params);
Kernel make_multiplicity_kernel(const CubeProtocol& p, double window_lo, double window_hi, double gap_tolerance,
                                int m, std::uint64_t record_seed, ordered_json base_params);

// Defect estimate from indicator counts; exposed so synthetic count streams
// can exercise the estimator directly.
std::vector<EstimateRecord> independence_records(std::int64_t n_both, std::int64_t n_i, std::int64_t n_j,
                                                 std::uint64_t n, std::uint64_t record_seed,
                                                 const ordered_json& base_params);

// Convenience single-call estimators (thin wrappers over the kernels).
EstimateRecord wegner_estimate(const CubeProtocol& p, const ScaledInterval& window, std::uint64_t n,
                               int workers = 1);
std::vector<EstimateRecord> minami_statistic(const CubeProtocol& p, const ScaledInterval& window, int m,
                                             std::uint64_t n, int workers = 1);
std::vector<EstimateRecord> joint_decorrelation(const CubeProtocol& p, const ScaledInterval& window_i,
                                                const ScaledInterval& window_j, std::uint64_t n, int workers = 1);
std::vector<EstimateRecord> independence_defect(const CoveringConfig& cov, const DisorderSpec& disorder,
                                                const ScaledInterval& window_i, const ScaledInterval& window_j,
                                                std::uint64_t n, int workers = 1);
std::vector<EstimateRecord> count_distribution(const CoveringConfig& cov, const DisorderSpec& disorder,
                                               const ScaledInterval& window, std::uint64_t n, int workers = 1);
std::vector<EstimateRecord> multiplicity_sweep(const CubeProtocol& p, double window_lo, double window_hi,
                                               double gap_tolerance, int m, std::uint64_t n, int workers = 1);

} // namespace anderson
