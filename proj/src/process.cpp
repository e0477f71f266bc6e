#include "anderson/process.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <exception>
#include <mutex>
#include <thread>

namespace anderson {

void Tally::merge(const Tally& later) {
    if (sums.size() < later.sums.size()) sums.resize(later.sums.size(), 0);
    for (std::size_t i = 0; i < later.sums.size(); ++i) sums[i] += later.sums[i];
    for (const auto& [k, v] : later.hist) hist[k] += v;
    for (const auto& [k, v] : later.jump_hist) jump_hist[k] += v;
    max_value = std::max(max_value, later.max_value);
    fsum.add(later.fsum.value());
    count += later.count;
}

namespace {

Tally eval_batch(const Kernel& kernel, std::uint64_t first, std::uint64_t last) {
    Tally t;
    t.sums.assign(kernel.n_sums, 0);
    for (std::uint64_t r = first; r < last; ++r) {
        kernel.eval(r, t);
        ++t.count;
    }
    return t;
}

} // namespace

SweepResult sweep_realizations(const Kernel& kernel, std::uint64_t n_realizations, Tally initial,
                               const SweepOptions& opts) {
    if (opts.workers < 1) throw validation_error("workers must be >= 1");
    const std::uint64_t n_batches = (n_realizations + kBatchSize - 1) / kBatchSize;
    std::uint64_t limit = n_batches;
    if (opts.max_batches) limit = std::min(limit, opts.start_batch + *opts.max_batches);

    SweepResult result;
    result.tally = std::move(initial);
    if (result.tally.sums.size() < kernel.n_sums) result.tally.sums.resize(kernel.n_sums, 0);
    result.batches_done = opts.start_batch;

    auto batch_bounds = [&](std::uint64_t b) {
        return std::pair<std::uint64_t, std::uint64_t>{b * kBatchSize,
                                                       std::min(n_realizations, (b + 1) * kBatchSize)};
    };

    auto run_batch = [&](std::uint64_t b) {
        const auto [first, last] = batch_bounds(b);
        try {
            return eval_batch(kernel, first, last);
        } catch (const std::exception&) {
            // one retry, then give up on the whole run
            return eval_batch(kernel, first, last);
        }
    };

    if (opts.workers == 1) {
        for (std::uint64_t b = opts.start_batch; b < limit; ++b) {
            result.tally.merge(run_batch(b));
            result.batches_done = b + 1;
            if (opts.on_checkpoint) opts.on_checkpoint(result.batches_done, result.tally);
        }
        result.complete = result.batches_done == n_batches;
        return result;
    }

    std::mutex mu;
    std::condition_variable cv;
    std::map<std::uint64_t, Tally> ready;
    std::atomic<std::uint64_t> next_batch{opts.start_batch};
    std::exception_ptr failure;
    std::atomic<bool> abort{false};

    auto worker = [&]() {
        while (!abort.load()) {
            const std::uint64_t b = next_batch.fetch_add(1);
            if (b >= limit) break;
            try {
                Tally t = run_batch(b);
                std::lock_guard<std::mutex> lock(mu);
                ready.emplace(b, std::move(t));
                cv.notify_all();
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!failure) failure = std::current_exception();
                abort.store(true);
                cv.notify_all();
                break;
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(opts.workers));
    for (int w = 0; w < opts.workers; ++w) pool.emplace_back(worker);

    {
        std::unique_lock<std::mutex> lock(mu);
        std::uint64_t expect = opts.start_batch;
        while (expect < limit) {
            cv.wait(lock, [&] { return failure || ready.count(expect) > 0; });
            if (failure) break;
            Tally t = std::move(ready.at(expect));
            ready.erase(expect);
            lock.unlock();
            result.tally.merge(t);
            result.batches_done = ++expect;
            if (opts.on_checkpoint) opts.on_checkpoint(result.batches_done, result.tally);
            lock.lock();
        }
        abort.store(true);
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);

    result.complete = result.batches_done == n_batches;
    return result;
}

std::vector<EstimateRecord> run_kernel(const Kernel& kernel, std::uint64_t n_realizations, int workers) {
    SweepOptions opts;
    opts.workers = workers;
    const SweepResult result = sweep_realizations(kernel, n_realizations, Tally{}, opts);
    return kernel.finalize(result.tally, n_realizations);
}

namespace {

EstimateRecord proportion_record(const std::string& name, std::int64_t hits, std::uint64_t n,
                                 std::uint64_t seed, const ordered_json& params) {
    EstimateRecord rec;
    rec.name = name;
    rec.value = n > 0 ? static_cast<double>(hits) / static_cast<double>(n) : 0.0;
    rec.ci_halfwidth = n > 0 ? wilson_interval(hits, static_cast<long>(n)).halfwidth() : 0.0;
    rec.n_realizations = static_cast<long>(n);
    rec.seed = seed;
    rec.params = params;
    return rec;
}

SpectralData cube_spectrum(const CubeProtocol& p, std::uint64_t realization, bool want_vectors = false) {
    const Vector omega = sample_disorder(p.disorder, realization, index_count(p.scheme, p.cube));
    return eigendecompose(assemble_hamiltonian(p.cube, p.scheme, omega), want_vectors);
}

} // namespace

CoveringConfig make_covering(int d, int L, int ell, const PerturbationScheme& scheme) {
    if (ell < 0 || L < ell) throw validation_error("covering requires 0 <= ell <= L");
    CoveringConfig cov;
    cov.scheme = scheme;
    cov.L = L;
    cov.ell = ell;
    cov.box = make_box(d, L, scheme);
    cov.cube = make_box(d, ell, scheme);
    cov.cubes_per_dim = cov.box.side / cov.cube.side;
    if (cov.cubes_per_dim < 1) throw validation_error("covering produced no cubes; increase L or reduce ell");
    cov.n_cubes = ipow(cov.cubes_per_dim, d);
    return cov;
}

long covering_global_index(const CoveringConfig& cov, long cube, long local_matrix_index) {
    const long local_site = local_matrix_index / cov.cube.fiber_dim;
    const int channel = static_cast<int>(local_matrix_index % cov.cube.fiber_dim);

    // Cube corner in box site units.
    long cube_rem = cube;
    long global_site = 0;
    long local_rem = local_site;
    for (int k = cov.box.d - 1; k >= 0; --k) {
        const long corner = (cube_rem % cov.cubes_per_dim) * cov.cube.side;
        cube_rem /= cov.cubes_per_dim;
        const long within = local_rem % cov.cube.side;
        local_rem /= cov.cube.side;
        global_site += (corner + within) * ipow(cov.box.side, cov.box.d - 1 - k);
    }
    return scheme_index_of(cov.scheme, cov.box, global_site * cov.box.fiber_dim + channel);
}

Matrix cube_hamiltonian(const CoveringConfig& cov, long cube, const DisorderSpec& disorder,
                        std::uint64_t realization) {
    Matrix h = build_laplacian(cov.cube).mat;
    for (long idx = 0; idx < h.rows(); ++idx) {
        const long j = covering_global_index(cov, cube, idx);
        h(idx, idx) += sample_disorder_component(disorder, realization, static_cast<std::uint64_t>(j));
    }
    return h;
}

CountSample covering_counts(const CoveringConfig& cov, const DisorderSpec& disorder, std::uint64_t realization,
                            const ScaledInterval& iv_i, const ScaledInterval* iv_j) {
    CountSample sample;
    sample.realization = realization;
    sample.eta_i.reserve(static_cast<std::size_t>(cov.n_cubes));
    if (iv_j) sample.eta_j.reserve(static_cast<std::size_t>(cov.n_cubes));
    for (long p = 0; p < cov.n_cubes; ++p) {
        const SpectralData spec =
            eigendecompose_matrix(cube_hamiltonian(cov, p, disorder, realization), false, cov.cube, cov.scheme);
        const int ci = static_cast<int>(count_in_interval(spec, iv_i));
        sample.eta_i.push_back(ci);
        sample.zeta_i += ci;
        if (iv_j) {
            const int cj = static_cast<int>(count_in_interval(spec, *iv_j));
            sample.eta_j.push_back(cj);
            sample.zeta_j += cj;
        }
    }
    return sample;
}

Kernel make_wegner_kernel(const CubeProtocol& p, const ScaledInterval& window, std::uint64_t record_seed,
                          ordered_json base_params) {
    Kernel kernel;
    kernel.statistic = "wegner";
    kernel.n_sums = 1;
    kernel.eval = [p, window](std::uint64_t r, Tally& t) {
        if (count_in_interval(cube_spectrum(p, r), window) >= 1) ++t.sums[0];
    };
    kernel.finalize = [record_seed, base_params](const Tally& t, std::uint64_t n) {
        return std::vector<EstimateRecord>{proportion_record("wegner", t.sums[0], n, record_seed, base_params)};
    };
    return kernel;
}

Kernel make_minami_kernel(const CubeProtocol& p, const ScaledInterval& window, int m, std::uint64_t record_seed,
                          ordered_json base_params) {
    if (m < 1) throw validation_error("Minami statistic requires rank m >= 1");
    Kernel kernel;
    kernel.statistic = "minami";
    kernel.n_sums = 3;
    kernel.eval = [p, window, m](std::uint64_t r, Tally& t) {
        const long x = count_in_interval(cube_spectrum(p, r), window);
        if (x > m) ++t.sums[0];
        if (x >= m + 1) {
            const std::int64_t v = static_cast<std::int64_t>(x) * (x - m);
            t.sums[1] += v;
            t.sums[2] += v * v;
        }
    };
    kernel.finalize = [record_seed, base_params](const Tally& t, std::uint64_t n) {
        std::vector<EstimateRecord> records;
        records.push_back(proportion_record("minami.tail", t.sums[0], n, record_seed, base_params));
        EstimateRecord mean;
        mean.name = "minami.product_mean";
        mean.value = n > 0 ? static_cast<double>(t.sums[1]) / static_cast<double>(n) : 0.0;
        mean.ci_halfwidth = mean_ci_halfwidth(static_cast<double>(t.sums[1]), static_cast<double>(t.sums[2]),
                                              static_cast<long>(n));
        mean.n_realizations = static_cast<long>(n);
        mean.seed = record_seed;
        mean.params = base_params;
        records.push_back(std::move(mean));
        return records;
    };
    return kernel;
}

Kernel make_decorrelation_kernel(const CubeProtocol& p, const ScaledInterval& window_i,
                                 const ScaledInterval& window_j, std::uint64_t record_seed,
                                 ordered_json base_params) {
    Kernel kernel;
    kernel.statistic = "decorrelate";
    kernel.n_sums = 3;
    kernel.eval = [p, window_i, window_j](std::uint64_t r, Tally& t) {
        const SpectralData spec = cube_spectrum(p, r);
        const bool in_i = count_in_interval(spec, window_i) >= 1;
        const bool in_j = count_in_interval(spec, window_j) >= 1;
        if (in_i && in_j) ++t.sums[0];
        if (in_i) ++t.sums[1];
        if (in_j) ++t.sums[2];
    };
    kernel.finalize = [record_seed, base_params](const Tally& t, std::uint64_t n) {
        return std::vector<EstimateRecord>{
            proportion_record("decorrelate.joint", t.sums[0], n, record_seed, base_params),
            proportion_record("decorrelate.marginal_E", t.sums[1], n, record_seed, base_params),
            proportion_record("decorrelate.marginal_Eprime", t.sums[2], n, record_seed, base_params)};
    };
    return kernel;
}

std::vector<EstimateRecord> independence_records(std::int64_t n_both, std::int64_t n_i, std::int64_t n_j,
                                                 std::uint64_t n, std::uint64_t record_seed,
                                                 const ordered_json& base_params) {
    const double nn = static_cast<double>(n);
    const double p_both = n_both / nn;
    const double p_i = n_i / nn;
    const double p_j = n_j / nn;
    const double defect = p_both - p_i * p_j;

    // Delta method for g = p_both - p_i p_j with indicator covariances
    // Cov(p_both, p_i) = p_both (1 - p_i) / n (the joint event is contained
    // in each marginal) and Cov(p_i, p_j) = (p_both - p_i p_j) / n.
    const double v_both = p_both * (1.0 - p_both);
    const double v_i = p_i * (1.0 - p_i);
    const double v_j = p_j * (1.0 - p_j);
    const double c_bi = p_both * (1.0 - p_i);
    const double c_bj = p_both * (1.0 - p_j);
    const double c_ij = p_both - p_i * p_j;
    double var = v_both + p_j * p_j * v_i + p_i * p_i * v_j - 2.0 * p_j * c_bi - 2.0 * p_i * c_bj +
                 2.0 * p_i * p_j * c_ij;
    if (var < 0.0) var = 0.0;

    EstimateRecord rec;
    rec.name = "independence.defect";
    rec.value = std::abs(defect);
    rec.ci_halfwidth = kZ95 * std::sqrt(var / nn);
    rec.n_realizations = static_cast<long>(n);
    rec.seed = record_seed;
    rec.params = base_params;

    return std::vector<EstimateRecord>{
        rec, proportion_record("independence.joint", n_both, n, record_seed, base_params),
        proportion_record("independence.marginal_E", n_i, n, record_seed, base_params),
        proportion_record("independence.marginal_Eprime", n_j, n, record_seed, base_params)};
}

Kernel make_independence_kernel(const CoveringConfig& cov, const DisorderSpec& disorder,
                                const ScaledInterval& window_i, const ScaledInterval& window_j,
                                std::uint64_t record_seed, ordered_json base_params) {
    Kernel kernel;
    kernel.statistic = "independence";
    kernel.n_sums = 3;
    kernel.eval = [cov, disorder, window_i, window_j](std::uint64_t r, Tally& t) {
        const CountSample sample = covering_counts(cov, disorder, r, window_i, &window_j);
        if (sample.zeta_i >= 1 && sample.zeta_j >= 1) ++t.sums[0];
        if (sample.zeta_i >= 1) ++t.sums[1];
        if (sample.zeta_j >= 1) ++t.sums[2];
    };
    kernel.finalize = [record_seed, base_params](const Tally& t, std::uint64_t n) {
        return independence_records(t.sums[0], t.sums[1], t.sums[2], n, record_seed, base_params);
    };
    return kernel;
}

Kernel make_counts_kernel(const CoveringConfig& cov, const DisorderSpec& disorder, const ScaledInterval& window,
                          std::uint64_t record_seed, ordered_json base_params) {
    Kernel kernel;
    kernel.statistic = "counts";
    kernel.n_sums = 2;
    kernel.eval = [cov, disorder, window](std::uint64_t r, Tally& t) {
        const CountSample sample = covering_counts(cov, disorder, r, window);
        ++t.hist[static_cast<int>(sample.zeta_i)];
        t.sums[0] += sample.zeta_i;
        t.sums[1] += sample.zeta_i * sample.zeta_i;
        for (int eta : sample.eta_i)
            if (eta >= 1) ++t.jump_hist[eta];
    };
    kernel.finalize = [record_seed, base_params](const Tally& t, std::uint64_t n) {
        std::vector<EstimateRecord> records;
        const double nn = static_cast<double>(n);
        const double mean = n > 0 ? static_cast<double>(t.sums[0]) / nn : 0.0;
        double var = 0.0;
        if (n > 1) {
            var = (static_cast<double>(t.sums[1]) - nn * mean * mean) / (nn - 1.0);
            if (var < 0.0) var = 0.0;
        }

        EstimateRecord rec_mean;
        rec_mean.name = "counts.mean";
        rec_mean.value = mean;
        rec_mean.ci_halfwidth = mean_ci_halfwidth(static_cast<double>(t.sums[0]),
                                                  static_cast<double>(t.sums[1]), static_cast<long>(n));
        rec_mean.n_realizations = static_cast<long>(n);
        rec_mean.seed = record_seed;
        rec_mean.params = base_params;
        records.push_back(rec_mean);

        EstimateRecord rec_var = rec_mean;
        rec_var.name = "counts.variance";
        rec_var.value = var;
        rec_var.ci_halfwidth = 0.0;
        records.push_back(rec_var);

        EstimateRecord rec_disp = rec_var;
        rec_disp.name = "counts.dispersion";
        rec_disp.value = mean > 0.0 ? var / mean : 0.0;
        records.push_back(rec_disp);

        for (const auto& [bin, c] : t.hist) {
            EstimateRecord rec = proportion_record("counts.hist", c, n, rec_mean.seed, base_params);
            rec.params["bin"] = bin;
            records.push_back(std::move(rec));
        }
        std::int64_t jumps_total = 0;
        for (const auto& [size, c] : t.jump_hist) jumps_total += c;
        for (const auto& [size, c] : t.jump_hist) {
            EstimateRecord rec;
            rec.name = "counts.jump";
            rec.value = jumps_total > 0 ? static_cast<double>(c) / static_cast<double>(jumps_total) : 0.0;
            rec.ci_halfwidth = jumps_total > 0 ? wilson_interval(c, static_cast<long>(jumps_total)).halfwidth() : 0.0;
            rec.n_realizations = static_cast<long>(n);
            rec.seed = rec_mean.seed;
            rec.params = base_params;
            rec.params["size"] = size;
            rec.params["jumps_total"] = jumps_total;
            records.push_back(std::move(rec));
        }
        return records;
    };
    return kernel;
}

Kernel make_multiplicity_kernel(const CubeProtocol& p, double window_lo, double window_hi, double gap_tolerance,
                                int m, std::uint64_t record_seed, ordered_json base_params) {
    if (!(gap_tolerance > 0.0)) throw validation_error("gap_tolerance must be > 0");
    Kernel kernel;
    kernel.statistic = "multiplicity";
    kernel.n_sums = 1;
    kernel.eval = [p, window_lo, window_hi, gap_tolerance, m](std::uint64_t r, Tally& t) {
        const MultiplicityCensus census =
            multiplicity_census(cube_spectrum(p, r), window_lo, window_hi, gap_tolerance);
        t.max_value = std::max(t.max_value, static_cast<std::int64_t>(census.max_multiplicity));
        if (census.max_multiplicity > m) ++t.sums[0];
    };
    kernel.finalize = [record_seed, base_params](const Tally& t, std::uint64_t n) {
        EstimateRecord rec_max;
        rec_max.name = "multiplicity.max";
        rec_max.value = static_cast<double>(t.max_value);
        rec_max.ci_halfwidth = 0.0;
        rec_max.n_realizations = static_cast<long>(n);
        rec_max.seed = record_seed;
        rec_max.params = base_params;
        return std::vector<EstimateRecord>{
            rec_max, proportion_record("multiplicity.violation_fraction", t.sums[0], n, record_seed, base_params)};
    };
    return kernel;
}

EstimateRecord wegner_estimate(const CubeProtocol& p, const ScaledInterval& window, std::uint64_t n, int workers) {
    return run_kernel(make_wegner_kernel(p, window, p.disorder.base_seed, ordered_json::object()), n, workers)
        .front();
}

std::vector<EstimateRecord> minami_statistic(const CubeProtocol& p, const ScaledInterval& window, int m,
                                             std::uint64_t n, int workers) {
    return run_kernel(make_minami_kernel(p, window, m, p.disorder.base_seed, ordered_json::object()), n, workers);
}

std::vector<EstimateRecord> joint_decorrelation(const CubeProtocol& p, const ScaledInterval& window_i,
                                                const ScaledInterval& window_j, std::uint64_t n, int workers) {
    return run_kernel(
        make_decorrelation_kernel(p, window_i, window_j, p.disorder.base_seed, ordered_json::object()), n, workers);
}

std::vector<EstimateRecord> independence_defect(const CoveringConfig& cov, const DisorderSpec& disorder,
                                                const ScaledInterval& window_i, const ScaledInterval& window_j,
                                                std::uint64_t n, int workers) {
    return run_kernel(
        make_independence_kernel(cov, disorder, window_i, window_j, disorder.base_seed, ordered_json::object()), n,
        workers);
}

std::vector<EstimateRecord> count_distribution(const CoveringConfig& cov, const DisorderSpec& disorder,
                                               const ScaledInterval& window, std::uint64_t n, int workers) {
    return run_kernel(make_counts_kernel(cov, disorder, window, disorder.base_seed, ordered_json::object()), n,
                      workers);
}

std::vector<EstimateRecord> multiplicity_sweep(const CubeProtocol& p, double window_lo, double window_hi,
                                               double gap_tolerance, int m, std::uint64_t n, int workers) {
    return run_kernel(
        make_multiplicity_kernel(p, window_lo, window_hi, gap_tolerance, m, p.disorder.base_seed,
                                 ordered_json::object()),
        n, workers);
}

} // namespace anderson
