#include "anderson/trace.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "anderson/stats.hpp"

namespace anderson {

namespace {

long first_in_window(const Vector& ev, double lo) {
    return std::lower_bound(ev.begin(), ev.end(), lo) - ev.begin();
}

// Mean of eigenvalues in the closed window; count returned through k.
double window_mean(const Vector& ev, const ScaledInterval& iv, long& k) {
    const long first = first_in_window(ev, iv.lo());
    long last = first;
    while (last < ev.size() && ev[last] <= iv.hi()) ++last;
    k = last - first;
    if (k == 0) return 0.0;
    double sum = 0.0;
    for (long j = first; j < last; ++j) sum += ev[j];
    return sum / static_cast<double>(k);
}

} // namespace

WeightedTraceReport weighted_trace(const SpectralData& spec, const ScaledInterval& iv) {
    if (!spec.eigenvectors) throw validation_error("weighted trace requires eigenvectors");
    const Vector& ev = spec.eigenvalues;
    const long first = first_in_window(ev, iv.lo());
    long last = first;
    while (last < ev.size() && ev[last] <= iv.hi()) ++last;
    const long k = last - first;
    if (k == 0)
        throw compute_error("no eigenvalues in window [" + std::to_string(iv.lo()) + ", " +
                            std::to_string(iv.hi()) + "]");

    const Matrix& vecs = *spec.eigenvectors;
    const long n_idx = index_count(spec.scheme, spec.geometry);

    WeightedTraceReport report;
    report.count = static_cast<int>(k);
    report.interval = iv;
    report.value = ev.segment(first, k).mean();
    report.occupations = Matrix::Zero(n_idx, k);
    for (long c = 0; c < k; ++c)
        for (long idx = 0; idx < vecs.rows(); ++idx) {
            const long s = scheme_index_of(spec.scheme, spec.geometry, idx);
            report.occupations(s, c) += vecs(idx, first + c) * vecs(idx, first + c);
        }
    report.gradient = report.occupations.rowwise().sum() / static_cast<double>(k);
    return report;
}

double gradient_fd_check(const BoxGeometry& g, const PerturbationScheme& s, const Vector& omega,
                         const ScaledInterval& iv, double step) {
    if (!(step > 0.0)) throw validation_error("finite-difference step must be > 0");
    const SpectralData base = eigendecompose(assemble_hamiltonian(g, s, omega), true);
    const WeightedTraceReport report = weighted_trace(base, iv);

    const long n_idx = index_count(s, g);
    double worst = 0.0;
    for (long c = 0; c < n_idx; ++c) {
        Vector shifted = omega;
        long k_plus = 0, k_minus = 0;

        shifted[c] = omega[c] + step;
        const double t_plus =
            window_mean(eigendecompose(assemble_hamiltonian(g, s, shifted), false).eigenvalues, iv, k_plus);
        shifted[c] = omega[c] - step;
        const double t_minus =
            window_mean(eigendecompose(assemble_hamiltonian(g, s, shifted), false).eigenvalues, iv, k_minus);

        if (k_plus != report.count || k_minus != report.count)
            throw compute_error("unstable window: occupancy changed under +-h shift of coordinate " +
                                std::to_string(c));
        const double fd = (t_plus - t_minus) / (2.0 * step);
        worst = std::max(worst, std::abs(fd - report.gradient[c]));
    }
    const double scale = report.gradient.cwiseAbs().maxCoeff();
    return scale > 0.0 ? worst / scale : worst;
}

double euler_identity_residual(const BoxGeometry& g, const PerturbationScheme& s, const Vector& omega,
                               const ScaledInterval& iv) {
    const HamiltonianMatrix lap = build_laplacian(g);
    const SpectralData spec = eigendecompose(assemble_hamiltonian(g, s, omega), true);
    const WeightedTraceReport report = weighted_trace(spec, iv);

    const Matrix& vecs = *spec.eigenvectors;
    const long first = first_in_window(spec.eigenvalues, iv.lo());
    double lap_mean = 0.0;
    for (long c = 0; c < report.count; ++c) {
        const auto phi = vecs.col(first + c);
        lap_mean += phi.dot(lap.mat * phi);
    }
    lap_mean /= static_cast<double>(report.count);

    return std::abs(omega.dot(report.gradient) - (report.value - lap_mean));
}

JacobianReport jacobian_pair(const WeightedTraceReport& report_e, const WeightedTraceReport& report_ep,
                             long i, long j) {
    if (i == j) throw validation_error("Jacobian pair requires two distinct sites");
    const Vector& u = report_e.gradient;
    const Vector& v = report_ep.gradient;
    if (u.size() != v.size()) throw validation_error("gradient index sets differ between the two reports");
    const long n = u.size();
    if (i < 0 || i >= n || j < 0 || j >= n) throw validation_error("site index out of range");

    JacobianReport report;
    report.i = i;
    report.j = j;
    report.value = u[i] * v[j] - u[j] * v[i];
    report.grad_t_i = u[i];
    report.grad_t_j = u[j];
    report.grad_tp_i = v[i];
    report.grad_tp_j = v[j];
    for (long a = 0; a < n; ++a)
        for (long b = a + 1; b < n; ++b)
            report.max_abs = std::max(report.max_abs, std::abs(u[a] * v[b] - u[b] * v[a]));
    return report;
}

MinorInequalityResult minor_inequality_check(const Vector& u, const Vector& v) {
    const long n = u.size();
    if (v.size() != n) throw validation_error("u and v must have equal length");
    if (n < 2) throw validation_error("minor inequality requires length >= 2");
    if (u.minCoeff() < 0.0 || v.minCoeff() < 0.0) throw validation_error("u and v must be entrywise nonnegative");
    if (std::abs(u.lpNorm<1>() - 1.0) > 1e-12 || std::abs(v.lpNorm<1>() - 1.0) > 1e-12)
        throw validation_error("u and v must be normalized to unit l1 norm (within 1e-12)");

    MinorInequalityResult result;
    for (long a = 0; a < n; ++a)
        for (long b = a + 1; b < n; ++b) {
            const double minor = u[a] * v[b] - u[b] * v[a];
            result.lhs = std::max(result.lhs, minor * minor);
        }
    const double diff = (u - v).lpNorm<1>();
    const double n5 = static_cast<double>(ipow(n, 5));
    result.rhs = diff * diff / (4.0 * n5);
    result.holds = result.lhs >= result.rhs;
    return result;
}

Matrix hessian_fd(const BoxGeometry& g, const PerturbationScheme& s, const Vector& omega,
                  const ScaledInterval& iv, double step) {
    if (!(step > 0.0)) throw validation_error("finite-difference step must be > 0");
    const SpectralData base = eigendecompose(assemble_hamiltonian(g, s, omega), true);
    const WeightedTraceReport base_report = weighted_trace(base, iv);

    const long n_idx = index_count(s, g);
    Matrix hess(n_idx, n_idx);
    for (long c = 0; c < n_idx; ++c) {
        Vector shifted = omega;

        shifted[c] = omega[c] + step;
        const WeightedTraceReport plus =
            weighted_trace(eigendecompose(assemble_hamiltonian(g, s, shifted), true), iv);
        shifted[c] = omega[c] - step;
        const WeightedTraceReport minus =
            weighted_trace(eigendecompose(assemble_hamiltonian(g, s, shifted), true), iv);

        if (plus.count != base_report.count || minus.count != base_report.count)
            throw compute_error("unstable window: occupancy changed under +-h shift of coordinate " +
                                std::to_string(c));
        hess.col(c) = (plus.gradient - minus.gradient) / (2.0 * step);
    }
    return hess;
}

HessianProbeResult hessian_scaling_probe(const HessianProbeParams& params) {
    if (!(params.alpha > 0.0 && params.alpha < 2.0 / 3.0))
        throw validation_error("hessian probe requires 0 < alpha < 2/3");
    if (params.L_values.size() < 2) throw validation_error("hessian probe requires at least two L values");
    if (params.probes < 1) throw validation_error("probes must be >= 1");

    HessianProbeResult result;
    std::vector<double> scales, medians, means;
    for (int L : params.L_values) {
        const int ell = static_cast<int>(std::ceil(std::pow(static_cast<double>(L), params.alpha)));
        const BoxGeometry g = make_box(params.d, ell, params.scheme);
        const ScaledInterval iv =
            make_scaled_interval(params.center, params.base_lo, params.base_hi, L, params.d);
        const double step = params.step_scale * (params.disorder.K > 0.0 ? params.disorder.K : 1.0);
        const long n_idx = index_count(params.scheme, g);

        CompensatedSum acc;
        std::vector<double> max_entries;
        long attempts = 0;
        for (std::uint64_t r = 0;
             static_cast<long>(max_entries.size()) < params.probes && attempts < params.max_attempts;
             ++r, ++attempts) {
            const Vector omega = sample_disorder(params.disorder, r, n_idx);
            try {
                const Matrix hess = hessian_fd(g, params.scheme, omega, iv, step);
                const double top = hess.cwiseAbs().maxCoeff();
                acc.add(top);
                max_entries.push_back(top);
            } catch (const compute_error&) {
                // empty or unstable window; try the next realization
            }
        }
        const long found = static_cast<long>(max_entries.size());
        if (found < params.probes)
            throw compute_error("hessian probe found only " + std::to_string(found) + "/" +
                                std::to_string(params.probes) + " stable windows at L=" + std::to_string(L));
        // The mean is heavy-tailed (rare near-degenerate windows); the median
        // tracks the typical window, mirroring the Wegner-event conditioning.
        std::sort(max_entries.begin(), max_entries.end());
        const double median = found % 2 == 1
                                  ? max_entries[found / 2]
                                  : 0.5 * (max_entries[found / 2 - 1] + max_entries[found / 2]);
        HessianProbeRow row{L, ell, found, attempts, acc.value() / static_cast<double>(found), median};
        result.rows.push_back(row);
        scales.push_back(static_cast<double>(L));
        medians.push_back(row.median_max_entry);
        means.push_back(row.mean_max_entry);
    }
    result.fitted_slope = fit_log_slope(scales, medians).slope;
    result.fitted_slope_mean = fit_log_slope(scales, means).slope;
    return result;
}

} // namespace anderson
