#include "anderson/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>

namespace anderson {

ScaledInterval make_scaled_interval(double center, double base_lo, double base_hi, int L, int d) {
    if (L < 1) throw validation_error("interval scale L must be >= 1");
    if (d < 1) throw validation_error("dimension d must be >= 1");
    // a degenerate [c, c] window is legal and counts only exact hits
    if (base_hi < base_lo) throw validation_error("base interval must satisfy lo <= hi");
    return ScaledInterval{center, base_lo, base_hi, L, d};
}

SpectralData eigendecompose_matrix(const Matrix& mat, bool want_vectors, const BoxGeometry& geometry,
                                   const PerturbationScheme& scheme) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver;
    solver.compute(mat, want_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
        throw compute_error("eigendecomposition failed to converge (dim=" + std::to_string(mat.rows()) +
                            ", d=" + std::to_string(geometry.d) + ", side=" + std::to_string(geometry.side) + ")");
    SpectralData spec;
    spec.eigenvalues = solver.eigenvalues();
    if (want_vectors) spec.eigenvectors = solver.eigenvectors();
    spec.geometry = geometry;
    spec.scheme = scheme;
    return spec;
}

SpectralData eigendecompose(const HamiltonianMatrix& h, bool want_vectors) {
    return eigendecompose_matrix(h.mat, want_vectors, h.geometry, h.scheme);
}

Vector brute_force_oracle(const Matrix& mat) {
    const long n = mat.rows();
    if (n > 8) throw validation_error("brute-force oracle is restricted to dimension <= 8");
    if (mat.cols() != n) throw validation_error("oracle requires a square matrix");
    Matrix a = mat;

    auto off_norm = [&a, n]() {
        double s = 0.0;
        for (long p = 0; p < n; ++p)
            for (long q = p + 1; q < n; ++q) s += 2.0 * a(p, q) * a(p, q);
        return std::sqrt(s);
    };

    for (int sweep = 0; sweep < 128 && off_norm() >= 1e-14; ++sweep) {
        for (long p = 0; p < n; ++p) {
            for (long q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (long k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (long k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    if (off_norm() >= 1e-14) throw compute_error("Jacobi iteration did not reach off-diagonal norm < 1e-14");

    Vector ev = a.diagonal();
    std::sort(ev.begin(), ev.end());
    return ev;
}

long count_in_window(const SpectralData& spec, double lo, double hi) {
    const auto first = std::lower_bound(spec.eigenvalues.begin(), spec.eigenvalues.end(), lo);
    const auto last = std::upper_bound(spec.eigenvalues.begin(), spec.eigenvalues.end(), hi);
    return last >= first ? static_cast<long>(last - first) : 0;
}

long count_in_interval(const SpectralData& spec, const ScaledInterval& iv) {
    return count_in_window(spec, iv.lo(), iv.hi());
}

MultiplicityCensus multiplicity_census(const SpectralData& spec, double lo, double hi, double gap_tolerance) {
    if (!(gap_tolerance > 0.0)) throw validation_error("gap_tolerance must be > 0");
    MultiplicityCensus census;
    census.gap_tolerance = gap_tolerance;

    const auto& ev = spec.eigenvalues;
    long i = 0;
    const long n = ev.size();
    while (i < n && ev[i] < lo) ++i;
    while (i < n && ev[i] <= hi) {
        long j = i + 1;
        double sum = ev[i];
        while (j < n && ev[j] <= hi && ev[j] - ev[j - 1] <= gap_tolerance) {
            sum += ev[j];
            ++j;
        }
        const int mult = static_cast<int>(j - i);
        census.clusters.emplace_back(sum / mult, mult);
        census.max_multiplicity = std::max(census.max_multiplicity, mult);
        i = j;
    }
    return census;
}

std::vector<VectorDiagnostics> localization_diagnostics(const SpectralData& spec, double lo, double hi) {
    if (!spec.eigenvectors)
        throw validation_error("localization diagnostics require eigenvectors");
    const Matrix& vecs = *spec.eigenvectors;
    const BoxGeometry& g = spec.geometry;
    const long n_sites = site_count(g);

    std::vector<VectorDiagnostics> out;
    for (long j = 0; j < spec.eigenvalues.size(); ++j) {
        const double e = spec.eigenvalues[j];
        if (e < lo || e > hi) continue;

        // Per-site mass, summing fiber channels.
        Vector w = Vector::Zero(n_sites);
        for (long idx = 0; idx < vecs.rows(); ++idx) w[idx / g.fiber_dim] += vecs(idx, j) * vecs(idx, j);
        const double total = w.sum();
        const double pr = total * total / w.squaredNorm();

        long x_max = 0;
        w.maxCoeff(&x_max);

        // Least-squares slope of log|v| against l1 distance from the peak.
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        long points = 0;
        for (long x = 0; x < n_sites; ++x) {
            if (w[x] <= 0.0) continue;
            const double dist = static_cast<double>(l1_distance(g, x, x_max));
            const double logv = 0.5 * std::log(w[x]);
            sx += dist;
            sy += logv;
            sxx += dist * dist;
            sxy += dist * logv;
            ++points;
        }
        double rate = std::numeric_limits<double>::infinity();
        const double denom = points * sxx - sx * sx;
        if (points >= 2 && denom > 0.0) rate = -(points * sxy - sx * sy) / denom;

        out.push_back(VectorDiagnostics{j, e, pr, rate});
    }
    return out;
}

double max_residual(const SpectralData& spec, const Matrix& mat) {
    if (!spec.eigenvectors) throw validation_error("residual check requires eigenvectors");
    const Matrix& v = *spec.eigenvectors;
    double worst = 0.0;
    for (long j = 0; j < spec.eigenvalues.size(); ++j) {
        const double r = (mat * v.col(j) - spec.eigenvalues[j] * v.col(j)).norm();
        worst = std::max(worst, r);
    }
    return worst;
}

double max_orthonormality_defect(const SpectralData& spec) {
    if (!spec.eigenvectors) throw validation_error("orthonormality check requires eigenvectors");
    const Matrix& v = *spec.eigenvectors;
    const Matrix gram = v.transpose() * v;
    return (gram - Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
}

} // namespace anderson
