#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "anderson/lattice.hpp"

// Full symmetric eigendecomposition and the spectral statistics derived from
// it: interval counts, multiplicity clustering, localization diagnostics, and
// an independent cyclic-Jacobi oracle for small matrices.

namespace anderson {

struct SpectralData {
    Vector eigenvalues; // ascending
    std::optional<Matrix> eigenvectors;
    BoxGeometry geometry;
    PerturbationScheme scheme;
};

// Energy window E + L^{-d} [a, b].
struct ScaledInterval {
    double center = 0.0;
    double base_lo = -1.0;
    double base_hi = 1.0;
    int L = 1;
    int d = 1;

    double scale() const { return 1.0 / static_cast<double>(ipow(L, d)); }
    double lo() const { return center + base_lo * scale(); }
    double hi() const { return center + base_hi * scale(); }
    double width() const { return (base_hi - base_lo) * scale(); }
};

ScaledInterval make_scaled_interval(double center, double base_lo, double base_hi, int L, int d);

struct MultiplicityCensus {
    std::vector<std::pair<double, int>> clusters; // (representative, multiplicity)
    double gap_tolerance = 0.0;
    int max_multiplicity = 0;
};

struct VectorDiagnostics {
    long index = 0; // column in the decomposition
    double eigenvalue = 0.0;
    double participation_ratio = 0.0;
    double decay_rate = 0.0; // gamma in |v(x)| ~ exp(-gamma |x - x_max|_1)
};

SpectralData eigendecompose(const HamiltonianMatrix& h, bool want_vectors);
SpectralData eigendecompose_matrix(const Matrix& mat, bool want_vectors,
                                   const BoxGeometry& geometry = BoxGeometry{},
                                   const PerturbationScheme& scheme = PerturbationScheme{});

// Cyclic Jacobi rotations iterated until the off-diagonal Frobenius norm
// drops below 1e-14; restricted to dimension <= 8. Independent of the
// eigendecompose path.
Vector brute_force_oracle(const Matrix& mat);

long count_in_window(const SpectralData& spec, double lo, double hi);
long count_in_interval(const SpectralData& spec, const ScaledInterval& iv);

MultiplicityCensus multiplicity_census(const SpectralData& spec, double lo, double hi, double gap_tolerance);

std::vector<VectorDiagnostics> localization_diagnostics(const SpectralData& spec, double lo, double hi);

// Residual and orthonormality checks used by tests and by callers that want
// to assert the decomposition contract explicitly.
double max_residual(const SpectralData& spec, const Matrix& mat);
double max_orthonormality_defect(const SpectralData& spec);

} // namespace anderson
