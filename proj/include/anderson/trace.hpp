#pragma once

#include <vector>

#include "anderson/spectral.hpp"

// Weighted-trace calculus over a scaled energy window: the multiplicity-
// weighted mean of in-window eigenvalues, its analytic omega-gradient from
// projector occupations, finite-difference cross-checks, the pairwise 2x2
// Jacobian determinants, the normalized minor inequality, and the Hessian
// scaling probe.

namespace anderson {

struct WeightedTraceReport {
    double value = 0.0; // T(omega)
    int count = 0;      // eigenvalues in the window, with multiplicity
    Vector gradient;    // dT/domega_s, indexed by the scheme index set
    ScaledInterval interval;
    Matrix occupations; // ||P_s phi_j||^2, index set x in-window eigenvectors
};

struct JacobianReport {
    long i = 0;
    long j = 0;
    double value = 0.0; // det [[dT/di, dT/dj], [dT'/di, dT'/dj]]
    double grad_t_i = 0.0, grad_t_j = 0.0;
    double grad_tp_i = 0.0, grad_tp_j = 0.0;
    double max_abs = 0.0; // max |J_ij| over all pairs i != j
};

struct MinorInequalityResult {
    double lhs = 0.0; // max_{j != k} (u_j v_k - u_k v_j)^2
    double rhs = 0.0; // ||u - v||_1^2 / (4 n^5)
    bool holds = false;
};

struct HessianProbeRow {
    int L = 0;
    int ell = 0;
    long probes = 0;
    long attempts = 0;
    double mean_max_entry = 0.0;
    double median_max_entry = 0.0;
};

struct HessianProbeResult {
    std::vector<HessianProbeRow> rows;
    double fitted_slope = 0.0;        // slope of log median_max_entry vs log L
    double fitted_slope_mean = 0.0;   // same fit on the heavy-tailed mean
};

struct HessianProbeParams {
    int d = 1;
    double alpha = 0.5; // ell(L) = ceil(L^alpha), requires 0 < alpha < 2/3
    std::vector<int> L_values;
    PerturbationScheme scheme;
    DisorderSpec disorder;
    double center = 0.0;
    double base_lo = -1.0;
    double base_hi = 1.0;
    long probes = 32;
    long max_attempts = 100000;
    double step_scale = 1e-4; // FD step = step_scale * K
};

WeightedTraceReport weighted_trace(const SpectralData& spec, const ScaledInterval& iv);

// Max |analytic - central FD| over coordinates, relative to the largest
// gradient component. Throws compute_error when a +-h shift changes the
// window occupancy.
double gradient_fd_check(const BoxGeometry& g, const PerturbationScheme& s, const Vector& omega,
                         const ScaledInterval& iv, double step);

// |omega . grad T - (T - mean <phi, Delta phi>)| for the in-window cluster.
double euler_identity_residual(const BoxGeometry& g, const PerturbationScheme& s, const Vector& omega,
                               const ScaledInterval& iv);

JacobianReport jacobian_pair(const WeightedTraceReport& report_e, const WeightedTraceReport& report_ep,
                             long i, long j);

MinorInequalityResult minor_inequality_check(const Vector& u, const Vector& v);

// Hessian of T by central finite differences of the analytic gradient.
Matrix hessian_fd(const BoxGeometry& g, const PerturbationScheme& s, const Vector& omega,
                  const ScaledInterval& iv, double step);

HessianProbeResult hessian_scaling_probe(const HessianProbeParams& params);

} // namespace anderson
