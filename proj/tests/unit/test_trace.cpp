#include <doctest.h>

#include <cmath>
#include <optional>

#include "anderson/trace.hpp"
#include "test_util.hpp"

using namespace anderson;

namespace {

// Window around the eigenvalue cluster closest to `target`, provided the
// cluster (eigenvalues within `cluster_tol` of each other) is isolated from
// the rest of the spectrum by at least `min_gap`. Handles the exactly paired
// spectra of fiber models.
std::optional<ScaledInterval> isolated_window(const SpectralData& spec, double target, double min_gap,
                                              double cluster_tol = 1e-9) {
    const Vector& ev = spec.eigenvalues;
    long j = 0;
    for (long i = 1; i < ev.size(); ++i)
        if (std::abs(ev[i] - target) < std::abs(ev[j] - target)) j = i;
    long first = j, last = j;
    while (first > 0 && ev[first] - ev[first - 1] <= cluster_tol) --first;
    while (last + 1 < ev.size() && ev[last + 1] - ev[last] <= cluster_tol) ++last;
    const double gap_lo = first > 0 ? ev[first] - ev[first - 1] : 1e9;
    const double gap_hi = last + 1 < ev.size() ? ev[last + 1] - ev[last] : 1e9;
    if (std::min(gap_lo, gap_hi) < min_gap) return std::nullopt;
    const double center = 0.5 * (ev[first] + ev[last]);
    const double half = 0.5 * (ev[last] - ev[first]) + min_gap / 3.0;
    return make_scaled_interval(center, -half, half, 1, spec.geometry.d);
}

SpectralData decompose(const BoxGeometry& g, const PerturbationScheme& s, const Vector& omega) {
    return eigendecompose(assemble_hamiltonian(g, s, omega), true);
}

} // namespace

TEST_CASE("weighted trace of a single eigenvalue is that eigenvalue") {
    const auto scheme = PerturbationScheme::rank_one();
    const BoxGeometry g = make_box(1, 4, scheme);
    const DisorderSpec disorder{DisorderLaw::uniform, 3.0, 2.0, 17};
    for (std::uint64_t r = 0; r < 20; ++r) {
        const SpectralData spec = decompose(g, scheme, sample_disorder(disorder, r, site_count(g)));
        const auto window = isolated_window(spec, 0.0, 0.2);
        if (!window) continue;
        const WeightedTraceReport report = weighted_trace(spec, *window);
        REQUIRE(report.count == 1);
        CHECK(report.value == window->center);
        CHECK(report.gradient == report.occupations.col(0));
        CHECK(report.gradient.sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("weighted trace of two eigenvalues is their mean") {
    SpectralData spec;
    spec.eigenvalues = Vector(4);
    spec.eigenvalues << -3.0, 0.25, 0.75, 3.0;
    spec.eigenvectors = Matrix::Identity(4, 4);
    spec.geometry = box_from_side(1, 4, PerturbationScheme::rank_one());
    const WeightedTraceReport report = weighted_trace(spec, make_scaled_interval(0.5, -0.4, 0.4, 1, 1));
    CHECK(report.count == 2);
    CHECK(report.value == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("gradient is nonnegative with unit l1 norm for every scheme") {
    struct Case {
        PerturbationScheme scheme;
        int half_side;
    };
    const Case cases[] = {{PerturbationScheme::rank_one(), 10},
                          {PerturbationScheme::polymer(2), 10},
                          {PerturbationScheme::fiber(2), 4}};
    for (const auto& c : cases) {
        const BoxGeometry g = make_box(1, c.half_side, c.scheme);
        const DisorderSpec disorder{DisorderLaw::uniform, 5.0, 2.0, 71};
        int tested = 0;
        for (std::uint64_t r = 0; r < 40 && tested < 12; ++r) {
            const SpectralData spec = decompose(g, c.scheme, sample_disorder(disorder, r, index_count(c.scheme, g)));
            const auto window = isolated_window(spec, 0.0, 0.1);
            if (!window) continue;
            const WeightedTraceReport report = weighted_trace(spec, *window);
            CHECK(report.gradient.minCoeff() >= 0.0);
            CHECK(std::abs(report.gradient.lpNorm<1>() - 1.0) <= 1e-10);
            CHECK(report.value >= window->lo());
            CHECK(report.value <= window->hi());
            ++tested;
        }
        CHECK(tested > 0);
    }
}

TEST_CASE("degenerate fiber pairs reproduce the scalar occupation") {
    // fiber m=2 is the scalar model tensored with the 2-dim identity, so each
    // eigenvalue doubles and the multiplicity-averaged gradient must match the
    // scalar eigenvector's site occupation.
    const long n = 9;
    const auto fiber = PerturbationScheme::fiber(2);
    const auto scalar = PerturbationScheme::rank_one();
    const BoxGeometry gf = box_from_side(1, n, fiber);
    const BoxGeometry gs = box_from_side(1, n, scalar);
    const DisorderSpec disorder{DisorderLaw::uniform, 4.0, 2.0, 5150};
    int tested = 0;
    for (std::uint64_t r = 0; r < 30 && tested < 5; ++r) {
        const Vector omega = sample_disorder(disorder, r, n);
        const SpectralData scalar_spec = decompose(gs, scalar, omega);
        const auto scalar_window = isolated_window(scalar_spec, 0.0, 0.2);
        if (!scalar_window) continue;
        const WeightedTraceReport scalar_report = weighted_trace(scalar_spec, *scalar_window);

        const SpectralData fiber_spec = decompose(gf, fiber, omega);
        const WeightedTraceReport fiber_report = weighted_trace(fiber_spec, *scalar_window);
        REQUIRE(fiber_report.count == 2 * scalar_report.count);
        CHECK((fiber_report.gradient - scalar_report.gradient).cwiseAbs().maxCoeff() <= 1e-12);
        ++tested;
    }
    CHECK(tested >= 3);
}

TEST_CASE("empty window is an explicit error") {
    const auto scheme = PerturbationScheme::rank_one();
    const BoxGeometry g = make_box(1, 2, scheme);
    const SpectralData spec = decompose(g, scheme, Vector::Zero(site_count(g)));
    CHECK_THROWS_WITH_AS(weighted_trace(spec, make_scaled_interval(50.0, -1.0, 1.0, 10, 1)),
                         doctest::Contains("no eigenvalues in window"), compute_error);
}

TEST_CASE("trace is nondecreasing in each coupling") {
    const auto scheme = PerturbationScheme::rank_one();
    const BoxGeometry g = make_box(1, 6, scheme);
    const DisorderSpec disorder{DisorderLaw::uniform, 4.0, 2.0, 29};
    const double delta = 1e-3;
    int tested = 0;
    for (std::uint64_t r = 0; r < 30 && tested < 10; ++r) {
        const Vector omega = sample_disorder(disorder, r, site_count(g));
        const SpectralData spec = decompose(g, scheme, omega);
        const auto window = isolated_window(spec, 0.0, 0.15);
        if (!window) continue;
        const WeightedTraceReport base = weighted_trace(spec, *window);
        for (long s = 0; s < omega.size(); s += 3) {
            Vector shifted = omega;
            shifted[s] += delta;
            const SpectralData moved = decompose(g, scheme, shifted);
            if (count_in_interval(moved, *window) != base.count) continue;
            CHECK(weighted_trace(moved, *window).value >= base.value - 1e-10);
        }
        ++tested;
    }
    CHECK(tested > 0);
}

TEST_CASE("distant windows separate the traces and their gradients") {
    const auto scheme = PerturbationScheme::rank_one();
    const BoxGeometry g = make_box(1, 10, scheme);
    const double K = 8.0;
    const DisorderSpec disorder{DisorderLaw::uniform, K, 2.0, 4242};
    const ScaledInterval iv_lo = make_scaled_interval(-8.5, -5.0, 5.0, 10, 1);
    const ScaledInterval iv_hi = make_scaled_interval(8.5, -5.0, 5.0, 10, 1);
    int tested = 0;
    for (std::uint64_t r = 0; r < 200 && tested < 20; ++r) {
        const SpectralData spec = decompose(g, scheme, sample_disorder(disorder, r, site_count(g)));
        if (count_in_interval(spec, iv_lo) < 1 || count_in_interval(spec, iv_hi) < 1) continue;
        const WeightedTraceReport lo = weighted_trace(spec, iv_lo);
        const WeightedTraceReport hi = weighted_trace(spec, iv_hi);
        const double separation = std::abs(lo.value - hi.value);
        CHECK(separation > 4.0 - (iv_lo.width() + iv_hi.width()));
        // l1 lower bound on the gradient difference
        CHECK((lo.gradient - hi.gradient).lpNorm<1>() >= (separation - 4.0) / K - 1e-6);
        ++tested;
    }
    CHECK(tested >= 10);
}

TEST_CASE("euler identity holds exactly in the trivial cases") {
    const auto scheme = PerturbationScheme::rank_one();

    const BoxGeometry single = make_box(1, 0, scheme);
    Vector omega1(1);
    omega1 << 2.5;
    CHECK(euler_identity_residual(single, scheme, omega1, make_scaled_interval(2.5, -1.0, 1.0, 1, 1)) == 0.0);

    const BoxGeometry g = make_box(1, 3, scheme);
    const Vector zero = Vector::Zero(site_count(g));
    const SpectralData spec = decompose(g, scheme, zero);
    const auto window = isolated_window(spec, 0.4, 0.2);
    REQUIRE(window.has_value());
    CHECK(euler_identity_residual(g, scheme, zero, *window) <= 1e-12);
}

TEST_CASE("euler identity residual stays below 1e-8") {
    const auto scheme = PerturbationScheme::rank_one();
    const BoxGeometry g = make_box(1, 10, scheme);
    const DisorderSpec disorder{DisorderLaw::uniform, 5.0, 2.0, 31};
    int tested = 0;
    for (std::uint64_t r = 0; r < 40 && tested < 15; ++r) {
        const Vector omega = sample_disorder(disorder, r, site_count(g));
        const SpectralData spec = decompose(g, scheme, omega);
        const auto window = isolated_window(spec, 0.0, 0.05);
        if (!window) continue;
        CHECK(euler_identity_residual(g, scheme, omega, *window) <= 1e-8);
        ++tested;
    }
    CHECK(tested >= 10);
}

TEST_CASE("analytic gradient matches finite differences") {
    const double h = 1e-5;

    SUBCASE("single site model") {
        const auto scheme = PerturbationScheme::rank_one();
        const BoxGeometry g = make_box(1, 0, scheme);
        Vector omega(1);
        omega << -1.25;
        const SpectralData spec = decompose(g, scheme, omega);
        const WeightedTraceReport report = weighted_trace(spec, make_scaled_interval(-1.25, -1.0, 1.0, 1, 1));
        CHECK(report.gradient[0] == 1.0);
        CHECK(gradient_fd_check(g, scheme, omega, make_scaled_interval(-1.25, -1.0, 1.0, 1, 1), h) <= 1e-9);
    }

    SUBCASE("rank one and polymer chains") {
        const PerturbationScheme schemes[] = {PerturbationScheme::rank_one(), PerturbationScheme::polymer(2)};
        for (const auto& scheme : schemes) {
            const BoxGeometry g = make_box(1, 10, scheme);
            const DisorderSpec disorder{DisorderLaw::uniform, 5.0, 2.0, 83};
            int tested = 0;
            for (std::uint64_t r = 0; r < 60 && tested < 6; ++r) {
                const Vector omega = sample_disorder(disorder, r, index_count(scheme, g));
                const SpectralData spec = decompose(g, scheme, omega);
                const auto window = isolated_window(spec, 0.0, 0.08);
                if (!window) continue;
                CHECK(gradient_fd_check(g, scheme, omega, *window, h) <= 1e-6);
                ++tested;
            }
            CHECK(tested >= 3);
        }
    }
}

TEST_CASE("window whose edge sits inside the +-h band is reported unstable") {
    const auto scheme = PerturbationScheme::rank_one();
    const BoxGeometry g = make_box(1, 0, scheme); // single site: eigenvalue = omega_0
    Vector omega(1);
    omega << 0.0;
    const double h = 1e-5;
    // +h pushes the eigenvalue just past the upper edge
    const ScaledInterval iv = make_scaled_interval(0.0, -1.0, h / 2.0, 1, 1);
    CHECK_THROWS_WITH_AS(gradient_fd_check(g, scheme, omega, iv, h), doctest::Contains("unstable window"),
                         compute_error);
}

TEST_CASE("jacobian determinant fixtures") {
    WeightedTraceReport a, b;
    a.gradient = Vector(2);
    a.gradient << 0.6, 0.4;
    b.gradient = Vector(2);
    b.gradient << 0.3, 0.7;

    const JacobianReport report = jacobian_pair(a, b, 0, 1);
    CHECK(report.value == doctest::Approx(0.30).epsilon(1e-15));
    CHECK(report.max_abs == doctest::Approx(0.30).epsilon(1e-15));
    CHECK(report.grad_t_i == 0.6);
    CHECK(report.grad_tp_j == 0.7);

    const JacobianReport swapped = jacobian_pair(a, b, 1, 0);
    CHECK(swapped.value == -report.value);

    const JacobianReport same = jacobian_pair(a, a, 0, 1);
    CHECK(same.value == 0.0);

    CHECK_THROWS_AS(jacobian_pair(a, b, 1, 1), validation_error);
    CHECK_THROWS_AS(jacobian_pair(a, b, 0, 5), validation_error);
}

TEST_CASE("max squared jacobian dominates the l1 gradient difference") {
    // max_{i != j} J_ij^2 >= (2^3 / n^5) ||grad T - grad T'||_1^2 on
    // realizations where both distant windows are occupied.
    const auto scheme = PerturbationScheme::rank_one();
    const BoxGeometry g = make_box(1, 10, scheme);
    const DisorderSpec disorder{DisorderLaw::uniform, 8.0, 2.0, 606};
    const ScaledInterval iv_lo = make_scaled_interval(-8.5, -5.0, 5.0, 10, 1);
    const ScaledInterval iv_hi = make_scaled_interval(8.5, -5.0, 5.0, 10, 1);
    const double n5 = std::pow(static_cast<double>(site_count(g)), 5);
    int tested = 0;
    for (std::uint64_t r = 0; r < 200 && tested < 25; ++r) {
        const SpectralData spec = decompose(g, scheme, sample_disorder(disorder, r, site_count(g)));
        if (count_in_interval(spec, iv_lo) < 1 || count_in_interval(spec, iv_hi) < 1) continue;
        const WeightedTraceReport lo = weighted_trace(spec, iv_lo);
        const WeightedTraceReport hi = weighted_trace(spec, iv_hi);
        const JacobianReport jac = jacobian_pair(lo, hi, 0, 1);
        const double diff = (lo.gradient - hi.gradient).lpNorm<1>();
        CHECK(jac.max_abs * jac.max_abs >= (8.0 / n5) * diff * diff);
        ++tested;
    }
    CHECK(tested >= 10);
}

TEST_CASE("minor inequality fixtures and random sweep") {
    Vector u(2), v(2);
    u << 1.0, 0.0;
    v << 0.0, 1.0;
    const MinorInequalityResult basis = minor_inequality_check(u, v);
    CHECK(basis.lhs == 1.0);
    CHECK(basis.rhs == doctest::Approx(0.03125).epsilon(1e-15));
    CHECK(basis.holds);

    const MinorInequalityResult equal = minor_inequality_check(u, u);
    CHECK(equal.lhs == 0.0);
    CHECK(equal.rhs == 0.0);
    CHECK(equal.holds);

    v << -0.2, 1.2;
    CHECK_THROWS_AS(minor_inequality_check(u, v), validation_error);
    v << 0.5, 0.5001;
    CHECK_THROWS_WITH_AS(minor_inequality_check(u, v), doctest::Contains("normalized"), validation_error);

    testutil::Rng rng(321);
    for (int trial = 0; trial < 1000; ++trial) {
        const long n = 2 + rng.index(49);
        Vector a(n), b(n);
        for (long i = 0; i < n; ++i) {
            a[i] = rng.uniform();
            b[i] = rng.uniform();
        }
        a /= a.lpNorm<1>();
        b /= b.lpNorm<1>();
        CHECK(minor_inequality_check(a, b).holds);
    }
}

TEST_CASE("hessian of the single site model vanishes") {
    const auto scheme = PerturbationScheme::rank_one();
    const BoxGeometry g = make_box(1, 0, scheme);
    Vector omega(1);
    omega << 0.75;
    const Matrix hess = hessian_fd(g, scheme, omega, make_scaled_interval(0.75, -1.0, 1.0, 1, 1), 1e-4);
    CHECK(hess.cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("finite-difference hessian is symmetric") {
    const auto scheme = PerturbationScheme::rank_one();
    const BoxGeometry g = make_box(1, 6, scheme);
    const DisorderSpec disorder{DisorderLaw::uniform, 5.0, 2.0, 11};
    int tested = 0;
    for (std::uint64_t r = 0; r < 40 && tested < 5; ++r) {
        const Vector omega = sample_disorder(disorder, r, site_count(g));
        const SpectralData spec = decompose(g, scheme, omega);
        const auto window = isolated_window(spec, 0.0, 0.2);
        if (!window) continue;
        Matrix hess;
        try {
            hess = hessian_fd(g, scheme, omega, *window, 1e-4 * 5.0);
        } catch (const compute_error&) {
            continue;
        }
        const double scale = std::max(hess.cwiseAbs().maxCoeff(), 1e-12);
        CHECK((hess - hess.transpose()).cwiseAbs().maxCoeff() <= 1e-6 * scale);
        ++tested;
    }
    CHECK(tested >= 3);
}

TEST_CASE("hessian probe validates its exponent range") {
    HessianProbeParams params;
    params.alpha = 0.9;
    params.L_values = {8, 16};
    CHECK_THROWS_AS(hessian_scaling_probe(params), validation_error);
}
