#include "anderson/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace anderson {

long ipow(long base, int exp) {
    long r = 1;
    for (int k = 0; k < exp; ++k) r *= base;
    return r;
}

std::vector<int> site_coords(const BoxGeometry& g, long site) {
    std::vector<int> c(static_cast<std::size_t>(g.d));
    const int lo = coord_min(g);
    for (int k = g.d - 1; k >= 0; --k) {
        c[static_cast<std::size_t>(k)] = lo + static_cast<int>(site % g.side);
        site /= g.side;
    }
    return c;
}

long site_index(const BoxGeometry& g, const std::vector<int>& coords) {
    const int lo = coord_min(g);
    long idx = 0;
    for (int k = 0; k < g.d; ++k) {
        const int off = coords[static_cast<std::size_t>(k)] - lo;
        if (off < 0 || off >= g.side) throw validation_error("site coordinates outside the box");
        idx = idx * g.side + off;
    }
    return idx;
}

long l1_distance(const BoxGeometry& g, long site_a, long site_b) {
    const auto a = site_coords(g, site_a);
    const auto b = site_coords(g, site_b);
    long dist = 0;
    for (int k = 0; k < g.d; ++k)
        dist += std::abs(a[static_cast<std::size_t>(k)] - b[static_cast<std::size_t>(k)]);
    return dist;
}

int box_side_for(int half_side, const PerturbationScheme& s) {
    if (half_side < 0) throw validation_error("half-side L must be >= 0");
    if (s.kind == SchemeKind::polymer && s.block_side % 2 == 0) return 2 * half_side;
    return 2 * half_side + 1;
}

BoxGeometry box_from_side(int d, int side, const PerturbationScheme& s) {
    if (d < 1) throw validation_error("dimension d must be >= 1");
    if (side < 1) throw validation_error("box side must be >= 1");
    BoxGeometry g{d, side, s.kind == SchemeKind::fiber ? s.fiber_dim : 1};
    check_scheme(s, g);
    return g;
}

BoxGeometry make_box(int d, int half_side, const PerturbationScheme& s) {
    return box_from_side(d, box_side_for(half_side, s), s);
}

int scheme_rank(const PerturbationScheme& s, int d) {
    switch (s.kind) {
        case SchemeKind::rank_one: return 1;
        case SchemeKind::polymer: return static_cast<int>(ipow(s.block_side, d));
        case SchemeKind::fiber: return s.fiber_dim;
    }
    return 1;
}

long index_count(const PerturbationScheme& s, const BoxGeometry& g) {
    if (s.kind == SchemeKind::polymer) return ipow(g.side / s.block_side, g.d);
    return site_count(g);
}

void check_scheme(const PerturbationScheme& s, const BoxGeometry& g) {
    switch (s.kind) {
        case SchemeKind::rank_one:
            if (g.fiber_dim != 1) throw validation_error("rank_one scheme requires fiber_dim 1");
            break;
        case SchemeKind::polymer:
            if (g.fiber_dim != 1) throw validation_error("polymer scheme requires fiber_dim 1");
            if (s.block_side < 1) throw validation_error("polymer block side must be >= 1");
            if (g.side % s.block_side != 0)
                throw validation_error("block must divide box side: b=" + std::to_string(s.block_side) +
                                       ", side=" + std::to_string(g.side));
            break;
        case SchemeKind::fiber:
            if (s.fiber_dim < 1) throw validation_error("fiber dimension must be >= 1");
            if (g.fiber_dim != s.fiber_dim) throw validation_error("geometry fiber_dim must equal scheme fiber m");
            break;
    }
}

long scheme_index_of(const PerturbationScheme& s, const BoxGeometry& g, long matrix_index) {
    const long site = matrix_index / g.fiber_dim;
    if (s.kind != SchemeKind::polymer) return site;
    // Site -> block, lexicographic over block coordinates.
    long idx = site;
    long block = 0;
    const long blocks_per_dim = g.side / s.block_side;
    for (int k = g.d - 1; k >= 0; --k) {
        const long off = idx % g.side;
        idx /= g.side;
        block += (off / s.block_side) * ipow(blocks_per_dim, g.d - 1 - k);
    }
    return block;
}

std::vector<long> projector_support(const PerturbationScheme& s, const BoxGeometry& g, long j) {
    if (j < 0 || j >= index_count(s, g)) throw validation_error("projector index out of range");
    std::vector<long> support;
    if (s.kind == SchemeKind::polymer) {
        const long blocks_per_dim = g.side / s.block_side;
        std::vector<long> corner(static_cast<std::size_t>(g.d));
        long b = j;
        for (int k = g.d - 1; k >= 0; --k) {
            corner[static_cast<std::size_t>(k)] = (b % blocks_per_dim) * s.block_side;
            b /= blocks_per_dim;
        }
        const long n_block = ipow(s.block_side, g.d);
        support.reserve(static_cast<std::size_t>(n_block));
        for (long c = 0; c < n_block; ++c) {
            long off = c, site = 0;
            for (int k = g.d - 1; k >= 0; --k) {
                const long within = off % s.block_side;
                off /= s.block_side;
                site += (corner[static_cast<std::size_t>(k)] + within) * ipow(g.side, g.d - 1 - k);
            }
            support.push_back(site);
        }
        // Lexicographic matrix order within the block.
        std::sort(support.begin(), support.end());
    } else {
        support.reserve(static_cast<std::size_t>(g.fiber_dim));
        for (int c = 0; c < g.fiber_dim; ++c) support.push_back(j * g.fiber_dim + c);
    }
    return support;
}

Matrix projector_matrix(const PerturbationScheme& s, const BoxGeometry& g, long j) {
    Matrix p = Matrix::Zero(matrix_dim(g), matrix_dim(g));
    for (long idx : projector_support(s, g, j)) p(idx, idx) = 1.0;
    return p;
}

double sample_disorder_component(const DisorderSpec& spec, std::uint64_t realization, std::uint64_t index) {
    if (spec.K < 0.0) throw validation_error("disorder bound K must be >= 0");
    const std::uint64_t key = chain(chain(spec.base_seed, realization), index);
    switch (spec.law) {
        case DisorderLaw::uniform:
            return spec.K * (2.0 * uniform01(mix64(key)) - 1.0);
        case DisorderLaw::symmetric_beta: {
            if (spec.beta_a < 1.0) throw validation_error("symmetric beta shape a must be >= 1 (bounded density)");
            // Rejection from the uniform envelope; the attempt stream is keyed
            // by the same (seed, realization, index) triple, so the draw stays
            // a pure function of it.
            for (std::uint64_t t = 0;; ++t) {
                const std::uint64_t k1 = mix64(key ^ (2 * t + 1));
                const std::uint64_t k2 = mix64(key ^ (2 * t + 2) ^ kGolden64);
                const double x = 2.0 * uniform01(k1) - 1.0;
                const double accept = std::pow(1.0 - x * x, spec.beta_a - 1.0);
                if (uniform01(k2) <= accept) return spec.K * x;
            }
        }
    }
    return 0.0;
}

Vector sample_disorder(const DisorderSpec& spec, std::uint64_t realization, long count) {
    Vector omega(count);
    for (long i = 0; i < count; ++i)
        omega[i] = sample_disorder_component(spec, realization, static_cast<std::uint64_t>(i));
    return omega;
}

HamiltonianMatrix build_laplacian(const BoxGeometry& g, long dimension_cap) {
    const long dim = matrix_dim(g);
    if (dim > dimension_cap)
        throw validation_error("matrix dimension " + std::to_string(dim) + " exceeds configured cap " +
                               std::to_string(dimension_cap));
    Matrix h = Matrix::Zero(dim, dim);
    const long n_sites = site_count(g);
    for (long site = 0; site < n_sites; ++site) {
        const auto coords = site_coords(g, site);
        for (int k = 0; k < g.d; ++k) {
            // +e_k neighbour only; the pair is written symmetrically.
            if (coords[static_cast<std::size_t>(k)] - coord_min(g) + 1 >= g.side) continue;
            const long nb = site + ipow(g.side, g.d - 1 - k);
            for (int c = 0; c < g.fiber_dim; ++c) {
                h(site * g.fiber_dim + c, nb * g.fiber_dim + c) = 1.0;
                h(nb * g.fiber_dim + c, site * g.fiber_dim + c) = 1.0;
            }
        }
    }
    return HamiltonianMatrix{std::move(h), g, PerturbationScheme{}, Vector::Zero(site_count(g))};
}

HamiltonianMatrix assemble_hamiltonian(const BoxGeometry& g, const PerturbationScheme& s,
                                       const Vector& omega, long dimension_cap) {
    check_scheme(s, g);
    if (omega.size() != index_count(s, g))
        throw validation_error("omega has " + std::to_string(omega.size()) + " components, scheme index set has " +
                               std::to_string(index_count(s, g)));
    HamiltonianMatrix h = build_laplacian(g, dimension_cap);
    const long dim = matrix_dim(g);
    for (long idx = 0; idx < dim; ++idx) h.mat(idx, idx) += omega[scheme_index_of(s, g, idx)];
    h.scheme = s;
    h.omega = omega;
    return h;
}

} // namespace anderson
