#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "anderson/errors.hpp"
#include "anderson/rng.hpp"

// Finite-volume generalized Anderson models: box geometry, families of
// finite-rank diagonal projections, bounded iid disorder, and dense assembly
// of H = Delta + sum_j omega_j P_j where Delta is the adjacency operator of
// the box graph (simple restriction, no diagonal shift).

namespace anderson {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr long kDefaultDimensionCap = 4096;

// Box Lambda in Z^d with `side` lattice points per edge. Odd side s = 2L+1
// enumerates {-L,...,L}^d; even side s enumerates {-s/2,...,s/2-1}^d (used by
// polymer schemes with even block side, which cannot tile an odd box).
// Site enumeration is lexicographic in the coordinates, last axis fastest.
struct BoxGeometry {
    int d = 1;
    int side = 1;
    int fiber_dim = 1;
};

enum class SchemeKind { rank_one, polymer, fiber };

// Family {P_j} of orthogonal projections of uniform rank m_k that resolve the
// identity on the box. All three schemes are diagonal in the site x fiber
// basis: rank_one puts one projector per site, polymer one per block of
// block_side^d sites, fiber one per site spanning its fiber_dim channels.
struct PerturbationScheme {
    SchemeKind kind = SchemeKind::rank_one;
    int block_side = 1; // polymer b
    int fiber_dim = 1;  // fiber m

    static PerturbationScheme rank_one() { return {}; }
    static PerturbationScheme polymer(int b) { return {SchemeKind::polymer, b, 1}; }
    static PerturbationScheme fiber(int m) { return {SchemeKind::fiber, 1, m}; }
};

enum class DisorderLaw { uniform, symmetric_beta };

// iid coupling law with bounded density on [-K, K]. Component i of
// realization r is a pure function of (base_seed, r, i).
struct DisorderSpec {
    DisorderLaw law = DisorderLaw::uniform;
    double K = 1.0;
    double beta_a = 2.0; // shape of the symmetric beta density (1-(x/K)^2)^(a-1)
    std::uint64_t base_seed = 0;
};

struct HamiltonianMatrix {
    Matrix mat;
    BoxGeometry geometry;
    PerturbationScheme scheme;
    Vector omega;
};

long ipow(long base, int exp);

inline long site_count(const BoxGeometry& g) { return ipow(g.side, g.d); }
inline long matrix_dim(const BoxGeometry& g) { return site_count(g) * g.fiber_dim; }
inline int coord_min(const BoxGeometry& g) { return -(g.side / 2); }

std::vector<int> site_coords(const BoxGeometry& g, long site);
long site_index(const BoxGeometry& g, const std::vector<int>& coords);
long l1_distance(const BoxGeometry& g, long site_a, long site_b);

// Side of the box at half-side L: 2L+1, except 2L for polymer schemes with
// even block side (an odd box cannot be partitioned into even blocks).
int box_side_for(int half_side, const PerturbationScheme& s);
BoxGeometry make_box(int d, int half_side, const PerturbationScheme& s);
BoxGeometry box_from_side(int d, int side, const PerturbationScheme& s);

int scheme_rank(const PerturbationScheme& s, int d);
long index_count(const PerturbationScheme& s, const BoxGeometry& g);
// Throws validation_error when the scheme cannot tile the box.
void check_scheme(const PerturbationScheme& s, const BoxGeometry& g);
// Scheme index j with omega_j acting on this matrix row/column.
long scheme_index_of(const PerturbationScheme& s, const BoxGeometry& g, long matrix_index);
std::vector<long> projector_support(const PerturbationScheme& s, const BoxGeometry& g, long j);
Matrix projector_matrix(const PerturbationScheme& s, const BoxGeometry& g, long j);

double sample_disorder_component(const DisorderSpec& spec, std::uint64_t realization, std::uint64_t index);
Vector sample_disorder(const DisorderSpec& spec, std::uint64_t realization, long count);

HamiltonianMatrix build_laplacian(const BoxGeometry& g, long dimension_cap = kDefaultDimensionCap);
HamiltonianMatrix assemble_hamiltonian(const BoxGeometry& g, const PerturbationScheme& s,
                                       const Vector& omega, long dimension_cap = kDefaultDimensionCap);

} // namespace anderson
