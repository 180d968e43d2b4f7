#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <vector>

#include "polyheights/errors.hpp"
#include "polyheights/escape.hpp"

namespace polyheights {

// ---------------------------------------------------------------------------
// Independence classes and fundamental subannuli
// ---------------------------------------------------------------------------

// Positive heights x, y are dependent in degree d when x = d^n y for some
// integer n.  Coordinates of a heights vector fall into N classes; the class
// containing h_1 is listed first, the rest ordered by increasing lifted value.
struct IndependencePartition {
    int d = 2;
    int N = 1;
    std::vector<int> class_of;              // per coordinate
    std::vector<std::vector<int>> classes;  // member coordinates per class
};

namespace detail_heights {

// Least l >= 0 with d^l h >= top (up to rel_tol); the lifted value d^l h
// lands in [top, d*top).
inline std::pair<int, double> lift_to_band(double h, double top, int d, double rel_tol) {
    int l = 0;
    double lifted = h;
    while (lifted < top * (1.0 - rel_tol)) {
        lifted *= d;
        ++l;
        if (l > 4096) throw ZeroHeight("lift_to_band: height vanishes");
    }
    if (lifted > top * (1.0 - rel_tol) && lifted < top * (1.0 + rel_tol)) lifted = top;
    return {l, lifted};
}

}  // namespace detail_heights

inline IndependencePartition independence_classes(const HeightsVector& h,
                                                  double rel_tol = 1e-9) {
    const int dim = static_cast<int>(h.heights.size());
    const int d = h.d;
    for (double x : h.heights)
        if (!(x > 0)) throw ZeroHeight("independence_classes: zero height coordinate");

    // Normalize so h_1 = 1; classes are invariant under stretch.
    std::vector<double> v(h.heights);
    const double top = v.front();
    for (double& x : v) x /= top;

    const int bound =
        static_cast<int>(std::ceil(std::log(v.front() / v.back()) / std::log(double(d)))) + 2;

    std::vector<int> parent(dim);
    for (int i = 0; i < dim; ++i) parent[i] = i;
    auto find = [&](int i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    for (int i = 0; i < dim; ++i)
        for (int j = i + 1; j < dim; ++j) {
            bool related = false;
            double pw = std::pow(double(d), -double(bound));
            for (int n = -bound; n <= bound && !related; ++n, pw *= d)
                if (std::abs(v[i] - pw * v[j]) <= rel_tol * std::max(v[i], pw * v[j]))
                    related = true;
            if (related) parent[find(i)] = find(j);
        }

    std::map<int, std::vector<int>> groups;
    for (int i = 0; i < dim; ++i) groups[find(i)].push_back(i);

    // Order classes by the lifted value of their highest member.
    std::vector<std::pair<double, std::vector<int>>> ordered;
    for (auto& [root, members] : groups) {
        const double rep = v[members.front()];  // heights are sorted descending
        ordered.emplace_back(detail_heights::lift_to_band(rep, 1.0, d, rel_tol).second,
                             members);
    }
    std::sort(ordered.begin(), ordered.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    IndependencePartition part;
    part.d = d;
    part.N = static_cast<int>(ordered.size());
    part.class_of.assign(dim, -1);
    for (int k = 0; k < part.N; ++k) {
        part.classes.push_back(ordered[k].second);
        for (int i : ordered[k].second) part.class_of[i] = k;
    }
    return part;
}

// Integer matrix of the moduli relation m = (1/2pi) K g, where g is the
// vector of lifted class heights sorted increasing.  det K = (-1)^{N-1}(d-1).
inline std::vector<std::vector<std::int64_t>> moduli_matrix(int N, int d) {
    if (N == 1) return {{d - 1}};
    std::vector<std::vector<std::int64_t>> k(N, std::vector<std::int64_t>(N, 0));
    for (int j = 0; j + 1 < N; ++j) {
        k[j][j] = -1;
        k[j][j + 1] = 1;
    }
    k[N - 1][0] = d;
    k[N - 1][N - 1] = -1;
    return k;
}

// Decomposition of the fundamental annulus {M < G < dM} into the N subannuli
// cut by the critical foliated classes, with their moduli.
struct SubannuliDecomposition {
    int d = 2;
    int N = 1;
    std::vector<double> representatives;  // class representative heights, lifted order
    std::vector<int> levels;              // l(c_j): least l with d^l h_j >= h_1
    std::vector<double> lifted;           // strictly increasing, in [M, dM)
    std::vector<double> moduli;           // m_1..m_N, sum (d-1) M / 2pi
    double M = 0.0;
};

inline SubannuliDecomposition subannuli(const HeightsVector& h, double rel_tol = 1e-9) {
    const IndependencePartition part = independence_classes(h, rel_tol);
    const int d = h.d;
    const double M = h.M();

    SubannuliDecomposition dec;
    dec.d = d;
    dec.N = part.N;
    dec.M = M;
    for (const auto& members : part.classes) {
        const double rep = h.heights[members.front()];
        const auto [l, lifted] = detail_heights::lift_to_band(rep, M, d, rel_tol);
        dec.representatives.push_back(rep);
        dec.levels.push_back(l);
        dec.lifted.push_back(lifted);
    }
    for (int j = 0; j + 1 < dec.N; ++j)
        if (dec.lifted[j + 1] - dec.lifted[j] <= rel_tol * dec.lifted[j + 1])
            throw DegenerateLift("subannuli: lifted class heights coincide; classes should have merged");

    const auto K = moduli_matrix(dec.N, d);
    dec.moduli.assign(dec.N, 0.0);
    for (int i = 0; i < dec.N; ++i) {
        double s = 0;
        for (int j = 0; j < dec.N; ++j) s += static_cast<double>(K[i][j]) * dec.lifted[j];
        dec.moduli[i] = s / (2.0 * std::numbers::pi);
        if (!(dec.moduli[i] > 0))
            throw DegenerateLift("subannuli: nonpositive modulus");
    }
    return dec;
}

// Scalar stretch action on heights: G(s.f) = s G(f).
inline HeightsVector stretch(const HeightsVector& h, double s) {
    if (!(s > 0)) throw DomainError("stretch: s must be positive");
    HeightsVector out = h;
    for (double& x : out.heights) x *= s;
    return out;
}

// Point tau = t + i s of the upper half-plane driving the wring deformation.
struct WringParameter {
    double t = 0.0;
    double s = 1.0;
};

// Per-subannulus wring vector (2pi m_j t / ((d-1) M) + i s)_j.
inline std::vector<Complex> wring_vector(const SubannuliDecomposition& dec,
                                         const WringParameter& tau) {
    if (!(tau.s > 0)) throw DomainError("wring_vector: Im tau must be positive");
    std::vector<Complex> out;
    out.reserve(dec.N);
    for (double m : dec.moduli)
        out.emplace_back(2.0 * std::numbers::pi * m * tau.t / ((dec.d - 1) * dec.M), tau.s);
    return out;
}

// Barycentric coordinates of the projectivized decomposition: x_j =
// 2pi m_j / (d-1), requires M = 1.
inline std::vector<double> simplex_coords(const SubannuliDecomposition& dec) {
    if (std::abs(dec.M - 1.0) > 1e-12)
        throw NotNormalized("simplex_coords: decomposition must have M = 1");
    std::vector<double> x;
    x.reserve(dec.N);
    for (double m : dec.moduli) x.push_back(2.0 * std::numbers::pi * m / (dec.d - 1));
    return x;
}

// ---------------------------------------------------------------------------
// Simplicial structure on the projectivized shift locus of heights
// ---------------------------------------------------------------------------

// A cell is labeled by integers only: for each coordinate of the (descending,
// h_1-normalized) heights vector, the independence class it belongs to
// (class 0 contains h_1; classes ordered by increasing lifted value) and its
// level l_j >= 0.  The geometric cell is the injective affine image of the
// open simplex {1 = lam_0 < lam_1 < ... < lam_{N-1} < d} via
// h_j = lam_{class_j} d^{-level_j}, in barycentric gap coordinates
// x_k = (lam_{k+1} - lam_k)/(d-1) with lam_N := d.
struct HeightCell {
    int N = 1;
    std::vector<int> class_of;  // size d-1, coordinate 0 pinned to class 0
    std::vector<int> level_of;  // size d-1, coordinate 0 pinned to level 0
    int dimension() const { return N - 1; }

    friend bool operator<(const HeightCell& a, const HeightCell& b) {
        if (a.N != b.N) return a.N < b.N;
        if (a.class_of != b.class_of) return a.class_of < b.class_of;
        return a.level_of < b.level_of;
    }
    friend bool operator==(const HeightCell& a, const HeightCell& b) {
        return a.N == b.N && a.class_of == b.class_of && a.level_of == b.level_of;
    }
};

// Heights vector at barycentric coordinates bary (size N, positive, sum 1).
inline HeightsVector cell_heights(const HeightCell& cell, int d,
                                  const std::vector<double>& bary) {
    std::vector<double> lambda(cell.N + 1);
    lambda[0] = 1.0;
    for (int k = 0; k < cell.N; ++k) lambda[k + 1] = lambda[k] + (d - 1) * bary[k];
    HeightsVector h;
    h.d = d;
    for (std::size_t j = 0; j < cell.class_of.size(); ++j)
        h.heights.push_back(lambda[cell.class_of[j]] *
                            std::pow(double(d), -double(cell.level_of[j])));
    return h;
}

inline HeightsVector cell_sample(const HeightCell& cell, int d) {
    return cell_heights(cell, d, std::vector<double>(cell.N, 1.0 / cell.N));
}

// Chart of an edge cell (N = 2): x -> (1 + (d-1)x)/d^{n_j} on the moving
// class, endpoints giving the two vertex height vectors.
inline HeightsVector edge_param(const HeightCell& edge, int d, double x) {
    if (edge.N != 2) throw DomainError("edge_param: cell is not an edge");
    if (!(x > 0.0) || !(x < 1.0)) throw DomainError("edge_param: x must lie in (0,1)");
    return cell_heights(edge, d, {x, 1.0 - x});
}

// Facet obtained by collapsing barycentric gap k: for k < N-1 the classes
// k and k+1 merge; for k = N-1 class N-1 wraps onto class 0 one level up.
inline HeightCell merge_classes(const HeightCell& cell, int k) {
    HeightCell out = cell;
    out.N = cell.N - 1;
    if (k < cell.N - 1) {
        for (std::size_t j = 0; j < out.class_of.size(); ++j)
            if (out.class_of[j] > k) --out.class_of[j];
    } else {
        for (std::size_t j = 0; j < out.class_of.size(); ++j)
            if (out.class_of[j] == cell.N - 1) {
                out.class_of[j] = 0;
                --out.level_of[j];
            }
    }
    return out;
}

struct HeightComplex {
    int d = 2;
    int depth = 1;
    std::vector<HeightCell> cells;          // sorted by (dimension, label)
    std::vector<std::vector<int>> facets;   // per cell, indices of boundary cells
    std::map<HeightCell, int> index;

    int cell_count(int dimension) const {
        int c = 0;
        for (const auto& cell : cells)
            if (cell.dimension() == dimension) ++c;
        return c;
    }
};

// Enumerates all cells of the simplicial structure on the projectivized
// shift-locus heights whose levels are bounded by depth: exactly the cells
// contained in {h_j >= d^{-depth}}.  The label constraints below encode that
// the heights stay weakly descending over the whole open cell:
// consecutive coordinates must satisfy l_{j+1} > l_j, or l_{j+1} = l_j with
// class_{j+1} <= class_j.
inline HeightComplex build_height_complex(int d, int depth) {
    if (d < 2 || depth < 1) throw DomainError("build_height_complex: need d >= 2, depth >= 1");
    const int dim = d - 1;

    HeightComplex complex;
    complex.d = d;
    complex.depth = depth;

    std::vector<int> cls(dim, 0), lvl(dim, 0);
    auto emit = [&]() {
        int maxc = 0;
        std::vector<char> used(dim, 0);
        for (int j = 0; j < dim; ++j) {
            maxc = std::max(maxc, cls[j]);
            used[cls[j]] = 1;
        }
        for (int k = 0; k <= maxc; ++k)
            if (!used[k]) return;  // class indices must be onto
        HeightCell cell;
        cell.N = maxc + 1;
        cell.class_of = cls;
        cell.level_of = lvl;
        complex.cells.push_back(std::move(cell));
    };

    // Depth-first over coordinates 1..dim-1; coordinate 0 is (class 0, level 0).
    auto rec = [&](auto&& self, int j) -> void {
        if (j == dim) {
            emit();
            return;
        }
        const int prev_c = cls[j - 1], prev_l = lvl[j - 1];
        const int max_class = dim - 1;
        for (int k = 0; k <= max_class; ++k) {
            const int lmin = std::max(k >= 1 ? 1 : 0, k <= prev_c ? prev_l : prev_l + 1);
            for (int l = lmin; l <= depth; ++l) {
                cls[j] = k;
                lvl[j] = l;
                self(self, j + 1);
            }
        }
    };
    if (dim == 1)
        emit();
    else
        rec(rec, 1);

    std::sort(complex.cells.begin(), complex.cells.end(),
              [](const HeightCell& a, const HeightCell& b) {
                  if (a.N != b.N) return a.N < b.N;
                  return a < b;
              });
    for (int i = 0; i < static_cast<int>(complex.cells.size()); ++i)
        complex.index[complex.cells[i]] = i;

    complex.facets.resize(complex.cells.size());
    for (int i = 0; i < static_cast<int>(complex.cells.size()); ++i) {
        const HeightCell& cell = complex.cells[i];
        for (int k = 0; k < cell.N - 1 + (cell.N > 1 ? 1 : 0); ++k) {
            const HeightCell face = merge_classes(cell, k);
            const auto it = complex.index.find(face);
            if (it == complex.index.end())
                throw DomainError("build_height_complex: facet fell outside the enumeration");
            complex.facets[i].push_back(it->second);
        }
    }
    return complex;
}

}  // namespace polyheights
